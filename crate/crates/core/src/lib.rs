//! Close-out netting workbench.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`cnl`] | controlled-language conclusion sentences: parse, render, vocabulary |
//! | [`opinion`] | five-part legal opinion, relationship facts, scope and jurisdiction checks |
//! | [`range`] | exact basis-point probability ranges and likelihood mappings |
//! | [`engine`] | factor ranges, weighted aggregation, netting determinations |
//! | [`exposure`] | gross and net close-out exposure |
//! | [`cost`] | sector review-cost model |
//! | [`store`] | append-only versioned store, audit chain, trigger events, expiry sweep |
//! | [`workbench`] | store-backed operations used by the CLI and the service |
//! | [`batch`] | parallel (rayon) and sequential batch evaluation |

pub mod batch;
pub mod cnl;
pub mod cost;
pub mod engine;
pub mod exposure;
pub mod opinion;
pub mod range;
pub mod store;
pub mod workbench;

pub use cnl::{Likelihood, ParseError, Polarity, Sentence, Term, VerbForm, VocabularyRegistry};
pub use cost::{total_cost, CostParams, CostReport, LevelParams};
pub use engine::{
    aggregate_risk, determine, factor_range, AdverseDirection, BlockingReason, DeterminationInput, EngineError, FactorAssessment,
    FactorStatus, Flag, InstitutionRiskPolicy, NettingDetermination, RiskFactor,
};
pub use exposure::{compute_exposures, ExposureReport, Trade};
pub use opinion::{
    check_jurisdiction_coverage, match_scope, CoverageResult, HumanAssessment, LegalOpinion, RelationshipFacts, ScopeMatchResult, Verdict,
    Verification,
};
pub use range::{map_likelihood, LikelihoodMapping, ProbRange};
pub use store::{EntityKind, Store, StoreError, StoredDetermination, TriggerEvent, TriggerKind};
pub use workbench::{DeterminationRequest, PolicyOverrides, WhatIfRequest, Workbench, WorkbenchError};
