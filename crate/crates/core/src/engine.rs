//! Netting determinations: per-factor probability ranges from conclusion
//! sentences, weighted aggregation, and the gate checks that produce the
//! binary flag together with its trace.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnl::{Likelihood, ObjectId, Polarity, PredicateId, Sentence, VocabularyRegistry};
use crate::opinion::{
    check_jurisdiction_coverage, match_scope, CoverageResult, HumanAssessment, ItemKind, LegalOpinion, RelationshipFacts, ScopeMatchResult,
    TaxonomyId, Verdict, Verification,
};
use crate::range::{LikelihoodMapping, ProbRange, FULL_BP};

pub const DEFAULT_VALIDITY_DAYS: u32 = 365;

/// Which outcome of the predicate hurts the institution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AdverseDirection {
    /// e.g. transactions being cherry-picked
    Occurrence,
    /// e.g. collateral not being enforceable
    NonOccurrence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RiskFactor {
    pub object: ObjectId,
    pub predicate: PredicateId,
    pub adverse_direction: AdverseDirection,
    pub weight_bp: u32,
}

impl RiskFactor {
    pub fn new(object: &str, predicate: &str, adverse_direction: AdverseDirection, weight_bp: u32) -> Self {
        RiskFactor { object: ObjectId::new(object), predicate: PredicateId::new(predicate), adverse_direction, weight_bp }
    }

    pub fn id(&self) -> String {
        format!("{}/{}", self.object, self.predicate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MissingFactorPolicy {
    TreatAsUnknown,
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EmptyIntersectionPolicy {
    Block,
    WidestSentence,
}

fn default_missing() -> MissingFactorPolicy {
    MissingFactorPolicy::TreatAsUnknown
}

fn default_empty() -> EmptyIntersectionPolicy {
    EmptyIntersectionPolicy::Block
}

fn all_kinds() -> BTreeSet<ItemKind> {
    ItemKind::ALL.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InstitutionRiskPolicy {
    #[serde(default)]
    pub id: String,
    #[serde(default)]
    pub mapping: LikelihoodMapping,
    pub factors: Vec<RiskFactor>,
    pub threshold_bp: u32,
    #[serde(default = "default_missing")]
    pub missing_factor_policy: MissingFactorPolicy,
    #[serde(default = "default_empty")]
    pub empty_intersection_policy: EmptyIntersectionPolicy,
    /// Unset means the institution default of 365 days.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validity_period_days: Option<u32>,
    /// Item kinds that must not remain Unverified for a Yes.
    #[serde(default = "all_kinds")]
    pub unverified_blocking_kinds: BTreeSet<ItemKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("policy invalid: {0}")]
    PolicyInvalid(String),
    #[error("opinion not found: {0}")]
    OpinionNotFound(String),
    #[error("factor {0} has no resolved range")]
    UnresolvedFactor(String),
}

impl EngineError {
    pub fn reason_id(&self) -> &'static str {
        match self {
            EngineError::PolicyInvalid(_) => "PolicyInvalid",
            EngineError::OpinionNotFound(_) => "OpinionNotFound",
            EngineError::UnresolvedFactor(_) => "UnresolvedFactor",
        }
    }
}

impl InstitutionRiskPolicy {
    pub fn validate(&self, registry: &VocabularyRegistry) -> Result<(), EngineError> {
        let invalid = |m: String| Err(EngineError::PolicyInvalid(m));
        if self.factors.is_empty() {
            return invalid("no risk factors".into());
        }
        let total: u64 = self.factors.iter().map(|f| f.weight_bp as u64).sum();
        if total != FULL_BP as u64 {
            return invalid(format!("factor weights sum to {total} bp, expected 10000"));
        }
        if self.threshold_bp > FULL_BP {
            return invalid(format!("threshold {} bp exceeds 10000", self.threshold_bp));
        }
        let mut seen = BTreeSet::new();
        for f in &self.factors {
            if !seen.insert((&f.object, &f.predicate)) {
                return invalid(format!("duplicate factor {}", f.id()));
            }
            if registry.object(&f.object).is_none() {
                return invalid(format!("factor object {:?} not in vocabulary", f.object.0));
            }
            if registry.predicate(&f.predicate).is_none() {
                return invalid(format!("factor predicate {:?} not in vocabulary", f.predicate.0));
            }
        }
        Ok(())
    }

    pub fn validity_days(&self) -> u32 {
        self.validity_period_days.unwrap_or(DEFAULT_VALIDITY_DAYS)
    }

    pub fn with_threshold(&self, threshold_bp: u32) -> Self {
        InstitutionRiskPolicy { threshold_bp, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FactorStatus {
    Assessed,
    Missing,
    Contradictory,
}

/// How a Missing or Contradictory factor was turned into a usable range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Resolution {
    AsAssessed,
    TreatedAsUnknown,
    WidestSentence,
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UsedSentence {
    pub sentence: Sentence,
    /// Mapped range before polarity handling.
    pub raw: ProbRange,
    /// Probability that the predicate holds.
    pub directed: ProbRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FactorAssessment {
    pub factor_id: String,
    pub weight_bp: u32,
    pub sentences_used: Vec<UsedSentence>,
    pub status: FactorStatus,
    /// Probability of the adverse event; present iff status is Assessed.
    pub adverse_range: Option<ProbRange>,
    pub resolution: Option<Resolution>,
    /// Range fed into aggregation once resolved.
    pub effective_range: Option<ProbRange>,
}

fn adverse(f: &RiskFactor, holds: ProbRange) -> ProbRange {
    match f.adverse_direction {
        AdverseDirection::Occurrence => holds,
        AdverseDirection::NonOccurrence => holds.complement(),
    }
}

/// Intersects every sentence about the factor's (object, predicate) pair.
pub fn factor_range<'a>(
    conclusion: impl IntoIterator<Item = &'a Sentence>,
    factor: &RiskFactor,
    mapping: &LikelihoodMapping,
) -> FactorAssessment {
    let used: Vec<UsedSentence> = conclusion
        .into_iter()
        .filter(|s| s.object == factor.object && s.predicate == factor.predicate)
        .map(|s| {
            let raw = mapping.get(s.likelihood);
            let directed = match s.verb.polarity() {
                Polarity::Positive => raw,
                Polarity::Negated => raw.complement(),
            };
            UsedSentence { sentence: s.clone(), raw, directed }
        })
        .collect();

    let (status, adverse_range) = if used.is_empty() {
        (FactorStatus::Missing, None)
    } else {
        let holds = used.iter().try_fold(ProbRange::FULL, |acc, u| acc.intersect(u.directed));
        match holds {
            Some(r) => (FactorStatus::Assessed, Some(adverse(factor, r))),
            None => (FactorStatus::Contradictory, None),
        }
    };
    FactorAssessment {
        factor_id: factor.id(),
        weight_bp: factor.weight_bp,
        sentences_used: used,
        status,
        adverse_range,
        resolution: (status == FactorStatus::Assessed).then_some(Resolution::AsAssessed),
        effective_range: adverse_range,
    }
}

/// Applies the policy's missing/contradictory rules. Blocked factors carry
/// the full range so the aggregate stays conservative.
pub fn resolve_factor(mut a: FactorAssessment, factor: &RiskFactor, policy: &InstitutionRiskPolicy) -> FactorAssessment {
    let (resolution, range) = match a.status {
        FactorStatus::Assessed => return a,
        FactorStatus::Missing => match policy.missing_factor_policy {
            MissingFactorPolicy::TreatAsUnknown => (Resolution::TreatedAsUnknown, ProbRange::FULL),
            MissingFactorPolicy::Block => (Resolution::Blocked, ProbRange::FULL),
        },
        FactorStatus::Contradictory => match policy.empty_intersection_policy {
            EmptyIntersectionPolicy::Block => (Resolution::Blocked, ProbRange::FULL),
            EmptyIntersectionPolicy::WidestSentence => {
                // first of the widest wins ties
                let widest = a
                    .sentences_used
                    .iter()
                    .map(|u| u.directed)
                    .reduce(|best, r| if r.width() > best.width() { r } else { best })
                    .expect("contradictory implies at least two sentences");
                (Resolution::WidestSentence, adverse(factor, widest))
            }
        },
    };
    a.resolution = Some(resolution);
    a.effective_range = Some(range);
    a
}

/// Combines weighted factor ranges into one overall range.
///
/// Only the linear sum ships; a polynomial combination for dependent factors
/// would implement this trait.
pub trait Aggregator {
    fn combine(&self, weighted: &[(u32, ProbRange)]) -> ProbRange;
}

/// Bound-wise weighted sum: floor on the lower bound, ceiling on the upper.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearSum;

impl Aggregator for LinearSum {
    fn combine(&self, weighted: &[(u32, ProbRange)]) -> ProbRange {
        let total = FULL_BP as u64;
        let lo: u64 = weighted.iter().map(|(w, r)| *w as u64 * r.lo() as u64).sum();
        let hi: u64 = weighted.iter().map(|(w, r)| *w as u64 * r.hi() as u64).sum();
        let lo = lo / total;
        let hi = hi.div_ceil(total);
        ProbRange::new(lo as u32, hi as u32).expect("weights sum to 10000")
    }
}

pub fn aggregate_risk(assessments: &[FactorAssessment], policy: &InstitutionRiskPolicy) -> Result<ProbRange, EngineError> {
    aggregate_with(&LinearSum, assessments, policy)
}

pub fn aggregate_with(
    aggregator: &dyn Aggregator,
    assessments: &[FactorAssessment],
    policy: &InstitutionRiskPolicy,
) -> Result<ProbRange, EngineError> {
    let mut weighted = Vec::with_capacity(policy.factors.len());
    for f in &policy.factors {
        let id = f.id();
        let a = assessments.iter().find(|a| a.factor_id == id).ok_or_else(|| EngineError::UnresolvedFactor(id.clone()))?;
        let r = a.effective_range.ok_or(EngineError::UnresolvedFactor(id))?;
        weighted.push((f.weight_bp, r));
    }
    Ok(aggregator.combine(&weighted))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flag {
    Yes,
    No,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all_fields = "camelCase")]
pub enum BlockingReason {
    NoScopeMatch,
    JurisdictionUncovered { missing: BTreeSet<TaxonomyId> },
    ItemFailed { opinion_id: String, item_id: String },
    ItemUnverified { opinion_id: String, item_id: String },
    MaterialAmendment,
    OpinionExpired { opinion_id: String, age_days: i64, validity_days: u32 },
    OpinionNotYetIssued { opinion_id: String },
    HumanAssessmentMissing,
    ReasoningRejected,
    MissingFactor { factor_id: String },
    ContradictoryFactor { factor_id: String },
    RiskAboveThreshold { upper_bp: u32, threshold_bp: u32 },
}

impl BlockingReason {
    pub fn reason_id(&self) -> &'static str {
        match self {
            BlockingReason::NoScopeMatch => "NoScopeMatch",
            BlockingReason::JurisdictionUncovered { .. } => "JurisdictionUncovered",
            BlockingReason::ItemFailed { .. } => "ItemFailed",
            BlockingReason::ItemUnverified { .. } => "ItemUnverified",
            BlockingReason::MaterialAmendment => "MaterialAmendment",
            BlockingReason::OpinionExpired { .. } => "OpinionExpired",
            BlockingReason::OpinionNotYetIssued { .. } => "OpinionNotYetIssued",
            BlockingReason::HumanAssessmentMissing => "HumanAssessmentMissing",
            BlockingReason::ReasoningRejected => "ReasoningRejected",
            BlockingReason::MissingFactor { .. } => "MissingFactor",
            BlockingReason::ContradictoryFactor { .. } => "ContradictoryFactor",
            BlockingReason::RiskAboveThreshold { .. } => "RiskAboveThreshold",
        }
    }
}

/// Policy as embedded in a trace. The mapping is kept in basis points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PolicySnapshot {
    pub id: String,
    pub mapping_bp: BTreeMap<Likelihood, ProbRange>,
    pub factors: Vec<RiskFactor>,
    pub threshold_bp: u32,
    pub missing_factor_policy: MissingFactorPolicy,
    pub empty_intersection_policy: EmptyIntersectionPolicy,
    pub validity_period_days: Option<u32>,
    pub unverified_blocking_kinds: BTreeSet<ItemKind>,
}

impl From<&InstitutionRiskPolicy> for PolicySnapshot {
    fn from(p: &InstitutionRiskPolicy) -> Self {
        PolicySnapshot {
            id: p.id.clone(),
            mapping_bp: p.mapping.iter().collect(),
            factors: p.factors.clone(),
            threshold_bp: p.threshold_bp,
            missing_factor_policy: p.missing_factor_policy,
            empty_intersection_policy: p.empty_intersection_policy,
            validity_period_days: p.validity_period_days,
            unverified_blocking_kinds: p.unverified_blocking_kinds.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OpinionUse {
    pub id: String,
    pub issued_at: NaiveDate,
    pub age_days: i64,
}

/// Everything a determination depends on and derives, minus wall-clock time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeterminationTrace {
    pub relationship_id: String,
    pub as_of_date: NaiveDate,
    pub flag: Flag,
    pub overall_risk: ProbRange,
    pub blocking_reasons: Vec<BlockingReason>,
    pub warnings: Vec<String>,
    pub opinions_used: Vec<OpinionUse>,
    pub required_jurisdictions: BTreeSet<TaxonomyId>,
    pub scope_matches: Vec<ScopeMatchResult>,
    pub coverage: CoverageResult,
    pub factor_assessments: Vec<FactorAssessment>,
    pub policy: PolicySnapshot,
    pub human_assessment: Option<HumanAssessment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NettingDetermination {
    pub determined_at: DateTime<Utc>,
    pub trace: DeterminationTrace,
}

impl NettingDetermination {
    pub fn flag(&self) -> Flag {
        self.trace.flag
    }

    pub fn opinion_ids(&self) -> impl Iterator<Item = &str> {
        self.trace.opinions_used.iter().map(|o| o.id.as_str())
    }

    /// Canonical bytes of the trace.
    pub fn trace_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.trace).expect("trace serializes")
    }
}

/// Inputs to one determination.
#[derive(Debug, Clone)]
pub struct DeterminationInput<'a> {
    pub facts: &'a RelationshipFacts,
    pub opinions: &'a [LegalOpinion],
    pub policy: &'a InstitutionRiskPolicy,
    pub assessment: Option<&'a HumanAssessment>,
    pub as_of: NaiveDate,
    pub determined_at: DateTime<Utc>,
}

pub fn determine(input: &DeterminationInput<'_>, registry: &VocabularyRegistry) -> Result<NettingDetermination, EngineError> {
    let DeterminationInput { facts, opinions, policy, assessment, as_of, determined_at } = *input;
    policy.validate(registry)?;
    if opinions.is_empty() {
        return Err(EngineError::OpinionNotFound("no opinions supplied".into()));
    }

    let mut blocking = Vec::new();
    let mut warnings = Vec::new();

    // (a) scope
    let scope_matches: Vec<ScopeMatchResult> = opinions.iter().map(|o| match_scope(o, facts)).collect();
    if !scope_matches.iter().any(|m| m.matched) {
        blocking.push(BlockingReason::NoScopeMatch);
    }

    // (b) jurisdictions
    let coverage = check_jurisdiction_coverage(opinions, facts);
    if let CoverageResult::Uncovered { missing } = &coverage {
        blocking.push(BlockingReason::JurisdictionUncovered { missing: missing.clone() });
    }

    // (c) assumptions and qualifications
    for o in opinions {
        for item in o.items() {
            match item.verification {
                Verification::Failed => blocking.push(BlockingReason::ItemFailed { opinion_id: o.id.clone(), item_id: item.id.clone() }),
                Verification::Unverified if policy.unverified_blocking_kinds.contains(&item.kind) => {
                    blocking.push(BlockingReason::ItemUnverified { opinion_id: o.id.clone(), item_id: item.id.clone() })
                }
                _ => {}
            }
        }
    }
    if facts.materially_amended {
        blocking.push(BlockingReason::MaterialAmendment);
    }

    // (d) validity period
    let mut opinions_used = Vec::with_capacity(opinions.len());
    for o in opinions {
        let age_days = (as_of - o.issued_at).num_days();
        if age_days < 0 {
            blocking.push(BlockingReason::OpinionNotYetIssued { opinion_id: o.id.clone() });
        } else if age_days > policy.validity_days() as i64 {
            blocking.push(BlockingReason::OpinionExpired { opinion_id: o.id.clone(), age_days, validity_days: policy.validity_days() });
        }
        opinions_used.push(OpinionUse { id: o.id.clone(), issued_at: o.issued_at, age_days });
    }

    // (e) human sign-off on the reasoning
    match assessment.map(|a| a.verdict) {
        None => blocking.push(BlockingReason::HumanAssessmentMissing),
        Some(Verdict::ReasoningRejected) => blocking.push(BlockingReason::ReasoningRejected),
        Some(Verdict::ReasoningAcceptable) => {}
    }

    // (f) risk
    let factor_assessments: Vec<FactorAssessment> = policy
        .factors
        .iter()
        .map(|f| {
            let a = factor_range(opinions.iter().flat_map(|o| o.sentences()), f, &policy.mapping);
            let a = resolve_factor(a, f, policy);
            match (a.status, a.resolution) {
                (FactorStatus::Missing, Some(Resolution::Blocked)) => {
                    blocking.push(BlockingReason::MissingFactor { factor_id: a.factor_id.clone() })
                }
                (FactorStatus::Missing, _) => warnings.push(format!("factor {} missing from conclusion; treated as unknown", a.factor_id)),
                (FactorStatus::Contradictory, Some(Resolution::Blocked)) => {
                    blocking.push(BlockingReason::ContradictoryFactor { factor_id: a.factor_id.clone() })
                }
                (FactorStatus::Contradictory, _) => {
                    warnings.push(format!("factor {} has contradictory sentences; widest sentence used", a.factor_id))
                }
                _ => {}
            }
            a
        })
        .collect();
    let overall_risk = aggregate_risk(&factor_assessments, policy)?;
    if overall_risk.hi() > policy.threshold_bp {
        blocking.push(BlockingReason::RiskAboveThreshold { upper_bp: overall_risk.hi(), threshold_bp: policy.threshold_bp });
    }

    let flag = if blocking.is_empty() { Flag::Yes } else { Flag::No };
    Ok(NettingDetermination {
        determined_at,
        trace: DeterminationTrace {
            relationship_id: facts.relationship_id.clone(),
            as_of_date: as_of,
            flag,
            overall_risk,
            blocking_reasons: blocking,
            warnings,
            opinions_used,
            required_jurisdictions: facts.required_jurisdictions(),
            scope_matches,
            coverage,
            factor_assessments,
            policy: PolicySnapshot::from(policy),
            human_assessment: assessment.cloned(),
        },
    })
}
