//! Five-part legal opinion, relationship fact patterns, scope matching and
//! the jurisdiction-coverage test.

use std::collections::BTreeSet;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnl::{ParseError, Sentence, VocabularyRegistry};

pub const OPINION_SCHEMA_VERSION: u32 = 1;

/// Jurisdiction, agreement-type, counterparty-type and transaction-type ids
/// are opaque strings.
pub type TaxonomyId = String;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OpinionScope {
    pub agreement_types: BTreeSet<TaxonomyId>,
    pub governing_law: TaxonomyId,
    pub jurisdictions: BTreeSet<TaxonomyId>,
    pub counterparty_types: BTreeSet<TaxonomyId>,
    /// Empty means every transaction type.
    #[serde(default)]
    pub transaction_types: BTreeSet<TaxonomyId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Annotation {
    Positive,
    Neutral,
    Negative,
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verification {
    Unverified,
    Verified,
    Waived,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ItemKind {
    // assumptions
    Factual,
    AgreementRelated,
    ConditionPrecedent,
    // qualifications
    General,
    ScopeLimit,
    JurisdictionRisk,
}

impl ItemKind {
    pub const ALL: [ItemKind; 6] = [
        ItemKind::Factual,
        ItemKind::AgreementRelated,
        ItemKind::ConditionPrecedent,
        ItemKind::General,
        ItemKind::ScopeLimit,
        ItemKind::JurisdictionRisk,
    ];

    pub fn is_assumption(self) -> bool {
        matches!(self, ItemKind::Factual | ItemKind::AgreementRelated | ItemKind::ConditionPrecedent)
    }
}

fn missing() -> Annotation {
    Annotation::Missing
}

fn unverified() -> Verification {
    Verification::Unverified
}

/// An assumption or qualification. Which of the two is given by `kind`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OpinionItem {
    pub id: String,
    pub kind: ItemKind,
    pub text: String,
    #[serde(default = "missing")]
    pub annotation: Annotation,
    #[serde(default = "unverified")]
    pub verification: Verification,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verified_by: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verified_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

impl OpinionItem {
    pub fn new(id: &str, kind: ItemKind, text: &str) -> Self {
        OpinionItem {
            id: id.to_string(),
            kind,
            text: text.to_string(),
            annotation: Annotation::Missing,
            verification: Verification::Unverified,
            verified_by: None,
            verified_at: None,
            notes: None,
        }
    }
}

/// Conclusion entry as stored: canonical text plus the parsed slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConclusionEntry {
    pub text: String,
    pub sentence: Sentence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LegalOpinion {
    pub schema_version: u32,
    pub id: String,
    pub law_firm: String,
    pub issued_at: NaiveDate,
    #[serde(default)]
    pub is_update_of: Option<String>,
    pub scope: OpinionScope,
    pub assumptions: Vec<OpinionItem>,
    pub qualifications: Vec<OpinionItem>,
    pub discussion: String,
    pub conclusion: Vec<ConclusionEntry>,
    pub registry_version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OpinionError {
    #[error("unsupported schemaVersion {0}")]
    SchemaVersion(u32),
    #[error("scope must list at least one agreement type")]
    EmptyAgreementTypes,
    #[error("scope governing law is empty")]
    MissingGoverningLaw,
    #[error("conclusion entry {index}: {source}")]
    Conclusion { index: usize, source: ParseError },
    #[error("conclusion entry {index}: text parses to a different structure than stored")]
    ConclusionMismatch { index: usize },
    #[error("opinion registry version {opinion} is newer than the active registry {active}")]
    RegistryTooOld { opinion: u64, active: u64 },
    #[error("issuedAt {issued} is in the future relative to {today}")]
    IssuedInFuture { issued: NaiveDate, today: NaiveDate },
    #[error("update issued {update} before original {original}")]
    UpdateBeforeOriginal { update: NaiveDate, original: NaiveDate },
    #[error("duplicate item id {0:?}")]
    DuplicateItem(String),
    #[error("item {0:?} has the wrong kind for its section")]
    ItemSection(String),
    #[error("unknown item {0:?}")]
    UnknownItem(String),
    #[error("facts: incorporation jurisdiction is empty")]
    MissingIncorporation,
}

impl OpinionError {
    pub fn reason_id(&self) -> &'static str {
        match self {
            OpinionError::SchemaVersion(_) => "SchemaVersion",
            OpinionError::EmptyAgreementTypes => "EmptyAgreementTypes",
            OpinionError::MissingGoverningLaw => "MissingGoverningLaw",
            OpinionError::Conclusion { source, .. } => source.reason_id(),
            OpinionError::ConclusionMismatch { .. } => "ConclusionMismatch",
            OpinionError::RegistryTooOld { .. } => "RegistryTooOld",
            OpinionError::IssuedInFuture { .. } => "IssuedInFuture",
            OpinionError::UpdateBeforeOriginal { .. } => "UpdateBeforeOriginal",
            OpinionError::DuplicateItem(_) => "DuplicateItem",
            OpinionError::ItemSection(_) => "ItemSection",
            OpinionError::UnknownItem(_) => "UnknownItem",
            OpinionError::MissingIncorporation => "MissingIncorporation",
        }
    }
}

impl LegalOpinion {
    /// Structural checks plus re-parsing every conclusion text.
    pub fn validate(&self, registry: &VocabularyRegistry, today: NaiveDate) -> Result<(), OpinionError> {
        if self.schema_version != OPINION_SCHEMA_VERSION {
            return Err(OpinionError::SchemaVersion(self.schema_version));
        }
        if self.scope.agreement_types.is_empty() {
            return Err(OpinionError::EmptyAgreementTypes);
        }
        if self.scope.governing_law.trim().is_empty() {
            return Err(OpinionError::MissingGoverningLaw);
        }
        if self.registry_version > registry.version {
            return Err(OpinionError::RegistryTooOld { opinion: self.registry_version, active: registry.version });
        }
        if self.issued_at > today {
            return Err(OpinionError::IssuedInFuture { issued: self.issued_at, today });
        }
        let mut seen = BTreeSet::new();
        for item in self.assumptions.iter().chain(&self.qualifications) {
            if !seen.insert(item.id.as_str()) {
                return Err(OpinionError::DuplicateItem(item.id.clone()));
            }
        }
        if let Some(bad) = self.assumptions.iter().find(|i| !i.kind.is_assumption()) {
            return Err(OpinionError::ItemSection(bad.id.clone()));
        }
        if let Some(bad) = self.qualifications.iter().find(|i| i.kind.is_assumption()) {
            return Err(OpinionError::ItemSection(bad.id.clone()));
        }
        for (index, entry) in self.conclusion.iter().enumerate() {
            let parsed = registry.parse(&entry.text).map_err(|source| OpinionError::Conclusion { index, source })?;
            if parsed != entry.sentence {
                return Err(OpinionError::ConclusionMismatch { index });
            }
        }
        Ok(())
    }

    /// Checks the update ordering against the opinion this one replaces.
    pub fn validate_update(&self, original: &LegalOpinion) -> Result<(), OpinionError> {
        if self.issued_at < original.issued_at {
            return Err(OpinionError::UpdateBeforeOriginal { update: self.issued_at, original: original.issued_at });
        }
        Ok(())
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.conclusion.iter().map(|c| &c.sentence)
    }

    pub fn items(&self) -> impl Iterator<Item = &OpinionItem> {
        self.assumptions.iter().chain(&self.qualifications)
    }

    /// Copy-on-write update of one item's verification status.
    pub fn set_verification(
        &self,
        item_id: &str,
        status: Verification,
        analyst_id: &str,
        at: DateTime<Utc>,
        notes: Option<String>,
    ) -> Result<LegalOpinion, OpinionError> {
        let mut next = self.clone();
        let item = next
            .assumptions
            .iter_mut()
            .chain(next.qualifications.iter_mut())
            .find(|i| i.id == item_id)
            .ok_or_else(|| OpinionError::UnknownItem(item_id.to_string()))?;
        item.verification = status;
        item.verified_by = Some(analyst_id.to_string());
        item.verified_at = Some(at);
        if notes.is_some() {
            item.notes = notes;
        }
        Ok(next)
    }

    pub fn set_annotation(&self, item_id: &str, annotation: Annotation) -> Result<LegalOpinion, OpinionError> {
        let mut next = self.clone();
        let item = next
            .assumptions
            .iter_mut()
            .chain(next.qualifications.iter_mut())
            .find(|i| i.id == item_id)
            .ok_or_else(|| OpinionError::UnknownItem(item_id.to_string()))?;
        item.annotation = annotation;
        Ok(next)
    }
}

/// Fact pattern for one trading relationship.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RelationshipFacts {
    pub relationship_id: String,
    pub counterparty_id: String,
    pub counterparty_type: TaxonomyId,
    pub incorporation_jurisdiction: TaxonomyId,
    #[serde(default)]
    pub branch_jurisdiction: Option<TaxonomyId>,
    pub agreement_type: TaxonomyId,
    pub agreement_governing_law: TaxonomyId,
    /// Includes any ancillary contracts needed to effect the netting.
    #[serde(default)]
    pub transaction_governing_laws: BTreeSet<TaxonomyId>,
    #[serde(default)]
    pub transaction_types: BTreeSet<TaxonomyId>,
    #[serde(default)]
    pub collateral_locations: BTreeSet<TaxonomyId>,
    #[serde(default)]
    pub materially_amended: bool,
}

impl RelationshipFacts {
    pub fn validate(&self) -> Result<(), OpinionError> {
        if self.incorporation_jurisdiction.trim().is_empty() {
            return Err(OpinionError::MissingIncorporation);
        }
        Ok(())
    }

    /// Jurisdictions whose law the opinions must address.
    pub fn required_jurisdictions(&self) -> BTreeSet<TaxonomyId> {
        let mut req = BTreeSet::new();
        req.insert(self.incorporation_jurisdiction.clone());
        if let Some(branch) = &self.branch_jurisdiction {
            req.insert(branch.clone());
        }
        req.extend(self.transaction_governing_laws.iter().cloned());
        req.insert(self.agreement_governing_law.clone());
        req
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScopeDimension {
    AgreementType,
    CounterpartyType,
    TransactionTypes,
    GoverningLaw,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "camelCase")]
pub enum DimensionMatch {
    Matched,
    NotMatched { missing: BTreeSet<TaxonomyId> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DimensionResult {
    pub dimension: ScopeDimension,
    #[serde(flatten)]
    pub outcome: DimensionMatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScopeMatchResult {
    pub opinion_id: String,
    pub matched: bool,
    pub dimensions: Vec<DimensionResult>,
}

impl ScopeMatchResult {
    pub fn dimension(&self, d: ScopeDimension) -> &DimensionMatch {
        &self.dimensions.iter().find(|r| r.dimension == d).expect("all dimensions present").outcome
    }
}

fn contains_one(set: &BTreeSet<TaxonomyId>, value: &TaxonomyId) -> DimensionMatch {
    if set.contains(value) {
        DimensionMatch::Matched
    } else {
        DimensionMatch::NotMatched { missing: BTreeSet::from([value.clone()]) }
    }
}

pub fn match_scope(opinion: &LegalOpinion, facts: &RelationshipFacts) -> ScopeMatchResult {
    let scope = &opinion.scope;
    let transactions = if scope.transaction_types.is_empty() {
        DimensionMatch::Matched
    } else {
        let missing: BTreeSet<_> = facts.transaction_types.difference(&scope.transaction_types).cloned().collect();
        if missing.is_empty() {
            DimensionMatch::Matched
        } else {
            DimensionMatch::NotMatched { missing }
        }
    };
    let law = if scope.governing_law == facts.agreement_governing_law {
        DimensionMatch::Matched
    } else {
        DimensionMatch::NotMatched { missing: BTreeSet::from([facts.agreement_governing_law.clone()]) }
    };
    let dimensions = vec![
        DimensionResult { dimension: ScopeDimension::AgreementType, outcome: contains_one(&scope.agreement_types, &facts.agreement_type) },
        DimensionResult {
            dimension: ScopeDimension::CounterpartyType,
            outcome: contains_one(&scope.counterparty_types, &facts.counterparty_type),
        },
        DimensionResult { dimension: ScopeDimension::TransactionTypes, outcome: transactions },
        DimensionResult { dimension: ScopeDimension::GoverningLaw, outcome: law },
    ];
    let matched = dimensions.iter().all(|d| d.outcome == DimensionMatch::Matched);
    ScopeMatchResult { opinion_id: opinion.id.clone(), matched, dimensions }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "camelCase")]
pub enum CoverageResult {
    Covered,
    Uncovered { missing: BTreeSet<TaxonomyId> },
}

impl CoverageResult {
    pub fn is_covered(&self) -> bool {
        matches!(self, CoverageResult::Covered)
    }
}

pub fn check_jurisdiction_coverage<'a>(opinions: impl IntoIterator<Item = &'a LegalOpinion>, facts: &RelationshipFacts) -> CoverageResult {
    let covered: BTreeSet<&TaxonomyId> = opinions.into_iter().flat_map(|o| o.scope.jurisdictions.iter()).collect();
    let missing: BTreeSet<TaxonomyId> = facts.required_jurisdictions().into_iter().filter(|j| !covered.contains(j)).collect();
    if missing.is_empty() {
        CoverageResult::Covered
    } else {
        CoverageResult::Uncovered { missing }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    ReasoningAcceptable,
    ReasoningRejected,
}

/// Analyst sign-off on the discussion section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HumanAssessment {
    pub analyst_id: String,
    pub assessed_at: DateTime<Utc>,
    pub verdict: Verdict,
    #[serde(default)]
    pub notes: String,
}
