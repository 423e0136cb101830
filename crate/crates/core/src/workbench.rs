//! Store-backed operations shared by the CLI and the service.

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnl::{RegistryError, Term, VocabularyRegistry};
use crate::engine::{determine, DeterminationInput, EngineError, InstitutionRiskPolicy, NettingDetermination};
use crate::opinion::{HumanAssessment, LegalOpinion, OpinionError, RelationshipFacts, Verification};
use crate::range::LikelihoodMapping;
use crate::store::{EntityKind, Store, StoreError, StoredDetermination, VersionInfo, REGISTRY_ID};

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Opinion(#[from] OpinionError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

impl WorkbenchError {
    pub fn reason_id(&self) -> &'static str {
        match self {
            WorkbenchError::Store(e) => e.reason_id(),
            WorkbenchError::Engine(e) => e.reason_id(),
            WorkbenchError::Opinion(e) => e.reason_id(),
            WorkbenchError::Registry(e) => e.reason_id(),
        }
    }
}

/// Persisted determination request: everything referenced by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeterminationRequest {
    pub relationship_id: String,
    pub opinion_ids: Vec<String>,
    pub policy_id: String,
    pub assessment: Option<HumanAssessment>,
    pub as_of: NaiveDate,
}

/// Inline policy adjustments for what-if runs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PolicyOverrides {
    #[serde(default)]
    pub threshold_bp: Option<u32>,
    /// Replacement weights keyed by factor id (`object/predicate`).
    #[serde(default)]
    pub weights_bp: Option<std::collections::BTreeMap<String, u32>>,
    #[serde(default)]
    pub mapping: Option<LikelihoodMapping>,
}

impl PolicyOverrides {
    pub fn apply(&self, policy: &InstitutionRiskPolicy) -> InstitutionRiskPolicy {
        let mut p = policy.clone();
        if let Some(t) = self.threshold_bp {
            p.threshold_bp = t;
        }
        if let Some(m) = &self.mapping {
            p.mapping = m.clone();
        }
        if let Some(w) = &self.weights_bp {
            for f in &mut p.factors {
                if let Some(weight) = w.get(&f.id()) {
                    f.weight_bp = *weight;
                }
            }
        }
        p
    }
}

/// What-if request: a stored request plus inline overrides. Nothing is written.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WhatIfRequest {
    #[serde(flatten)]
    pub base: DeterminationRequest,
    #[serde(default)]
    pub policy: Option<InstitutionRiskPolicy>,
    #[serde(default)]
    pub overrides: PolicyOverrides,
    #[serde(default)]
    pub determined_at: Option<DateTime<Utc>>,
}

pub struct Workbench {
    pub store: Store,
}

impl Workbench {
    pub fn new(store: Store) -> Self {
        Workbench { store }
    }

    pub fn registry(&self) -> Result<VocabularyRegistry, WorkbenchError> {
        Ok(self.store.registry()?)
    }

    pub fn extend_vocabulary(&self, term: Term, actor: &str) -> Result<VocabularyRegistry, WorkbenchError> {
        let current = self.registry()?;
        let next = current.extend(term)?;
        let base = self.store.latest_version(EntityKind::Registry, REGISTRY_ID)?;
        self.store.save(EntityKind::Registry, REGISTRY_ID, base, &next, actor, "extend vocabulary")?;
        Ok(next)
    }

    /// Validates and stores an opinion. `base` is the expected latest version.
    pub fn save_opinion(&self, opinion: &LegalOpinion, base: Option<u64>, actor: &str) -> Result<VersionInfo, WorkbenchError> {
        let registry = self.registry()?;
        opinion.validate(&registry, self.store.now().date_naive())?;
        if let Some(orig) = &opinion.is_update_of {
            let (_, original) = self.store.load::<LegalOpinion>(EntityKind::Opinions, orig, None)?;
            opinion.validate_update(&original)?;
        }
        Ok(self.store.save(EntityKind::Opinions, &opinion.id, base, opinion, actor, "save opinion")?)
    }

    pub fn save_policy(&self, policy: &InstitutionRiskPolicy, base: Option<u64>, actor: &str) -> Result<VersionInfo, WorkbenchError> {
        policy.validate(&self.registry()?)?;
        Ok(self.store.save(EntityKind::Policies, &policy.id, base, policy, actor, "save policy")?)
    }

    pub fn save_facts(&self, facts: &RelationshipFacts, base: Option<u64>, actor: &str) -> Result<VersionInfo, WorkbenchError> {
        facts.validate()?;
        Ok(self.store.save(EntityKind::Facts, &facts.relationship_id, base, facts, actor, "save facts")?)
    }

    pub fn set_verification(
        &self,
        opinion_id: &str,
        item_id: &str,
        status: Verification,
        analyst_id: &str,
        notes: Option<String>,
    ) -> Result<LegalOpinion, WorkbenchError> {
        let (info, op) = self.store.load::<LegalOpinion>(EntityKind::Opinions, opinion_id, None)?;
        let next = op.set_verification(item_id, status, analyst_id, self.store.now(), notes)?;
        self.store.save(
            EntityKind::Opinions,
            opinion_id,
            Some(info.version),
            &next,
            analyst_id,
            &format!("verify {item_id}: {status:?}"),
        )?;
        Ok(next)
    }

    fn gather(&self, req: &DeterminationRequest) -> Result<(RelationshipFacts, Vec<LegalOpinion>, InstitutionRiskPolicy), WorkbenchError> {
        let (_, facts) = self.store.load::<RelationshipFacts>(EntityKind::Facts, &req.relationship_id, None)?;
        let mut opinions = Vec::with_capacity(req.opinion_ids.len());
        for id in &req.opinion_ids {
            match self.store.load::<LegalOpinion>(EntityKind::Opinions, id, None) {
                Ok((_, o)) => opinions.push(o),
                Err(StoreError::NotFound { .. }) => return Err(EngineError::OpinionNotFound(id.clone()).into()),
                Err(e) => return Err(e.into()),
            }
        }
        let (_, policy) = self.store.load::<InstitutionRiskPolicy>(EntityKind::Policies, &req.policy_id, None)?;
        Ok((facts, opinions, policy))
    }

    fn compute(
        &self,
        facts: &RelationshipFacts,
        opinions: &[LegalOpinion],
        policy: &InstitutionRiskPolicy,
        req: &DeterminationRequest,
        determined_at: DateTime<Utc>,
    ) -> Result<NettingDetermination, WorkbenchError> {
        let input = DeterminationInput { facts, opinions, policy, assessment: req.assessment.as_ref(), as_of: req.as_of, determined_at };
        Ok(determine(&input, &self.registry()?)?)
    }

    /// Runs and persists a determination under the relationship id.
    pub fn determine(&self, req: &DeterminationRequest, actor: &str) -> Result<(VersionInfo, NettingDetermination), WorkbenchError> {
        let (facts, opinions, policy) = self.gather(req)?;
        let d = self.compute(&facts, &opinions, &policy, req, self.store.now())?;
        let info = self.store.save_latest(
            EntityKind::Determinations,
            &req.relationship_id,
            &StoredDetermination::new(d.clone()),
            actor,
            &format!("determine: {:?}", d.flag()),
        )?;
        Ok((info, d))
    }

    pub fn what_if(&self, req: &WhatIfRequest) -> Result<NettingDetermination, WorkbenchError> {
        let (facts, opinions, stored_policy) = match &req.policy {
            Some(p) => {
                let (_, facts) = self.store.load::<RelationshipFacts>(EntityKind::Facts, &req.base.relationship_id, None)?;
                let mut opinions = Vec::new();
                for id in &req.base.opinion_ids {
                    let (_, o) = self
                        .store
                        .load::<LegalOpinion>(EntityKind::Opinions, id, None)
                        .map_err(|_| EngineError::OpinionNotFound(id.clone()))?;
                    opinions.push(o);
                }
                (facts, opinions, p.clone())
            }
            None => self.gather(&req.base)?,
        };
        let policy = req.overrides.apply(&stored_policy);
        self.compute(&facts, &opinions, &policy, &req.base, req.determined_at.unwrap_or_else(|| self.store.now()))
    }
}
