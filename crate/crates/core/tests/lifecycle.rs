use std::path::PathBuf;
use std::sync::Arc;

use netting_core::opinion::Verification;
use netting_core::store::{Clock, StoredDetermination};
use netting_core::{
    determine, BlockingReason, DeterminationInput, EntityKind, Flag, HumanAssessment, InstitutionRiskPolicy, LegalOpinion,
    RelationshipFacts, Store, StoreError, TriggerEvent, TriggerKind, VocabularyRegistry,
};

fn load<T: serde::de::DeserializeOwned>(name: &str) -> T {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn store(dir: &std::path::Path) -> Store {
    let clock: Clock = Arc::new(|| "2024-03-01T09:00:00Z".parse().unwrap());
    Store::with_clock(dir, clock).unwrap()
}

fn verified_opinion() -> LegalOpinion {
    let mut op: LegalOpinion = load("opinion_sample.json");
    let ids: Vec<String> = op.items().map(|i| i.id.clone()).collect();
    for id in ids {
        op = op.set_verification(&id, Verification::Verified, "analyst-1", "2024-02-01T00:00:00Z".parse().unwrap(), None).unwrap();
    }
    op
}

/// Persists a Yes determination for a relationship with the given id.
fn seed_yes(store: &Store, relationship_id: &str) {
    let mut facts: RelationshipFacts = load("facts_sample.json");
    facts.relationship_id = relationship_id.into();
    let policy: InstitutionRiskPolicy = load::<InstitutionRiskPolicy>("policy_three_factor.json").with_threshold(7500);
    let assessment: HumanAssessment = load("assessment_acceptable.json");
    let opinions = [verified_opinion()];
    let input = DeterminationInput {
        facts: &facts,
        opinions: &opinions,
        policy: &policy,
        assessment: Some(&assessment),
        as_of: "2024-03-01".parse().unwrap(),
        determined_at: store.now(),
    };
    let d = determine(&input, &VocabularyRegistry::builtin()).unwrap();
    assert_eq!(d.flag(), Flag::Yes);
    if !store.exists(EntityKind::Facts, relationship_id) {
        store.save(EntityKind::Facts, relationship_id, None, &facts, "analyst-1", "save facts").unwrap();
    }
    store.save_latest(EntityKind::Determinations, relationship_id, &StoredDetermination::new(d), "analyst-1", "determine").unwrap();
}

fn event(kind: TriggerKind, subject: &str) -> TriggerEvent {
    TriggerEvent { kind, subject: subject.into(), occurred_at: "2024-04-01T00:00:00Z".parse().unwrap(), payload: String::new() }
}

fn latest(store: &Store, id: &str) -> StoredDetermination {
    store.load::<StoredDetermination>(EntityKind::Determinations, id, None).unwrap().1
}

#[test]
fn law_change_marks_every_dependent_determination_stale() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path());
    for id in ["rel-a", "rel-b", "rel-c"] {
        seed_yes(&s, id);
    }
    let affected = s.record_event(&event(TriggerKind::LawChanged, "EN"), "ops").unwrap();
    assert_eq!(affected, ["rel-a", "rel-b", "rel-c"]);
    for id in ["rel-a", "rel-b", "rel-c"] {
        let d = latest(&s, id);
        assert!(d.stale);
        assert_eq!(d.determination.flag(), Flag::Yes, "only expiry flips the flag");
        assert_eq!(s.history(EntityKind::Determinations, id).unwrap().len(), 2);
    }
    assert_eq!(s.stale_report().unwrap(), ["rel-a", "rel-b", "rel-c"]);
    assert_eq!(s.list(EntityKind::Events).unwrap(), ["evt-000001"]);
}

#[test]
fn events_reach_only_their_dependents() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path());
    seed_yes(&s, "rel-a");
    seed_yes(&s, "rel-b");
    assert_eq!(s.record_event(&event(TriggerKind::TradesChanged, "rel-b"), "ops").unwrap(), ["rel-b"]);
    assert!(!latest(&s, "rel-a").stale);
    let affected = s.record_event(&event(TriggerKind::OpinionUpdated, "op-en-isda2002-corporate"), "ops").unwrap();
    assert_eq!(affected, ["rel-a", "rel-b"]);
    assert_eq!(latest(&s, "rel-b").stale_reasons.len(), 2);

    let err = s.record_event(&event(TriggerKind::ExtremeEvent, "atlantis"), "ops").unwrap_err();
    assert!(matches!(err, StoreError::UnknownSubject(_)));
    assert_eq!(s.list(EntityKind::Events).unwrap().len(), 2, "rejected events are not recorded");
}

#[test]
fn sweep_respects_manual_override_and_records_it() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path());
    seed_yes(&s, "rel-a");
    seed_yes(&s, "rel-b");
    s.set_override("rel-b", true, "board approval pending renewal", "head-of-risk").unwrap();
    let as_of = "2025-02-18".parse().unwrap();
    assert_eq!(s.sweep_expiry(as_of, 365, "sweeper").unwrap(), ["rel-a"]);
    assert_eq!(latest(&s, "rel-b").determination.flag(), Flag::Yes);
    let a = latest(&s, "rel-a");
    assert!(a.determination.trace.blocking_reasons.contains(&BlockingReason::OpinionExpired {
        opinion_id: "op-en-isda2002-corporate".into(),
        age_days: 400,
        validity_days: 365,
    }));
    let notes = s.audit_for(EntityKind::Determinations, "rel-b").unwrap();
    assert!(notes.iter().any(|e| e.action.contains("manual override") && e.action.contains("skipped")));
    assert!(s.expiry_violations(as_of, 365).unwrap().is_empty());
    s.verify_audit_chain().unwrap();
}

#[test]
fn concurrent_writers_on_one_base_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let s = Arc::new(store(dir.path()));
    let facts: RelationshipFacts = load("facts_sample.json");
    s.save(EntityKind::Facts, "rel-acme-uk", None, &facts, "a", "create").unwrap();
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let s = Arc::clone(&s);
            let mut f = facts.clone();
            f.counterparty_id = format!("cp-{i}");
            std::thread::spawn(move || s.save(EntityKind::Facts, "rel-acme-uk", Some(1), &f, "writer", "update"))
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
    assert!(results.iter().filter_map(|r| r.as_ref().err()).all(|e| matches!(e, StoreError::VersionConflict { .. })));
    assert_eq!(s.history(EntityKind::Facts, "rel-acme-uk").unwrap().len(), 2);
    s.verify_audit_chain().unwrap();
}
