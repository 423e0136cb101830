use chrono::NaiveDate;
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use netting_core::batch;
use netting_core::cnl::VocabularyRegistry;
use netting_core::engine::{
    AdverseDirection, DeterminationInput, EmptyIntersectionPolicy, InstitutionRiskPolicy, MissingFactorPolicy, RiskFactor,
};
use netting_core::opinion::{
    ConclusionEntry, HumanAssessment, ItemKind, LegalOpinion, OpinionItem, OpinionScope, RelationshipFacts, Verdict, Verification,
    OPINION_SCHEMA_VERSION,
};
use netting_core::range::LikelihoodMapping;
use netting_core::Trade;

fn opinion(reg: &VocabularyRegistry) -> LegalOpinion {
    let texts = [
        "It is possible that transactions will be cherry-picked",
        "It is more likely than not that transactions will not be cherry-picked",
        "It is unknown whether collateral will be enforceable",
        "It is unknown whether enforcement of close-out netting can be stayed",
    ];
    let mut a = OpinionItem::new("a1", ItemKind::Factual, "duly organised");
    a.verification = Verification::Verified;
    LegalOpinion {
        schema_version: OPINION_SCHEMA_VERSION,
        id: "op".into(),
        law_firm: "Firm".into(),
        issued_at: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
        is_update_of: None,
        scope: OpinionScope {
            agreement_types: ["ISDA-2002".to_string()].into(),
            governing_law: "EN".into(),
            jurisdictions: ["EN".to_string()].into(),
            counterparty_types: ["corporate".to_string()].into(),
            transaction_types: Default::default(),
        },
        assumptions: vec![a],
        qualifications: vec![],
        discussion: String::new(),
        conclusion: texts.iter().map(|t| ConclusionEntry { text: t.to_string(), sentence: reg.parse(t).unwrap() }).collect(),
        registry_version: reg.version,
    }
}

fn facts(i: usize) -> RelationshipFacts {
    RelationshipFacts {
        relationship_id: format!("rel-{i}"),
        counterparty_id: format!("cp-{i}"),
        counterparty_type: "corporate".into(),
        incorporation_jurisdiction: "EN".into(),
        branch_jurisdiction: None,
        agreement_type: "ISDA-2002".into(),
        agreement_governing_law: "EN".into(),
        transaction_governing_laws: ["EN".to_string()].into(),
        transaction_types: Default::default(),
        collateral_locations: Default::default(),
        materially_amended: false,
    }
}

fn policy() -> InstitutionRiskPolicy {
    InstitutionRiskPolicy {
        id: "three".into(),
        mapping: LikelihoodMapping::default(),
        factors: vec![
            RiskFactor::new("transactions", "cherry-picked", AdverseDirection::Occurrence, 5000),
            RiskFactor::new("collateral", "enforceable", AdverseDirection::NonOccurrence, 3000),
            RiskFactor::new("enforcement-of-close-out-netting", "stayed", AdverseDirection::Occurrence, 2000),
        ],
        threshold_bp: 7500,
        missing_factor_policy: MissingFactorPolicy::TreatAsUnknown,
        empty_intersection_policy: EmptyIntersectionPolicy::Block,
        validity_period_days: None,
        unverified_blocking_kinds: ItemKind::ALL.into_iter().collect(),
    }
}

fn bench_determinations(c: &mut Criterion) {
    let reg = VocabularyRegistry::builtin();
    let ops = [opinion(&reg)];
    let pol = policy();
    let assessment = HumanAssessment {
        analyst_id: "ana".into(),
        assessed_at: "2024-02-01T00:00:00Z".parse().unwrap(),
        verdict: Verdict::ReasoningAcceptable,
        notes: String::new(),
    };
    let mut group = c.benchmark_group("determine_all");
    for n in [64usize, 1024, 8192] {
        let all_facts: Vec<_> = (0..n).map(facts).collect();
        let inputs: Vec<_> = all_facts
            .iter()
            .map(|f| DeterminationInput {
                facts: f,
                opinions: &ops,
                policy: &pol,
                assessment: Some(&assessment),
                as_of: NaiveDate::from_ymd_opt(2024, 6, 1).unwrap(),
                determined_at: "2024-06-01T00:00:00Z".parse().unwrap(),
            })
            .collect();
        group.bench_with_input(BenchmarkId::new("sequential", n), &inputs, |b, i| {
            b.iter(|| batch::sequential::determine_all(black_box(i), &reg))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", n), &inputs, |b, i| {
            b.iter(|| batch::parallel::determine_all(black_box(i), &reg))
        });
    }
    group.finish();

    let f = facts(0);
    let input = DeterminationInput {
        facts: &f,
        opinions: &ops,
        policy: &pol,
        assessment: Some(&assessment),
        as_of: NaiveDate::from_ymd_opt(2024, 6, 1).unwrap(),
        determined_at: "2024-06-01T00:00:00Z".parse().unwrap(),
    };
    let thresholds: Vec<u32> = (0..=10_000).step_by(5).collect();
    let mut group = c.benchmark_group("threshold_sweep");
    group.bench_function("sequential", |b| b.iter(|| batch::sequential::threshold_sweep(&input, black_box(&thresholds), &reg)));
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| b.iter(|| batch::parallel::threshold_sweep(&input, black_box(&thresholds), &reg)));
    group.finish();
}

fn bench_exposures(c: &mut Criterion) {
    let portfolios: Vec<Vec<Trade>> = (0..4096)
        .map(|p| (0..256).map(|t| Trade::new("t", ((p * 7919 + t * 104_729) % 2_000_001) as i64 - 1_000_000, "GBP")).collect())
        .collect();
    let mut group = c.benchmark_group("exposures_all");
    group.bench_function("sequential", |b| b.iter(|| batch::sequential::exposures_all(black_box(&portfolios))));
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| b.iter(|| batch::parallel::exposures_all(black_box(&portfolios))));
    group.finish();
}

criterion_group!(benches, bench_determinations, bench_exposures);
criterion_main!(benches);
