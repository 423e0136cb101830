//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, NaiveDate, Utc};
use netting_core::batch;
use netting_core::cnl::all_sentences;
use netting_core::engine::{BlockingReason, FactorStatus, MissingFactorPolicy};
use netting_core::opinion::{LegalOpinion, Verification};
use netting_core::store::{Clock, EntityKind, Store, StoredDetermination};
use netting_core::{
    compute_exposures, determine, factor_range, total_cost, AdverseDirection, CostParams, DeterminationInput, DeterminationRequest, Flag,
    HumanAssessment, InstitutionRiskPolicy, Likelihood, LikelihoodMapping, ProbRange, RelationshipFacts, RiskFactor, Sentence, Trade,
    VerbForm, VocabularyRegistry, Workbench,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rust_decimal::Decimal;

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn load<T: serde::de::DeserializeOwned>(name: &str) -> T {
    let text = std::fs::read_to_string(data(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn dec(s: &str) -> Decimal {
    s.parse().unwrap()
}

fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

fn instant(s: &str) -> DateTime<Utc> {
    s.parse().unwrap()
}

fn fixed_store(dir: &std::path::Path, at: &'static str) -> Store {
    let clock: Clock = Arc::new(move || at.parse().unwrap());
    Store::with_clock(dir, clock).unwrap()
}

fn cost_golden() -> Check {
    let started = Instant::now();
    let params: CostParams = load("cost_params_us.json");
    let report = total_cost(&params.levels, Some(dec("1000"))).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();

    ensure!(report.reviews_total == dec("26115"), "reviewsTotal = {}", report.reviews_total);
    let diff = (report.total_days - dec("29379.38")).abs();
    ensure!(diff <= dec("0.005"), "TC_d = {} (off by {diff})", report.total_days);
    let share = report.level_share_pct("4").ok_or("no level 4")?;
    ensure!((share - dec("37")).abs() <= Decimal::ONE, "level-4 share = {share}%");
    let money = report.total_cost.ok_or("no monetised total")?;
    ensure!(money >= dec("29000000"), "cost at 1000/day = {money}");
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(())
}

fn worked_mapping_example() -> Check {
    let sentences = [
        Sentence::new(Likelihood::PossibleThat, "transactions", VerbForm::WillBe, "cherry-picked"),
        Sentence::new(Likelihood::MoreLikelyThanNotThat, "transactions", VerbForm::WillNotBe, "cherry-picked"),
    ];
    let factor = RiskFactor::new("transactions", "cherry-picked", AdverseDirection::Occurrence, 10_000);
    let a = factor_range(&sentences, &factor, &LikelihoodMapping::default());
    ensure!(a.status == FactorStatus::Assessed, "status {:?}", a.status);
    let r = a.adverse_range.ok_or("no range")?;
    ensure!((r.lo(), r.hi()) == (100, 4900), "range = {r}");
    Ok(())
}

fn exposure_golden() -> Check {
    const M: i64 = 100_000_000; // £1m in pence
    let portfolio: Vec<Trade> = load("portfolio_fig1.json");
    let mtms: Vec<i64> = portfolio.iter().map(|t| t.mtm_minor_units).collect();
    ensure!(mtms == [150 * M, 250 * M, -500 * M], "portfolio file = {mtms:?}");
    let r = compute_exposures(&portfolio).map_err(|e| e.to_string())?;
    ensure!(r.net_value_to_a == -100 * M, "netValueToA = {}", r.net_value_to_a);
    ensure!(r.gross_exposure_a == 400 * M, "grossExposureA = {}", r.gross_exposure_a);
    ensure!(r.gross_exposure_b == 500 * M, "grossExposureB = {}", r.gross_exposure_b);
    ensure!(r.net_exposure_b == 100 * M, "netExposureB = {}", r.net_exposure_b);
    ensure!(r.net_exposure_a == 0, "netExposureA = {}", r.net_exposure_a);
    Ok(())
}

fn parser_round_trip() -> Check {
    let reg = VocabularyRegistry::builtin();
    let all = all_sentences(&reg);
    ensure!(all.len() == 270, "{} combinations", all.len());
    for s in &all {
        let text = reg.render(s).map_err(|e| e.to_string())?;
        let back = reg.parse(&text).map_err(|e| format!("{text:?}: {e}"))?;
        ensure!(&back == s, "{text:?} parsed to {back:?}");
    }
    let examples = [
        (
            "It is possible that transactions will be cherry-picked",
            Sentence::new(Likelihood::PossibleThat, "transactions", VerbForm::WillBe, "cherry-picked"),
        ),
        (
            "It is more likely than not that transactions will not be cherry-picked",
            Sentence::new(Likelihood::MoreLikelyThanNotThat, "transactions", VerbForm::WillNotBe, "cherry-picked"),
        ),
        (
            "It is more likely than not that collateral will not be enforceable",
            Sentence::new(Likelihood::MoreLikelyThanNotThat, "collateral", VerbForm::WillNotBe, "enforceable"),
        ),
        (
            "It is unknown whether enforcement of close-out netting can be stayed",
            Sentence::new(Likelihood::UnknownWhether, "enforcement-of-close-out-netting", VerbForm::CanBe, "stayed"),
        ),
    ];
    for (text, expected) in examples {
        let got = reg.parse(text).map_err(|e| format!("{text:?}: {e}"))?;
        ensure!(got == expected, "{text:?} parsed to {got:?}");
    }
    Ok(())
}

fn range_strategy() -> impl Strategy<Value = ProbRange> {
    (0u32..=10_000, 0u32..=10_000).prop_map(|(a, b)| ProbRange::new(a.min(b), a.max(b)).unwrap())
}

fn contains_float(v: &serde_json::Value) -> bool {
    match v {
        serde_json::Value::Number(n) => !(n.is_i64() || n.is_u64()),
        serde_json::Value::Array(xs) => xs.iter().any(contains_float),
        serde_json::Value::Object(m) => m.values().any(contains_float),
        _ => false,
    }
}

fn range_algebra() -> Check {
    let mut runner = TestRunner::new(Config { cases: 10_000, failure_persistence: None, ..Config::default() });
    runner
        .run(&(range_strategy(), range_strategy(), range_strategy()), |(a, b, c)| {
            prop_assert_eq!(a.complement().complement(), a);
            prop_assert_eq!(a.intersect(b), b.intersect(a));
            prop_assert_eq!(a.intersect(b).and_then(|x| x.intersect(c)), b.intersect(c).and_then(|x| a.intersect(x)));
            prop_assert_eq!(a.intersect(ProbRange::FULL), Some(a));
            if let Some(i) = a.intersect(b) {
                prop_assert!(a.contains(i) && b.contains(i));
                prop_assert!(i.width() <= a.width().min(b.width()));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    // Every number in a full determination trace is an integer.
    let e2e = E2e::new();
    let d = e2e.run(5000);
    let value: serde_json::Value = serde_json::from_slice(&d.trace_bytes()).map_err(|e| e.to_string())?;
    ensure!(!contains_float(&value), "trace contains a non-integer number");
    Ok(())
}

/// Sample documents with every item verified and an acceptable assessment.
struct E2e {
    facts: RelationshipFacts,
    opinion: LegalOpinion,
    policy: InstitutionRiskPolicy,
    assessment: HumanAssessment,
}

impl E2e {
    fn new() -> Self {
        let mut opinion: LegalOpinion = load("opinion_sample.json");
        let ids: Vec<String> = opinion.items().map(|i| i.id.clone()).collect();
        for id in ids {
            opinion = opinion.set_verification(&id, Verification::Verified, "analyst-1", instant("2024-01-31T09:00:00Z"), None).unwrap();
        }
        E2e {
            facts: load("facts_sample.json"),
            opinion,
            policy: load("policy_three_factor.json"),
            assessment: load("assessment_acceptable.json"),
        }
    }

    fn run_with(
        &self,
        opinion: &LegalOpinion,
        policy: &InstitutionRiskPolicy,
        as_of: &str,
        at: &str,
    ) -> netting_core::NettingDetermination {
        let ops = [opinion.clone()];
        let input = DeterminationInput {
            facts: &self.facts,
            opinions: &ops,
            policy,
            assessment: Some(&self.assessment),
            as_of: date(as_of),
            determined_at: instant(at),
        };
        determine(&input, &VocabularyRegistry::builtin()).unwrap()
    }

    fn run(&self, threshold_bp: u32) -> netting_core::NettingDetermination {
        self.run_with(&self.opinion, &self.policy.with_threshold(threshold_bp), "2024-02-01", "2024-02-01T12:00:00Z")
    }
}

fn determination_properties() -> Check {
    let e2e = E2e::new();
    let reg = VocabularyRegistry::builtin();
    let all = all_sentences(&reg);
    let thresholds: Vec<u32> = (0..=10_000).step_by(50).collect();

    // τ-monotonicity and non-widening over randomised conclusions.
    let mut runner = TestRunner::new(Config { cases: 500, failure_persistence: None, ..Config::default() });
    let pick = proptest::collection::vec(0..all.len(), 0..8);
    runner
        .run(&(pick, 0..all.len()), |(idx, extra)| {
            let mut op = e2e.opinion.clone();
            op.conclusion = idx
                .iter()
                .map(|i| netting_core::opinion::ConclusionEntry { text: reg.render(&all[*i]).unwrap(), sentence: all[*i].clone() })
                .collect();
            let mut policy = e2e.policy.clone();
            policy.missing_factor_policy = MissingFactorPolicy::TreatAsUnknown;
            let ops = [op.clone()];
            let input = DeterminationInput {
                facts: &e2e.facts,
                opinions: &ops,
                policy: &policy,
                assessment: Some(&e2e.assessment),
                as_of: date("2024-02-01"),
                determined_at: instant("2024-02-01T12:00:00Z"),
            };
            let sweep = batch::threshold_sweep(&input, &thresholds, &reg).unwrap();
            let first_yes = sweep.iter().position(|(_, f)| *f == Flag::Yes).unwrap_or(sweep.len());
            prop_assert!(sweep[first_yes..].iter().all(|(_, f)| *f == Flag::Yes), "Yes flipped back to No");

            let sentences: Vec<Sentence> = idx.iter().map(|i| all[*i].clone()).collect();
            let mut more = sentences.clone();
            more.push(all[extra].clone());
            for f in &policy.factors {
                let before = factor_range(&sentences, f, &policy.mapping);
                let after = factor_range(&more, f, &policy.mapping);
                if let (Some(b), Some(a)) = (before.adverse_range, after.adverse_range) {
                    prop_assert!(b.contains(a), "{} widened from {} to {}", f.id(), b, a);
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    // Determinism: identical inputs give byte-identical traces.
    let a = e2e.run_with(&e2e.opinion, &e2e.policy, "2024-02-01", "2024-02-01T12:00:00Z");
    let b = e2e.run_with(&e2e.opinion, &e2e.policy, "2024-02-01", "2024-02-02T08:30:00Z");
    ensure!(a.trace_bytes() == b.trace_bytes(), "traces differ for identical inputs");

    // Expiry sweep on a 400-day-old opinion.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = fixed_store(dir.path(), "2025-02-18T06:00:00Z");
    let yes = e2e.run(7500);
    ensure!(yes.flag() == Flag::Yes, "baseline at τ=7500 is {:?}", yes.flag());
    store
        .save(EntityKind::Determinations, "rel-acme-uk", None, &StoredDetermination::new(yes), "analyst-1", "determine")
        .map_err(|e| e.to_string())?;
    let as_of = e2e.opinion.issued_at + chrono::Duration::days(400);
    let flipped = store.sweep_expiry(as_of, 365, "sweeper").map_err(|e| e.to_string())?;
    ensure!(flipped == ["rel-acme-uk"], "first sweep flipped {flipped:?}");
    let (_, after) = store.load::<StoredDetermination>(EntityKind::Determinations, "rel-acme-uk", None).map_err(|e| e.to_string())?;
    ensure!(after.determination.flag() == Flag::No, "flag after sweep {:?}", after.determination.flag());
    ensure!(
        after.determination.trace.blocking_reasons.iter().any(|r| matches!(r, BlockingReason::OpinionExpired { age_days: 400, .. })),
        "reasons {:?}",
        after.determination.trace.blocking_reasons
    );
    let versions = store.history(EntityKind::Determinations, "rel-acme-uk").map_err(|e| e.to_string())?.len();
    let again = store.sweep_expiry(as_of, 365, "sweeper").map_err(|e| e.to_string())?;
    let versions_after = store.history(EntityKind::Determinations, "rel-acme-uk").map_err(|e| e.to_string())?.len();
    ensure!(again.is_empty() && versions == versions_after, "second sweep was not a no-op: {again:?}");
    ensure!(store.expiry_violations(as_of, 365).map_err(|e| e.to_string())?.is_empty(), "expired Yes survives");
    Ok(())
}

fn end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let wb = Workbench::new(fixed_store(dir.path(), "2024-02-01T12:00:00Z"));
    let opinion: LegalOpinion = load("opinion_sample.json");
    let kinds: Vec<bool> = opinion.items().map(|i| i.kind.is_assumption()).collect();
    ensure!(kinds.iter().filter(|a| **a).count() == 2, "assumptions: {kinds:?}");
    ensure!(kinds.iter().filter(|a| !**a).count() == 2, "qualifications: {kinds:?}");
    ensure!(opinion.conclusion.len() == 4, "{} conclusion sentences", opinion.conclusion.len());
    ensure!(opinion.items().all(|i| i.verification == Verification::Unverified), "sample items pre-verified");

    let facts: RelationshipFacts = load("facts_sample.json");
    let policy: InstitutionRiskPolicy = load("policy_three_factor.json");
    ensure!(policy.threshold_bp == 5000, "policy τ = {}", policy.threshold_bp);
    let err = |e: netting_core::WorkbenchError| e.to_string();
    wb.save_opinion(&opinion, None, "analyst-1").map_err(err)?;
    wb.save_facts(&facts, None, "analyst-1").map_err(err)?;
    wb.save_policy(&policy, None, "risk-officer").map_err(err)?;

    let assessment: HumanAssessment = load("assessment_acceptable.json");
    let request = DeterminationRequest {
        relationship_id: facts.relationship_id.clone(),
        opinion_ids: vec![opinion.id.clone()],
        policy_id: policy.id.clone(),
        assessment: Some(assessment),
        as_of: date("2024-02-01"),
    };

    // Before verification the items block the determination.
    let (_, early) = wb.determine(&request, "analyst-1").map_err(err)?;
    ensure!(
        early.trace.blocking_reasons.iter().any(|r| matches!(r, BlockingReason::ItemUnverified { .. })),
        "unverified items did not block: {:?}",
        early.trace.blocking_reasons
    );

    for item in opinion.items() {
        wb.set_verification(&opinion.id, &item.id, Verification::Verified, "analyst-1", None).map_err(err)?;
    }

    let (_, d) = wb.determine(&request, "analyst-1").map_err(err)?;
    let r = d.trace.overall_risk;
    ensure!((r.lo(), r.hi()) == (50, 7450), "overallRisk = {r}");
    ensure!(d.flag() == Flag::No, "flag at τ=5000 is {:?}", d.flag());
    ensure!(
        d.trace.blocking_reasons == [BlockingReason::RiskAboveThreshold { upper_bp: 7450, threshold_bp: 5000 }],
        "reasons {:?}",
        d.trace.blocking_reasons
    );
    let cherry = d.trace.factor_assessments.iter().find(|a| a.factor_id == "transactions/cherry-picked").ok_or("factor missing")?;
    ensure!(cherry.effective_range == ProbRange::new(100, 4900).ok(), "cherry-picking = {:?}", cherry.effective_range);

    let (info, _) = wb.store.load::<InstitutionRiskPolicy>(EntityKind::Policies, &policy.id, None).map_err(|e| e.to_string())?;
    wb.save_policy(&policy.with_threshold(7500), Some(info.version), "risk-officer").map_err(err)?;
    let (_, raised) = wb.determine(&request, "analyst-1").map_err(err)?;
    ensure!(raised.flag() == Flag::Yes, "flag at τ=7500 is {:?}: {:?}", raised.flag(), raised.trace.blocking_reasons);
    ensure!(raised.trace.overall_risk == r, "risk moved with τ");

    let history = wb.store.history(EntityKind::Determinations, &facts.relationship_id).map_err(|e| e.to_string())?;
    ensure!(history.len() == 3, "{} determination versions", history.len());
    wb.store.verify_audit_chain().map_err(|e| e.to_string())?;
    Ok(())
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("cost model golden figures", cost_golden),
        ("worked mapping example", worked_mapping_example),
        ("exposure golden figures", exposure_golden),
        ("parser round trip", parser_round_trip),
        ("range algebra properties", range_algebra),
        ("determination properties", determination_properties),
        ("end-to-end scenario", end_to_end),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(()) => println!("PASS  {name}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
