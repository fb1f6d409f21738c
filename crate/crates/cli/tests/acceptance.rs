//! One PASS/FAIL line per acceptance criterion.

mod common;
#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::cell::{Cell, RefCell};
use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rtqa_core::engine::{run_forward, DEFAULT_MAX_CYCLES};
use rtqa_core::evaluation::{evaluate_batch, ManualAnswer};
use rtqa_core::facts::{from_json, ingest_plan};
use rtqa_core::ontology::Ontology;
use rtqa_core::rulelang::{
    check_completeness, compile_expr, execute, interpret, parse_decision_table, IssueKind,
    Severity, TableError,
};
use rtqa_core::rulepack::Rulepack;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn classification() -> Outcome {
    let rb = Arc::new(support::cases::sample_rulebase());
    let start = Instant::now();
    for case in &support::cases::CASES {
        support::cases::check(&rb, case)?;
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(1), format!("took {took:?}"))?;
    Ok(format!("{} cases in {took:?}", support::cases::CASES.len()))
}

fn thresholds() -> Outcome {
    let problems = support::thresholds::check(&support::sample_pack_dir());
    ensure(problems.is_empty(), problems.join("; "))?;
    let n: usize = support::thresholds::EXPECTED
        .iter()
        .map(|(_, l)| l.len())
        .sum();
    Ok(format!("{n} literals found verbatim"))
}

fn fixture_plans() -> Outcome {
    let ontology = Ontology::builtin();
    let answers = common::fixture("answers/confirm_all.json");
    let mut notes = Vec::new();
    for (name, ci, cold, exit, overall) in [
        ("prostate_pass", 1.25, 0, 0, "accredited"),
        ("prostate_fail", 1.5, 1, 3, "rejected"),
    ] {
        let plan = ingest_plan(&common::fixture(&format!("plans/{name}.json")), &ontology)
            .map_err(|e| e.to_string())?;
        ensure(
            plan.grid.dims.iter().all(|d| *d <= 50),
            format!("{name}: grid too large"),
        )?;
        ensure(
            support::voxel::ci(&plan) == Some(ci),
            format!("{name}: oracle CI {:?}", support::voxel::ci(&plan)),
        )?;
        ensure(
            support::voxel::cold_spots(&plan) == Some(cold),
            format!(
                "{name}: oracle cold spots {:?}",
                support::voxel::cold_spots(&plan)
            ),
        )?;
        support::voxel::check_plan(&plan).map_err(|e| format!("{name}: {e}"))?;
        let start = Instant::now();
        let (code, report) = common::report_only(name, &["--answers", common::p(&answers)]);
        let took = start.elapsed();
        let v: serde_json::Value =
            serde_json::from_str(&report).map_err(|e| format!("{name}: {e}"))?;
        ensure(code == exit, format!("{name}: exit {code}"))?;
        ensure(
            v["overall"] == overall,
            format!("{name}: overall {}", v["overall"]),
        )?;
        ensure(
            took < Duration::from_secs(5),
            format!("{name}: took {took:?}"),
        )?;
        notes.push(format!(
            "{name} CI {ci} cold {cold} exit {code} in {took:?}"
        ));
    }
    Ok(notes.join(", "))
}

fn dosimetry_oracle() -> Outcome {
    let mut values = 0;
    for seed in 0..50 {
        let plan = support::voxel::random_plan(seed);
        values += support::voxel::check_plan(&plan).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok(format!("50 grids, {values} metric values identical"))
}

fn engine() -> Outcome {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let fired_total = Cell::new(0usize);
    runner(200)
        .run(
            &(support::fixpoint::rulebase(200), any::<u64>()),
            |(rb, seed)| {
                let mut rules: Vec<_> = rb.rules.iter().map(support::fixpoint::compile).collect();
                let wm = support::fixpoint::working_memory(&rb);
                let a = run_forward(&rules, wm.clone(), DEFAULT_MAX_CYCLES).unwrap();
                rules.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let b = run_forward(&rules, wm, DEFAULT_MAX_CYCLES).unwrap();
                prop_assert_eq!(&a.trace, &b.trace);
                prop_assert!(a.trace.len() <= rules.len());
                fired_total.set(fired_total.get() + a.trace.len());
                Ok(())
            },
        )
        .map_err(|e| format!("permutation: {e}"))?;
    runner(200)
        .run(&support::fixpoint::rulebase(6), |rb| {
            let rules: Vec<_> = rb.rules.iter().map(support::fixpoint::compile).collect();
            let run = run_forward(
                &rules,
                support::fixpoint::working_memory(&rb),
                DEFAULT_MAX_CYCLES,
            )
            .unwrap();
            let fired: BTreeSet<String> = run.trace.iter().map(|f| f.rule.clone()).collect();
            prop_assert_eq!(fired, support::fixpoint::least_fixpoint(&rb));
            Ok(())
        })
        .map_err(|e| format!("fixpoint: {e}"))?;
    Ok(format!(
        "200 permuted rulebases ({} firings), 200 fixpoint checks",
        fired_total.get()
    ))
}

fn compiler() -> Outcome {
    let agree = Cell::new(0usize);
    let ok_values = Cell::new(0usize);
    runner(1000)
        .run(
            &(
                support::exprs::bool_expr(),
                vec(support::exprs::assignment(), 100),
            ),
            |(e, assignments)| {
                let program = compile_expr(&e);
                for a in &assignments {
                    let lookup = |n: &str| a.get(n).cloned();
                    let tree = interpret(&e, &lookup);
                    let vm = execute(&program, &lookup);
                    prop_assert_eq!(format!("{tree:?}"), format!("{vm:?}"));
                    agree.set(agree.get() + 1);
                    ok_values.set(ok_values.get() + usize::from(tree.is_ok()));
                }
                Ok(())
            },
        )
        .map_err(|e| e.to_string())?;
    let (agree, ok_values) = (agree.get(), ok_values.get());
    ensure(agree == 100_000, format!("{agree} comparisons"))?;
    Ok(format!(
        "{agree}/100000 agree ({ok_values} produced values, the rest matching errors)"
    ))
}

fn completeness() -> Outcome {
    let sizes = RefCell::new(BTreeSet::new());
    runner(100)
        .run(&support::tables::table(), |t| {
            sizes.borrow_mut().insert(t.conditions.len());
            let got = check_completeness(&t);
            match support::tables::enumerate(&t) {
                support::tables::Expected::Overlap { vector, columns } => {
                    prop_assert_eq!(got, Err(TableError::Overlap { vector, columns }));
                }
                support::tables::Expected::Complete { missing } => {
                    let c = got.unwrap();
                    prop_assert_eq!(c.balanced, missing.is_empty());
                    prop_assert_eq!(c.missing, missing);
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let load = |name: &str| -> Result<_, String> {
        let text = std::fs::read_to_string(common::fixture(&format!("tables/{name}")))
            .map_err(|e| e.to_string())?;
        let t = parse_decision_table(&text).map_err(|e| e.to_string())?;
        check_completeness(&t).map_err(|e| e.to_string())
    };
    let balanced = load("psa_gleason.dtab")?;
    ensure(balanced.balanced, "fixture table not balanced")?;
    let gap = load("psa_gleason_unbalanced.dtab")?;
    ensure(
        gap.missing == vec![vec![false, false]],
        format!("missing {:?}", gap.missing),
    )?;
    Ok(format!(
        "100 tables agree (n in {:?}), fixture balanced, 3-column fixture missing [FF]",
        sizes.borrow()
    ))
}

fn lint() -> Outcome {
    let ontology = Ontology::builtin();
    let issues = |dir: std::path::PathBuf| {
        Rulepack::load_dir(&dir)
            .map(|p| p.lint(&ontology))
            .map_err(|e| e.to_string())
    };
    let count = |i: &[rtqa_core::rulelang::RuleIssue], k: IssueKind| {
        i.iter().filter(|x| x.kind == k).count()
    };
    let dup = issues(common::fixture("lint/duplicate"))?;
    ensure(
        count(&dup, IssueKind::DuplicateRule) == 1 && count(&dup, IssueKind::ConflictingRule) == 0,
        format!("duplicate fixture: {dup:?}"),
    )?;
    let conflict = issues(common::fixture("lint/conflicting"))?;
    ensure(
        count(&conflict, IssueKind::ConflictingRule) == 1
            && count(&conflict, IssueKind::DuplicateRule) == 0,
        format!("conflicting fixture: {conflict:?}"),
    )?;
    let clean = issues(common::sample_pack())?;
    let errors = clean
        .iter()
        .filter(|i| i.severity == Severity::Error)
        .count();
    ensure(errors == 0, format!("sample pack: {clean:?}"))?;
    Ok("1 DuplicateRule, 1 ConflictingRule, 0 errors on the sample pack".into())
}

fn statelessness() -> Outcome {
    let ontology = Ontology::builtin();
    let answers_path = common::fixture("answers/confirm_all.json");
    let answers: Vec<ManualAnswer> =
        from_json(&std::fs::read_to_string(&answers_path).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let plan = Arc::new(
        ingest_plan(&common::fixture("plans/prostate_fail.json"), &ontology)
            .map_err(|e| e.to_string())?,
    );
    let fresh = || -> Result<String, String> {
        let (_, report) = evaluate_batch(
            Arc::new(support::cases::sample_rulebase()),
            &ontology,
            support::cases::base_facts(),
            Some(plan.clone()),
            &[],
            &answers,
        )
        .map_err(|e| e.to_string())?;
        Ok(report.to_json())
    };
    ensure(fresh()? == fresh()?, "in-process sessions differ")?;
    let (_, cli_a) = common::report_only("prostate_fail", &["--answers", common::p(&answers_path)]);
    let (_, cli_b) = common::report_only("prostate_fail", &["--answers", common::p(&answers_path)]);
    ensure(cli_a == cli_b, "CLI runs differ")?;
    ensure(cli_a == fresh()?, "CLI differs from library")?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let http = runtime.block_on(async {
        let base = common::serve(common::state(None)).await;
        common::http_flow(&reqwest::Client::new(), &base, "prostate_fail")
            .await
            .report
    });
    ensure(http == cli_a, "HTTP report differs from CLI report")?;
    Ok(format!(
        "{} byte report identical across sessions, CLI and HTTP",
        cli_a.len()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("prostate classification fidelity", classification),
        ("threshold golden scan", thresholds),
        ("end-to-end fixture plans", fixture_plans),
        ("dosimetry oracle equivalence", dosimetry_oracle),
        ("engine determinism and termination", engine),
        ("compiler equivalence", compiler),
        ("decision-table completeness", completeness),
        ("lint fidelity", lint),
        ("statelessness", statelessness),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
