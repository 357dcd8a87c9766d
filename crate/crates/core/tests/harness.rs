mod common;

use goldilocks::harness::{
    baseline_config, compare_runs, emit_report, normalized_compare, read_csv, run_experiment, write_csv,
    ExperimentConfig, Mode, Ratio,
};
use goldilocks::Error;

fn small(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default().with_seed(seed);
    cfg.total_steps = 120;
    cfg.eval_every = 20;
    cfg
}

#[test]
fn identical_configs_give_identical_csv_bytes() {
    let cfg = small(7);
    for mode in [Mode::Goldilocks, Mode::Baseline] {
        let a = run_experiment(&cfg, mode).unwrap();
        let b = run_experiment(&cfg, mode).unwrap();
        assert_eq!(common::csv_bytes(&a.records), common::csv_bytes(&b.records));
    }
    let other = run_experiment(&small(8), Mode::Goldilocks).unwrap();
    assert_ne!(other.records, run_experiment(&cfg, Mode::Goldilocks).unwrap().records);
}

#[test]
fn baseline_never_calls_a_teacher() {
    let run = run_experiment(&small(1), Mode::Baseline).unwrap();
    assert_eq!(run.teacher_calls, 0);
    assert!(run.records.iter().all(|r| r.teacher_mu.is_none() && r.teacher_version.is_none()));

    let gold = run_experiment(&small(1), Mode::Goldilocks).unwrap();
    // one sample plus one feedback per step
    assert_eq!(gold.teacher_calls, 240);
    assert!(gold.records.iter().all(|r| r.teacher_mu.is_some()));
}

#[test]
fn zero_variance_flag_agrees_with_std_and_gradient() {
    let run = run_experiment(&small(2), Mode::Baseline).unwrap();
    assert!(run.records.iter().any(|r| r.zero_variance_flag == 1));
    for r in &run.records {
        let zero = r.zero_variance_flag == 1;
        assert_eq!(zero, r.reward_std == 0.0, "step {}", r.step);
        assert_eq!(zero, r.grad_norm == 0.0, "step {}", r.step);
        assert_eq!(r.resamples, 0);
    }
}

#[test]
fn evaluation_follows_the_schedule() {
    let mut cfg = small(3);
    cfg.total_steps = 130;
    cfg.eval_every = 40;
    let run = run_experiment(&cfg, Mode::Baseline).unwrap();
    let evaluated: Vec<u64> = run.records.iter().filter(|r| r.validation_accuracy.is_some()).map(|r| r.step).collect();
    assert_eq!(evaluated, vec![40, 80, 120, 130]);
}

#[test]
fn dapo_resamples_until_mixed_or_budget_spent() {
    let cfg = ExperimentConfig::from_toml_str(
        &small(4).to_toml_string(),
        &["loss.variant=\"dapo\"".into(), "loss.dapo_max_resamples=3".into()],
    )
    .unwrap();
    let dapo = run_experiment(&cfg, Mode::Baseline).unwrap();
    assert!(dapo.records.iter().any(|r| r.resamples > 0));
    for r in &dapo.records {
        assert!(r.resamples <= 3);
        if r.resamples < 3 {
            assert_eq!(r.zero_variance_flag, 0, "step {} stopped early on an unmixed group", r.step);
        }
    }
    let grpo = run_experiment(&small(4), Mode::Baseline).unwrap();
    let zeros = |rs: &[goldilocks::harness::MetricsRecord]| rs.iter().filter(|r| r.zero_variance_flag == 1).count();
    assert!(zeros(&dapo.records) < zeros(&grpo.records));
}

#[test]
fn policy_student_on_arithmetic_runs_both_arms() {
    let cfg = ExperimentConfig::from_toml_str(
        &small(5).to_toml_string(),
        &["dataset.kind=\"arithmetic\"".into(), "student.kind=\"policy\"".into(), "total_steps=40".into()],
    )
    .unwrap();
    for mode in [Mode::Goldilocks, Mode::Baseline] {
        let run = run_experiment(&cfg, mode).unwrap();
        assert_eq!(run.records.len(), 40);
        let acc = run.records.last().unwrap().validation_accuracy.unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
}

#[test]
fn compute_normalized_steps() {
    assert_eq!(Ratio::new(8, 6).scale(20_100), 26_800);
    assert_eq!(Ratio::new(8, 6).scale(2_000), 2_667);
    let cfg = small(6);
    assert_eq!(baseline_config(&cfg).total_steps, 160);

    let paired = compare_runs(&cfg, 50).unwrap();
    assert_eq!(paired.baseline.records.len(), 160);
    assert_eq!(paired.aligned.len(), 120);
    assert_eq!(paired.aligned.last().unwrap().baseline_step, 160);

    let short = &paired.baseline.records[..100];
    assert!(matches!(
        normalized_compare(&paired.goldilocks.records, short, cfg.compute_ratio),
        Err(Error::Alignment { needed: 160, available: 100 })
    ));
}

#[test]
fn report_writes_csvs_and_seven_plots() {
    let paired = compare_runs(&small(9), 50).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report");
    let files = emit_report(&paired.goldilocks.records, &paired.baseline.records, &out, 0.9).unwrap();
    let svgs: Vec<_> = files.iter().filter(|p| p.extension().is_some_and(|e| e == "svg")).collect();
    assert_eq!(svgs.len(), 7);
    for p in &svgs {
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("<svg"), "{}", p.display());
        assert!(text.contains("<polyline") || text.contains("<polygon"), "{}", p.display());
        assert!(text.contains("<text"), "{} has no labels", p.display());
    }
    assert_eq!(read_csv(&out.join("goldilocks.csv")).unwrap(), paired.goldilocks.records);
    assert_eq!(read_csv(&out.join("baseline.csv")).unwrap(), paired.baseline.records);
}

#[test]
fn report_refuses_empty_input_and_leaves_nothing_behind() {
    let run = run_experiment(&small(1), Mode::Baseline).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report");
    assert!(matches!(emit_report(&run.records, &[], &out, 0.9), Err(Error::EmptyReport(_))));
    assert!(!out.exists());
}

#[test]
fn csv_round_trip_is_exact() {
    let run = run_experiment(&small(11), Mode::Goldilocks).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    write_csv(&p, &run.records).unwrap();
    assert_eq!(read_csv(&p).unwrap(), run.records);
}
