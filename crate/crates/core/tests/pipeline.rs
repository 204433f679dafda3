use freqlora::experiment::{
    mean_std, run_sweep, Arm, Axis, ExperimentConfig, RunReport, SweepSpec,
};
use freqlora::training::TrainConfig;

fn small_rank_sweep() -> SweepSpec {
    let cfg = ExperimentConfig::parse(
        r#"{
            "task": {"train_size": 128, "test_size": 64, "target_noise_std": 0.05},
            "train": {"steps": 150, "batch_size": 16, "max_lr": 0.01, "eval_interval": 50},
            "sweep": {"values": [1, 4], "arms": ["lora", "freq_lora"], "seeds": [0, 1, 2]}
        }"#,
    )
    .unwrap();
    SweepSpec::new(Axis::Rank, cfg)
}

#[test]
fn csv_rows_reproduce_embedded_aggregates() {
    let outcome = run_sweep(&small_rank_sweep()).unwrap();
    assert!(outcome.failures.is_empty(), "{:?}", outcome.failures);
    let report = outcome.report;
    assert_eq!(report.rows.len(), 2 * 2 * 3);

    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    let parsed = RunReport::read_csv(csv.as_slice()).unwrap();
    let embedded = RunReport::from_json(&report.to_json().unwrap())
        .unwrap()
        .aggregates;

    for agg in &embedded {
        let losses: Vec<f64> = parsed
            .rows
            .iter()
            .filter(|r| r.arm == agg.arm && r.value == agg.value)
            .filter_map(|r| r.test_loss)
            .collect();
        assert_eq!(losses.len(), 3);
        let (mean, std) = mean_std(&losses);
        assert!((mean.unwrap() - agg.test_loss_mean.unwrap()).abs() <= 1e-12);
        assert!((std.unwrap() - agg.test_loss_std.unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn regression_rows_have_no_accuracy_and_params_follow_rank() {
    let report = run_sweep(&small_rank_sweep()).unwrap().report;
    for row in &report.rows {
        assert_eq!(row.accuracy, None);
        assert_eq!(row.params, row.value as usize * 32);
        assert!(row.wall_ms >= 0.0);
    }
    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let first = text.lines().nth(1).unwrap();
    let fields: Vec<&str> = first.split(',').collect();
    assert_eq!(fields[0], "lora");
    assert_eq!(fields[1], "rank");
    assert_eq!(fields[7], "");
}

#[test]
fn zero_steps_every_arm_matches_untrained_metric() {
    let mut spec = SweepSpec::default_for(Axis::Noise);
    spec.base.train = TrainConfig {
        steps: 0,
        ..spec.base.train.clone()
    };
    spec.seeds = vec![0, 1];
    let report = run_sweep(&spec).unwrap().report;
    for (value, seed) in [(0.0, 0), (0.1, 0), (0.2, 1)] {
        let losses: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.value == value && r.seed == seed)
            .map(|r| r.test_loss.unwrap())
            .collect();
        assert!(losses.windows(2).all(|w| w[0] == w[1]), "{losses:?}");
    }
    let clean: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.value == 0.0)
        .map(|r| r.test_loss.unwrap())
        .collect();
    assert!(
        clean.windows(2).all(|w| w[0] == w[1]),
        "noise-free evaluation should not depend on the seed"
    );
    assert!(report.rows.iter().any(|r| r.arm == Arm::Finetune));
}
