use std::time::Instant;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::report::{Arm, Axis, RunReport, RunRow};
use crate::error::{Error, Result};
use crate::training::{param_count_for, train_on, Dataset, TrainOutcome};

/// Full factorial sweep over arms, axis values and seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub arms: Vec<Arm>,
    pub seeds: Vec<u64>,
    /// Task, adapter and optimizer settings shared by every run.
    pub base: ExperimentConfig,
}

pub fn default_values(axis: Axis) -> Vec<f64> {
    match axis {
        Axis::Noise => vec![0.0, 0.1, 0.2],
        Axis::Rank => vec![1.0, 2.0, 4.0, 8.0, 16.0],
    }
}

impl SweepSpec {
    pub fn new(axis: Axis, base: ExperimentConfig) -> Self {
        SweepSpec {
            axis,
            values: base
                .sweep
                .values
                .clone()
                .unwrap_or_else(|| default_values(axis)),
            arms: base.sweep.arms.clone(),
            seeds: base.sweep.seeds.clone(),
            base,
        }
    }

    pub fn default_for(axis: Axis) -> Self {
        SweepSpec::new(axis, ExperimentConfig::default_for(axis))
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.arms.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidConfig(
                "sweep values, arms and seeds must be non-empty".into(),
            ));
        }
        self.base.validate()?;
        for &v in &self.values {
            self.config_for(v)?;
        }
        Ok(())
    }

    /// Base configuration with the axis value applied.
    pub fn config_for(&self, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = self.base.clone();
        match self.axis {
            Axis::Noise => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "noise value {value} must be nonnegative"
                    )));
                }
                cfg.train.noise_variance = value;
            }
            Axis::Rank => {
                let max = cfg.task.dim.min(cfg.task.out_dim());
                if value.fract() != 0.0 || value < 1.0 || value > max as f64 {
                    return Err(Error::InvalidConfig(format!(
                        "rank value {value} must be an integer in 1..={max}"
                    )));
                }
                cfg.adapter.rank = value as usize;
            }
        }
        Ok(cfg)
    }

    /// Jobs in report order: arm, then value, then seed.
    pub fn jobs(&self) -> Vec<(Arm, f64, u64)> {
        let mut jobs = Vec::with_capacity(self.arms.len() * self.values.len() * self.seeds.len());
        for &arm in &self.arms {
            for &value in &self.values {
                for &seed in &self.seeds {
                    jobs.push((arm, value, seed));
                }
            }
        }
        jobs
    }
}

/// Trains one arm with `seed` as both the training and the init seed.
pub fn run_arm(
    cfg: &ExperimentConfig,
    arm: Arm,
    seed: u64,
    data: &Dataset,
) -> Result<TrainOutcome> {
    train_on(
        &cfg.train_config(arm, seed),
        &cfg.adapter_config(arm, seed),
        data,
    )
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub report: RunReport,
    /// One message per failed run; failed runs still have a row.
    pub failures: Vec<String>,
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    run_sweep_with(spec, true)
}

/// Runs every combination, in parallel when `parallel` is set. Results
/// do not depend on scheduling: every run owns its random streams.
pub fn run_sweep_with(spec: &SweepSpec, parallel: bool) -> Result<SweepOutcome> {
    spec.validate()?;
    let data = Dataset::generate(&spec.base.task)?;
    let jobs = spec.jobs();
    let run = |&(arm, value, seed): &(Arm, f64, u64)| -> (RunRow, Option<String>) {
        let cfg = spec.config_for(value).expect("validated");
        let start = Instant::now();
        let result = run_arm(&cfg, arm, seed, &data);
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let params = param_count_for(&cfg.adapter_config(arm, seed), arm == Arm::Finetune);
        let mut row = RunRow {
            arm,
            axis: spec.axis,
            value,
            seed,
            params,
            train_loss: None,
            test_loss: None,
            accuracy: None,
            wall_ms,
        };
        match result {
            Ok(out) => {
                row.train_loss = Some(out.metrics.final_train_loss);
                row.test_loss = Some(out.metrics.final_test_loss);
                row.accuracy = out.metrics.test_accuracy;
                (row, None)
            }
            Err(e) => (
                row,
                Some(format!(
                    "{} {}={} seed={}: {e}",
                    arm.name(),
                    spec.axis.name(),
                    value,
                    seed
                )),
            ),
        }
    };
    let results: Vec<(RunRow, Option<String>)> = if parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };
    let mut rows = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (row, failure) in results {
        rows.push(row);
        failures.extend(failure);
    }
    Ok(SweepOutcome {
        report: RunReport::from_rows(rows),
        failures,
    })
}
