//! JSON experiment configuration.
//!
//! Every section is optional and falls back to its defaults; unknown keys
//! are rejected. Example:
//!
//! ```json
//! {
//!   "task":    { "kind": "linreg_circulant", "dim": 16, "rank_true": 2 },
//!   "adapter": { "rank": 4, "alpha": 1.0 },
//!   "train":   { "steps": 3000, "max_lr": 0.01 },
//!   "arm":     "freq_lora",
//!   "sweep":   { "values": [1, 2, 4, 8, 16], "seeds": [0, 1, 2, 3, 4] }
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::{Arm, Axis};
use crate::adapters::{AdapterConfig, Mode};
use crate::error::{Error, Result};
use crate::training::{TaskSpec, TrainConfig};

/// Peak learning rate used by the shipped experiment configurations.
pub const EXPERIMENT_MAX_LR: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterSettings {
    pub rank: usize,
    pub alpha: f64,
}

impl Default for AdapterSettings {
    fn default() -> Self {
        AdapterSettings {
            rank: 4,
            alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    /// Axis values; `None` uses the axis default.
    pub values: Option<Vec<f64>>,
    pub arms: Vec<Arm>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            values: None,
            arms: Arm::ALL.to_vec(),
            seeds: (0..5).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    pub adapter: AdapterSettings,
    pub train: TrainConfig,
    /// Arm used by single runs (`train`, `oracle`).
    pub arm: Arm,
    pub sweep: SweepSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: TaskSpec::default(),
            adapter: AdapterSettings::default(),
            train: TrainConfig {
                max_lr: EXPERIMENT_MAX_LR,
                ..TrainConfig::default()
            },
            arm: Arm::FreqLora,
            sweep: SweepSettings::default(),
        }
    }
}

impl ExperimentConfig {
    /// Default configuration for a sweep along `axis`: the noise axis runs
    /// on `band_classify`, the rank axis on `linreg_circulant` with two true bins.
    pub fn default_for(axis: Axis) -> Self {
        let task = match axis {
            Axis::Noise => TaskSpec::band_classify(16, 4),
            Axis::Rank => TaskSpec::linreg(16, 2),
        };
        ExperimentConfig {
            task,
            ..ExperimentConfig::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            Error::Format {
                what: "config",
                message: if path == "." {
                    e.inner().to_string()
                } else {
                    format!("{path}: {}", e.inner())
                },
            }
        })?;
        de.end().map_err(|e| Error::Format {
            what: "config",
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::parse(&text).map_err(|e| match e {
            Error::Format { what, message } => Error::Format {
                what,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let section = |name: &str, r: Result<()>| {
            r.map_err(|e| match e {
                Error::InvalidConfig(m) => Error::InvalidConfig(format!("{name}: {m}")),
                other => other,
            })
        };
        section("task", self.task.validate())?;
        section("train", self.train.validate())?;
        section("adapter", self.adapter_config(self.arm, 0).validate())
    }

    /// Adapter configuration for `arm`, sized to the task.
    pub fn adapter_config(&self, arm: Arm, init_seed: u64) -> AdapterConfig {
        let mode = match arm {
            Arm::Finetune => Mode::Frozen,
            Arm::Lora => Mode::SpatialLora,
            Arm::FreqLora => Mode::FreqLora,
        };
        AdapterConfig {
            in_dim: self.task.dim,
            out_dim: self.task.out_dim(),
            rank: self.adapter.rank,
            alpha: self.adapter.alpha,
            mode,
            init_seed,
        }
    }

    /// Training configuration for `arm`; only the fine-tuning arm updates `W`.
    pub fn train_config(&self, arm: Arm, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            train_base_weight: arm == Arm::Finetune,
            ..self.train.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::TaskKind;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(
            ExperimentConfig::parse("{}").unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn partial_sections() {
        let cfg = ExperimentConfig::parse(
            r#"{"task": {"kind": "band_classify", "cutoff": 3}, "train": {"steps": 10}, "arm": "lora"}"#,
        )
        .unwrap();
        assert_eq!(cfg.task.kind, TaskKind::BandClassify);
        assert_eq!(cfg.task.cutoff, 3);
        assert_eq!(cfg.train.steps, 10);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.arm, Arm::Lora);
    }

    #[test]
    fn errors_name_the_key() {
        let err = ExperimentConfig::parse(r#"{"train": {"max_lr": "fast"}}"#).unwrap_err();
        assert!(err.to_string().contains("train.max_lr"), "{err}");
        let err = ExperimentConfig::parse(r#"{"task": {"dimm": 4}}"#).unwrap_err();
        assert!(err.to_string().contains("dimm"), "{err}");
        let err = ExperimentConfig::parse(r#"{"adapter": {"rank": 99}}"#).unwrap_err();
        assert!(err.to_string().contains("adapter"), "{err}");
        let err = ExperimentConfig::parse(r#"{"train": {"max_lr": -1}}"#).unwrap_err();
        assert!(err.to_string().contains("max_lr"), "{err}");
        assert!(ExperimentConfig::parse("{} {}").is_err());
    }

    #[test]
    fn arm_mapping() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.adapter_config(Arm::Finetune, 0).mode, Mode::Frozen);
        assert!(cfg.train_config(Arm::Finetune, 3).train_base_weight);
        assert!(!cfg.train_config(Arm::FreqLora, 3).train_base_weight);
        assert_eq!(cfg.train_config(Arm::Lora, 3).seed, 3);
    }
}
