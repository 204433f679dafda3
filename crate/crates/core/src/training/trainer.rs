use serde::{Deserialize, Serialize};

use super::loss::{argmax, cross_entropy_loss, mse_loss, EnergyHead};
use super::noise::add_gaussian_noise;
use super::optim::{adamw_step, OptimState, TrainConfig};
use super::task::{Dataset, Sample, Target, TaskKind, TaskSpec};
use crate::adapters::{
    param_count, weight_grad_accumulate, Adapter, AdapterConfig, AdapterGrads, AdapterParams,
};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng, Vector};

const BATCH_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const EVAL_STREAM: u64 = 3;

/// Adapter layer followed by the task's readout and loss.
#[derive(Debug, Clone)]
pub struct Model {
    pub layer: Adapter,
    head: Option<EnergyHead>,
}

/// Loss, its gradient w.r.t. the layer output, and whether the prediction
/// was correct (classification only).
struct SampleEval {
    loss: f64,
    d_out: Vector,
    correct: Option<bool>,
}

impl Model {
    pub fn new(layer: Adapter, kind: TaskKind) -> Self {
        let head = match kind {
            TaskKind::LinregCirculant => None,
            TaskKind::BandClassify => Some(EnergyHead { classes: 2 }),
        };
        Model { layer, head }
    }

    fn evaluate(&self, x: &[f64], target: &Target) -> Result<(Vector, SampleEval)> {
        let h = self.layer.forward(x)?;
        let eval = match (target, &self.head) {
            (Target::Values(y), None) => {
                let (loss, d_out) = mse_loss(&h, y)?;
                SampleEval {
                    loss,
                    d_out,
                    correct: None,
                }
            }
            (Target::Class(c), Some(head)) => {
                let logits = head.logits(&h);
                let (loss, d_logits) = cross_entropy_loss(&logits, *c)?;
                SampleEval {
                    loss,
                    d_out: head.backward(&h, &d_logits),
                    correct: Some(argmax(&logits) == *c),
                }
            }
            _ => {
                return Err(Error::InvalidConfig(
                    "target kind does not match model head".into(),
                ))
            }
        };
        Ok((h, eval))
    }

    /// Mean loss (and accuracy for classification) over `samples`, with
    /// inputs perturbed at `noise_variance` from `rng`.
    pub fn score(
        &self,
        samples: &[Sample],
        noise_variance: f64,
        rng: &mut Rng,
    ) -> Result<(f64, Option<f64>)> {
        let mut loss = 0.0;
        let mut correct = 0usize;
        let mut classified = false;
        for s in samples {
            let x = add_gaussian_noise(&s.x, noise_variance, rng)?;
            let (_, e) = self.evaluate(&x, &s.target)?;
            loss += e.loss;
            if let Some(ok) = e.correct {
                classified = true;
                correct += usize::from(ok);
            }
        }
        let n = samples.len() as f64;
        Ok((loss / n, classified.then(|| correct as f64 / n)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub trainable_params: usize,
    pub final_train_loss: f64,
    pub final_test_loss: f64,
    pub test_accuracy: Option<f64>,
    pub history: Vec<EvalPoint>,
}

/// Trained parameters and metrics.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: AdapterParams,
    pub metrics: RunMetrics,
}

/// Trainable parameters of a run: the adapter factors plus `W` when the
/// base weight is trained too.
pub fn param_count_for(acfg: &AdapterConfig, train_base_weight: bool) -> usize {
    let lora = param_count(acfg).0;
    if train_base_weight {
        lora + acfg.in_dim * acfg.out_dim
    } else {
        lora
    }
}

/// Generates the task data and trains one adapter on it.
pub fn train_adapter(
    cfg: &TrainConfig,
    acfg: &AdapterConfig,
    spec: &TaskSpec,
) -> Result<TrainOutcome> {
    let data = Dataset::generate(spec)?;
    train_on(cfg, acfg, &data)
}

/// Training loop on an existing dataset.
///
/// Each step samples `batch_size` training examples with replacement,
/// perturbs the inputs at `noise_variance`, averages the gradients and
/// applies one AdamW update to `up`/`down` (and `W` when
/// `train_base_weight` is set). Batch sampling, training noise and
/// evaluation noise use independent streams derived from `cfg.seed`;
/// evaluation restarts its stream every time, so every recorded metric is
/// a pure function of the configuration.
pub fn train_on(cfg: &TrainConfig, acfg: &AdapterConfig, data: &Dataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    acfg.validate()?;
    let spec = &data.spec;
    if acfg.in_dim != spec.dim || acfg.out_dim != spec.out_dim() {
        return Err(Error::InvalidConfig(format!(
            "adapter is {}x{} but the task needs {}x{}",
            acfg.out_dim,
            acfg.in_dim,
            spec.out_dim(),
            spec.dim
        )));
    }
    let mut model = Model::new(Adapter::new(acfg.clone(), data.w0.clone())?, spec.kind);
    let trainable_params = param_count_for(acfg, cfg.train_base_weight);

    let mut batch_rng = Rng::derive(cfg.seed, BATCH_STREAM);
    let mut noise_rng = Rng::derive(cfg.seed, NOISE_STREAM);
    let (out, inp) = (acfg.out_dim, acfg.in_dim);
    let mut shapes = vec![(out, acfg.rank), (acfg.rank, inp)];
    if cfg.train_base_weight {
        shapes.push((out, inp));
    }
    let mut state = OptimState::new(&shapes);
    let mut history = Vec::new();

    let evaluate = |model: &Model, step: usize| -> Result<EvalPoint> {
        let (train_loss, _) = model.score(
            &data.train,
            cfg.noise_variance,
            &mut Rng::derive(cfg.seed, EVAL_STREAM),
        )?;
        let (test_loss, test_accuracy) = model.score(
            &data.test,
            cfg.noise_variance,
            &mut Rng::derive(cfg.seed, EVAL_STREAM),
        )?;
        Ok(EvalPoint {
            step,
            train_loss,
            test_loss,
            test_accuracy,
        })
    };

    for step in 0..cfg.steps {
        let mut grads = AdapterGrads::zeros_like(&model.layer.params);
        let mut d_w = Matrix::zeros(out, inp);
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch_size {
            let sample = &data.train[batch_rng.index(data.train.len())];
            let x = add_gaussian_noise(&sample.x, cfg.noise_variance, &mut noise_rng)?;
            let (_, e) = model.evaluate(&x, &sample.target)?;
            batch_loss += e.loss;
            model.layer.backward_accumulate(&x, &e.d_out, &mut grads)?;
            if cfg.train_base_weight {
                weight_grad_accumulate(&mut d_w, &x, &e.d_out);
            }
        }
        let batch_loss = batch_loss / cfg.batch_size as f64;
        if !batch_loss.is_finite() {
            return Err(Error::Diverged {
                step,
                loss: batch_loss,
            });
        }
        let inv = 1.0 / cfg.batch_size as f64;
        let d_up = grads.d_up.scale(inv);
        let d_down = grads.d_down.scale(inv);
        let p = &mut model.layer.params;
        if cfg.train_base_weight {
            let d_w = d_w.scale(inv);
            adamw_step(
                &mut state,
                &mut [&mut p.up, &mut p.down, &mut p.w],
                &[&d_up, &d_down, &d_w],
                cfg,
                step,
            )?;
        } else {
            adamw_step(
                &mut state,
                &mut [&mut p.up, &mut p.down],
                &[&d_up, &d_down],
                cfg,
                step,
            )?;
        }
        if cfg.eval_interval > 0 && (step + 1) % cfg.eval_interval == 0 && step + 1 != cfg.steps {
            history.push(evaluate(&model, step + 1)?);
        }
    }

    let last = evaluate(&model, cfg.steps)?;
    if !(last.train_loss.is_finite() && last.test_loss.is_finite()) {
        return Err(Error::Diverged {
            step: cfg.steps,
            loss: last.test_loss,
        });
    }
    history.push(last.clone());
    Ok(TrainOutcome {
        params: model.layer.params,
        metrics: RunMetrics {
            trainable_params,
            final_train_loss: last.train_loss,
            final_test_loss: last.test_loss,
            test_accuracy: last.test_accuracy,
            history,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::Mode;

    fn quick(steps: usize) -> TrainConfig {
        TrainConfig {
            steps,
            batch_size: 8,
            max_lr: 1e-2,
            eval_interval: 10,
            ..TrainConfig::default()
        }
    }

    fn small_task() -> TaskSpec {
        TaskSpec {
            train_size: 64,
            test_size: 32,
            ..TaskSpec::linreg(8, 1)
        }
    }

    #[test]
    fn zero_steps_equals_frozen_baseline() {
        let spec = small_task();
        let data = Dataset::generate(&spec).unwrap();
        let frozen =
            train_on(&quick(0), &AdapterConfig::new(8, 8, 2, Mode::Frozen), &data).unwrap();
        for mode in [Mode::SpatialLora, Mode::FreqLora] {
            let run = train_on(&quick(0), &AdapterConfig::new(8, 8, 2, mode), &data).unwrap();
            assert_eq!(run.metrics.final_test_loss, frozen.metrics.final_test_loss);
            assert_eq!(
                run.metrics.final_train_loss,
                frozen.metrics.final_train_loss
            );
        }
    }

    #[test]
    fn lora_training_keeps_base_weight_and_improves() {
        let spec = small_task();
        let data = Dataset::generate(&spec).unwrap();
        for mode in [Mode::SpatialLora, Mode::FreqLora] {
            let run = train_on(&quick(200), &AdapterConfig::new(8, 8, 2, mode), &data).unwrap();
            assert_eq!(run.params.w.as_slice(), data.w0.as_slice());
            let first = &run.metrics.history[0];
            assert!(run.metrics.final_test_loss < first.test_loss, "{mode:?}");
        }
    }

    #[test]
    fn finetune_changes_base_weight() {
        let data = Dataset::generate(&small_task()).unwrap();
        let cfg = TrainConfig {
            train_base_weight: true,
            ..quick(20)
        };
        let run = train_on(&cfg, &AdapterConfig::new(8, 8, 2, Mode::Frozen), &data).unwrap();
        assert_ne!(run.params.w, data.w0);
        assert_eq!(run.metrics.trainable_params, 64);
    }

    #[test]
    fn deterministic_metrics() {
        let data = Dataset::generate(&small_task()).unwrap();
        let cfg = TrainConfig {
            noise_variance: 0.1,
            ..quick(30)
        };
        let acfg = AdapterConfig::new(8, 8, 2, Mode::FreqLora);
        let a = train_on(&cfg, &acfg, &data).unwrap();
        let b = train_on(&cfg, &acfg, &data).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn divergence_is_reported() {
        let data = Dataset::generate(&small_task()).unwrap();
        let cfg = TrainConfig {
            max_lr: 1e300,
            ..quick(50)
        };
        let mut acfg = AdapterConfig::new(8, 8, 2, Mode::SpatialLora);
        acfg.alpha = 1.0;
        let err = train_on(&cfg, &acfg, &data).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let data = Dataset::generate(&small_task()).unwrap();
        assert!(train_on(
            &quick(1),
            &AdapterConfig::new(16, 16, 2, Mode::FreqLora),
            &data
        )
        .is_err());
    }
}
