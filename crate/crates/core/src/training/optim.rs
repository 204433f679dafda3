use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Optimizer, schedule, batching and noise settings for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Peak learning rate reached at the end of warmup.
    pub max_lr: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    /// Fraction of `steps` spent in linear warmup.
    pub warmup_fraction: f64,
    /// Warmup starts at `max_lr / div_factor`.
    pub div_factor: f64,
    pub seed: u64,
    /// Variance of the Gaussian noise added to every input, in training and evaluation.
    pub noise_variance: f64,
    /// Steps between recorded evaluations; the final step is always recorded.
    pub eval_interval: usize,
    /// Also train the base weight `W` (the full fine-tuning baseline).
    pub train_base_weight: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 3000,
            batch_size: 32,
            max_lr: 1e-4,
            weight_decay: 0.0,
            betas: (0.9, 0.999),
            eps: 1e-8,
            warmup_fraction: 0.05,
            div_factor: 25.0,
            seed: 0,
            noise_variance: 0.0,
            eval_interval: 500,
            train_base_weight: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.max_lr > 0.0 && self.max_lr.is_finite()) {
            return bad(format!("max_lr must be positive, got {}", self.max_lr));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad(format!(
                "warmup_fraction must lie in [0, 1), got {}",
                self.warmup_fraction
            ));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return bad(format!(
                "noise_variance must be nonnegative, got {}",
                self.noise_variance
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.div_factor >= 1.0) {
            return bad(format!("div_factor must be >= 1, got {}", self.div_factor));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            ));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad(format!("betas must lie in [0, 1), got ({b1}, {b2})"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule::new(
            self.max_lr,
            self.steps,
            self.warmup_fraction,
            self.div_factor,
        )
    }
}

/// Linear warmup from `max_lr / div_factor` to `max_lr`, then cosine decay
/// to zero at the last step.
///
/// With `W = floor(warmup_fraction * steps)`:
/// * `t < W`: `lr = start + (max − start) * t / W`
/// * `t >= W`: `lr = max * (1 + cos(π * min(1, (t − W) / max(1, steps − 1 − W)))) / 2`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub max_lr: f64,
    pub start_lr: f64,
    pub total_steps: usize,
    pub warmup_steps: usize,
}

impl LrSchedule {
    pub fn new(max_lr: f64, total_steps: usize, warmup_fraction: f64, div_factor: f64) -> Self {
        LrSchedule {
            max_lr,
            start_lr: max_lr / div_factor,
            total_steps,
            warmup_steps: (warmup_fraction * total_steps as f64).floor() as usize,
        }
    }

    pub fn lr(&self, step: usize) -> f64 {
        let w = self.warmup_steps;
        if step < w {
            return self.start_lr + (self.max_lr - self.start_lr) * step as f64 / w as f64;
        }
        let span = self.total_steps.saturating_sub(1 + w).max(1) as f64;
        let progress = ((step - w) as f64 / span).min(1.0);
        0.5 * self.max_lr * (1.0 + (PI * progress).cos())
    }
}

/// AdamW first and second moments, one pair per trainable matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    step: usize,
}

impl OptimState {
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        OptimState {
            m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().chain(&self.v).all(Matrix::is_finite)
    }
}

/// One AdamW update with the scheduled learning rate for `step_index`.
///
/// Decoupled weight decay: `θ ← θ (1 − lr·wd) − lr · m̂ / (√v̂ + ε)` with
/// bias-corrected moments `m̂`, `v̂`.
pub fn adamw_step(
    state: &mut OptimState,
    params: &mut [&mut Matrix],
    grads: &[&Matrix],
    cfg: &TrainConfig,
    step_index: usize,
) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(Error::length(
            "adamw_step parameter count",
            state.m.len(),
            params.len().max(grads.len()),
        ));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != m.shape() || g.shape() != m.shape() {
            return Err(Error::shape("adamw_step", p.shape(), g.shape()));
        }
    }
    let lr = cfg.schedule().lr(step_index);
    let (b1, b2) = cfg.betas;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let decay = 1.0 - lr * cfg.weight_decay;
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        let entries = p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice());
        for (((pi, &gi), mi), vi) in entries {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *pi = *pi * decay - lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
