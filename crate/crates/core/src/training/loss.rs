use crate::error::{Error, Result};
use crate::numerics::Vector;

/// `(1/n) Σ (pred − target)²` and its gradient `(2/n)(pred − target)`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vector)> {
    if pred.len() != target.len() {
        return Err(Error::length("mse_loss", pred.len(), target.len()));
    }
    let n = pred.len() as f64;
    let diff: Vec<f64> = pred.iter().zip(target).map(|(p, t)| p - t).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let grad = diff.iter().map(|d| 2.0 * d / n).collect::<Vec<_>>();
    Ok((loss, grad.into()))
}

/// `−log softmax(logits)[label]` and its gradient `softmax − one_hot`.
///
/// The log-sum-exp is shifted by the maximum logit and the non-maximal
/// terms go through `ln_1p`, so confident predictions keep full relative
/// precision (e.g. `[10, −10]`, label 0 gives `ln(1 + e^-20)`).
pub fn cross_entropy_loss(logits: &[f64], label: usize) -> Result<(f64, Vector)> {
    if label >= logits.len() {
        return Err(Error::InvalidConfig(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let (argmax, max) =
        logits
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            });
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let rest: f64 = exps
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != argmax)
        .map(|(_, e)| e)
        .sum();
    let loss = rest.ln_1p() + (max - logits[label]);
    let total = 1.0 + rest;
    let mut grad: Vec<f64> = exps.iter().map(|e| e / total).collect();
    // p_label − 1 without cancellation.
    let others: f64 = exps
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label)
        .map(|(_, e)| e)
        .sum();
    grad[label] = -others / total;
    Ok((loss, grad.into()))
}

/// Fixed readout that turns a layer output into class logits by energy:
/// output coordinates are split into `classes` contiguous groups and
/// `logit_c = Σ_{j in group c} h_j²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnergyHead {
    pub classes: usize,
}

impl EnergyHead {
    fn group(&self, j: usize, len: usize) -> usize {
        (j * self.classes / len).min(self.classes - 1)
    }

    pub fn logits(&self, h: &[f64]) -> Vector {
        let mut out = vec![0.0; self.classes];
        for (j, v) in h.iter().enumerate() {
            out[self.group(j, h.len())] += v * v;
        }
        out.into()
    }

    /// `dL/dh` from `dL/dlogits`.
    pub fn backward(&self, h: &[f64], d_logits: &[f64]) -> Vector {
        h.iter()
            .enumerate()
            .map(|(j, v)| 2.0 * v * d_logits[self.group(j, h.len())])
            .collect::<Vec<_>>()
            .into()
    }
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, x)| {
            if *x > best.1 {
                (i, *x)
            } else {
                best
            }
        })
        .0
}
