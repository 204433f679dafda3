//! Central finite-difference gradient checks.
//!
//! Parameters are passed as a [`ParamPack`]: named blocks flattened into a
//! single coordinate vector so the checker can report which matrix entry
//! disagrees.

use std::fmt;

use crate::adapters::{weight_grad, Adapter, AdapterConfig, AdapterParams, Mode};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng, Vector};
use crate::training::{cross_entropy_loss, mse_loss, EnergyHead};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;

/// Denominator floor of the relative error.
const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
struct Block {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

/// Named parameter blocks over one flat coordinate vector.
#[derive(Debug, Clone, Default)]
pub struct ParamPack {
    blocks: Vec<Block>,
    values: Vec<f64>,
}

impl ParamPack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_matrix(mut self, name: &str, m: &Matrix) -> Self {
        self.push(name, m.rows(), m.cols(), m.as_slice());
        self
    }

    pub fn with_vector(mut self, name: &str, v: &[f64]) -> Self {
        self.push(name, 1, v.len(), v);
        self
    }

    fn push(&mut self, name: &str, rows: usize, cols: usize, data: &[f64]) {
        self.blocks.push(Block {
            name: name.to_owned(),
            rows,
            cols,
            offset: self.values.len(),
        });
        self.values.extend_from_slice(data);
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Block `name` of a flat vector laid out like this pack.
    pub fn block_of(&self, flat: &[f64], name: &str) -> Matrix {
        let b = self
            .blocks
            .iter()
            .find(|b| b.name == name)
            .unwrap_or_else(|| panic!("no parameter block named {name}"));
        Matrix::from_vec(
            b.rows,
            b.cols,
            flat[b.offset..b.offset + b.rows * b.cols].to_vec(),
        )
        .expect("block shape is consistent")
    }

    fn locate(&self, index: usize) -> Coordinate {
        let b = self
            .blocks
            .iter()
            .rev()
            .find(|b| b.offset <= index)
            .expect("index within pack");
        let local = index - b.offset;
        Coordinate {
            block: b.name.clone(),
            row: local / b.cols,
            col: local % b.cols,
            flat: index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coordinate {
    pub block: String,
    pub row: usize,
    pub col: usize,
    pub flat: usize,
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{},{}]", self.block, self.row, self.col)
    }
}

#[derive(Debug, Clone)]
pub struct GradReport {
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub worst_coordinate: Coordinate,
    pub analytic: f64,
    pub numeric: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl fmt::Display for GradReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} max_rel={:.3e} max_abs={:.3e} worst={} analytic={:.6e} numeric={:.6e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.max_rel_err,
            self.max_abs_err,
            self.worst_coordinate,
            self.analytic,
            self.numeric
        )
    }
}

/// Compares the analytic gradient returned by `loss_fn` at `params` with
/// central differences `(f(θ+he_i) − f(θ−he_i)) / 2h`.
///
/// `loss_fn` maps a flat parameter vector to `(loss, gradient)`; only the
/// gradient at the unperturbed point is used. Relative error is
/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn check<F>(loss_fn: F, params: &ParamPack, step: f64, tolerance: f64) -> Result<GradReport>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    if !(step > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    if params.is_empty() {
        return Err(Error::InvalidConfig("no parameters to check".into()));
    }
    let theta = params.values().to_vec();
    let (base, analytic) = loss_fn(&theta);
    if !base.is_finite() {
        return Err(Error::NonFiniteProbe { coordinate: 0 });
    }
    if analytic.len() != theta.len() {
        return Err(Error::length(
            "grad_check analytic gradient",
            theta.len(),
            analytic.len(),
        ));
    }

    let mut probe = theta.clone();
    let mut worst = (0usize, -1.0f64, 0.0f64);
    let mut max_abs = 0.0f64;
    for i in 0..theta.len() {
        probe[i] = theta[i] + step;
        let plus = loss_fn(&probe).0;
        probe[i] = theta[i] - step;
        let minus = loss_fn(&probe).0;
        probe[i] = theta[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFiniteProbe { coordinate: i });
        }
        let numeric = (plus - minus) / (2.0 * step);
        let abs = (analytic[i] - numeric).abs();
        let rel = abs / analytic[i].abs().max(numeric.abs()).max(REL_FLOOR);
        max_abs = max_abs.max(abs);
        if rel > worst.1 {
            worst = (i, rel, numeric);
        }
    }
    let (index, max_rel, numeric) = worst;
    Ok(GradReport {
        max_abs_err: max_abs,
        max_rel_err: max_rel,
        worst_coordinate: params.locate(index),
        analytic: analytic[index],
        numeric,
        tolerance,
        passed: max_rel <= tolerance,
    })
}

/// Layer and loss combinations covered by [`run_suite`].
pub const SUITE_CASES: [&str; 8] = [
    "mse",
    "cross_entropy",
    "energy_head+cross_entropy",
    "frozen+mse",
    "spatial_lora+mse",
    "freq_lora+mse",
    "spatial_lora+energy_head+cross_entropy",
    "freq_lora+energy_head+cross_entropy",
];

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub case: &'static str,
    pub instance: usize,
    pub shape: String,
    pub report: GradReport,
}

#[derive(Clone, Copy)]
enum Head {
    Mse,
    EnergyCe,
}

/// Scalar loss on a layer output and its gradient w.r.t. that output.
fn head_loss(head: Head, h: &[f64], target: &[f64], label: usize) -> (f64, Vector) {
    match head {
        Head::Mse => mse_loss(h, target).expect("matching lengths"),
        Head::EnergyCe => {
            let e = EnergyHead { classes: 2 };
            let logits = e.logits(h);
            let (loss, d_logits) = cross_entropy_loss(&logits, label).expect("valid label");
            (loss, e.backward(h, &d_logits))
        }
    }
}

/// Checks `instances` random instances of every case in [`SUITE_CASES`]
/// at the default step and tolerance. Shapes vary per instance and
/// include non-power-of-two lengths.
pub fn run_suite(instances: usize, seed: u64) -> Result<Vec<SuiteResult>> {
    let mut results = Vec::with_capacity(instances * SUITE_CASES.len());
    for (c, &case) in SUITE_CASES.iter().enumerate() {
        for instance in 0..instances {
            let mut rng = Rng::derive(seed, (c * 1_000_003 + instance) as u64);
            let out = 2 + rng.index(11);
            let inp = 2 + rng.index(11);
            let k = 1 + rng.index(out.min(inp));
            let alpha = 0.5 + 1.5 * rng.uniform();
            let label = rng.index(2);
            let target = Vector::gaussian(out, &mut rng);
            let (shape, report) = match case {
                "mse" => {
                    let pred = Vector::gaussian(out, &mut rng);
                    let pack = ParamPack::new().with_vector("prediction", &pred);
                    let f = |t: &[f64]| {
                        let (l, g) = head_loss(Head::Mse, t, &target, label);
                        (l, g.into_vec())
                    };
                    (
                        format!("n={out}"),
                        check(f, &pack, DEFAULT_STEP, DEFAULT_TOLERANCE)?,
                    )
                }
                "cross_entropy" => {
                    let classes = 2 + rng.index(5);
                    let logits = Vector::gaussian(classes, &mut rng).scale(2.0);
                    let label = rng.index(classes);
                    let pack = ParamPack::new().with_vector("logits", &logits);
                    let f = |t: &[f64]| {
                        let (l, g) = cross_entropy_loss(t, label).expect("valid label");
                        (l, g.into_vec())
                    };
                    (
                        format!("classes={classes}"),
                        check(f, &pack, DEFAULT_STEP, DEFAULT_TOLERANCE)?,
                    )
                }
                "energy_head+cross_entropy" => {
                    let h = Vector::gaussian(out, &mut rng).scale(0.5);
                    let pack = ParamPack::new().with_vector("h", &h);
                    let f = |t: &[f64]| {
                        let (l, g) = head_loss(Head::EnergyCe, t, &target, label);
                        (l, g.into_vec())
                    };
                    (
                        format!("n={out}"),
                        check(f, &pack, DEFAULT_STEP, DEFAULT_TOLERANCE)?,
                    )
                }
                _ => {
                    let (mode, head) = match case {
                        "frozen+mse" => (Mode::Frozen, Head::Mse),
                        "spatial_lora+mse" => (Mode::SpatialLora, Head::Mse),
                        "freq_lora+mse" => (Mode::FreqLora, Head::Mse),
                        "spatial_lora+energy_head+cross_entropy" => {
                            (Mode::SpatialLora, Head::EnergyCe)
                        }
                        _ => (Mode::FreqLora, Head::EnergyCe),
                    };
                    let scale = 0.5 / (inp as f64).sqrt();
                    let w = Matrix::gaussian(out, inp, scale, &mut rng);
                    let up = Matrix::gaussian(out, k, 0.5, &mut rng);
                    let down = Matrix::gaussian(k, inp, scale, &mut rng);
                    let x = Vector::gaussian(inp, &mut rng);
                    let cfg = AdapterConfig {
                        alpha,
                        ..AdapterConfig::new(inp, out, k, mode)
                    };
                    let pack = if mode == Mode::Frozen {
                        ParamPack::new().with_matrix("w", &w).with_vector("x", &x)
                    } else {
                        ParamPack::new()
                            .with_matrix("up", &up)
                            .with_matrix("down", &down)
                            .with_vector("x", &x)
                    };
                    let f = |t: &[f64]| {
                        let x = pack.block_of(t, "x").into_vec();
                        let params = if mode == Mode::Frozen {
                            AdapterParams {
                                w: pack.block_of(t, "w"),
                                up: up.clone(),
                                down: down.clone(),
                            }
                        } else {
                            AdapterParams {
                                w: w.clone(),
                                up: pack.block_of(t, "up"),
                                down: pack.block_of(t, "down"),
                            }
                        };
                        let layer =
                            Adapter::from_params(cfg.clone(), params).expect("consistent shapes");
                        let h = layer.forward(&x).expect("matching input");
                        let (loss, g) = head_loss(head, &h, &target, label);
                        let (grads, dx) = layer.backward(&x, &g).expect("matching output");
                        let mut flat = if mode == Mode::Frozen {
                            weight_grad(&x, &g).into_vec()
                        } else {
                            let mut v = grads.d_up.into_vec();
                            v.extend(grads.d_down.into_vec());
                            v
                        };
                        flat.extend(dx.into_vec());
                        (loss, flat)
                    };
                    (
                        format!("{out}x{inp} k={k} alpha={alpha:.3}"),
                        check(f, &pack, DEFAULT_STEP, DEFAULT_TOLERANCE)?,
                    )
                }
            };
            results.push(SuiteResult {
                case,
                instance,
                shape,
                report,
            });
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let pack = ParamPack::new().with_vector("theta", &[0.3, -1.2, 2.0, 0.0]);
        let report = check(
            |t| {
                (
                    t.iter().map(|v| v * v).sum(),
                    t.iter().map(|v| 2.0 * v).collect(),
                )
            },
            &pack,
            DEFAULT_STEP,
            1e-8,
        )
        .unwrap();
        assert!(report.max_abs_err < 1e-10, "{report}");
        assert!(report.passed);
    }

    fn spatial_loss(
        pack: &ParamPack,
        w: &Matrix,
        x: &Vector,
        target: &Vector,
    ) -> impl Fn(&[f64]) -> (f64, Vec<f64>) {
        let pack = pack.clone();
        let (w, x, target) = (w.clone(), x.clone(), target.clone());
        move |flat: &[f64]| {
            let params = AdapterParams {
                w: w.clone(),
                up: pack.block_of(flat, "up"),
                down: pack.block_of(flat, "down"),
            };
            let a = Adapter::from_params(AdapterConfig::new(4, 4, 2, Mode::SpatialLora), params)
                .unwrap();
            let h = a.forward(&x).unwrap();
            let (loss, g) = mse_loss(&h, &target).unwrap();
            let (grads, _) = a.backward(&x, &g).unwrap();
            let mut flat_grad = grads.d_up.into_vec();
            flat_grad.extend(grads.d_down.into_vec());
            (loss, flat_grad)
        }
    }

    #[test]
    fn spatial_layer_with_mse() {
        let mut rng = Rng::new(77);
        let w = Matrix::gaussian(4, 4, 1.0, &mut rng);
        let up = Matrix::gaussian(4, 2, 1.0, &mut rng);
        let down = Matrix::gaussian(2, 4, 1.0, &mut rng);
        let x = Vector::gaussian(4, &mut rng);
        let target = Vector::gaussian(4, &mut rng);
        let pack = ParamPack::new()
            .with_matrix("up", &up)
            .with_matrix("down", &down);
        let report = check(
            spatial_loss(&pack, &w, &x, &target),
            &pack,
            DEFAULT_STEP,
            1e-6,
        )
        .unwrap();
        assert!(report.passed, "{report}");
    }

    #[test]
    fn corrupted_gradient_is_located() {
        let mut rng = Rng::new(78);
        let w = Matrix::gaussian(4, 4, 1.0, &mut rng);
        let up = Matrix::gaussian(4, 2, 1.0, &mut rng);
        let down = Matrix::gaussian(2, 4, 1.0, &mut rng);
        let x = Vector::gaussian(4, &mut rng);
        let target = Vector::gaussian(4, &mut rng);
        let pack = ParamPack::new()
            .with_matrix("up", &up)
            .with_matrix("down", &down);
        let honest = spatial_loss(&pack, &w, &x, &target);
        // down[1,2] lives at flat index 8 + 1*4 + 2 = 14.
        let corrupted = |flat: &[f64]| {
            let (l, mut g) = honest(flat);
            g[14] *= 2.0;
            (l, g)
        };
        let report = check(corrupted, &pack, DEFAULT_STEP, DEFAULT_TOLERANCE).unwrap();
        assert!(!report.passed);
        assert_eq!(report.worst_coordinate.block, "down");
        assert_eq!(
            (report.worst_coordinate.row, report.worst_coordinate.col),
            (1, 2)
        );
        assert_eq!(report.worst_coordinate.flat, 14);
    }

    #[test]
    fn invalid_inputs() {
        let pack = ParamPack::new().with_vector("t", &[1.0]);
        let f = |t: &[f64]| (t[0], vec![1.0]);
        assert!(check(f, &pack, 0.0, 1e-5).is_err());
        let blowup = |t: &[f64]| (if t[0] > 1.0 { f64::NAN } else { t[0] }, vec![1.0]);
        assert!(matches!(
            check(blowup, &pack, 1e-5, 1e-5),
            Err(Error::NonFiniteProbe { coordinate: 0 })
        ));
    }

    #[test]
    fn suite_is_deterministic_and_passes() {
        let a = run_suite(2, 9).unwrap();
        let b = run_suite(2, 9).unwrap();
        assert_eq!(a.len(), 2 * SUITE_CASES.len());
        for (x, y) in a.iter().zip(&b) {
            assert!(
                x.report.passed,
                "{} #{} {}: {}",
                x.case, x.instance, x.shape, x.report
            );
            assert_eq!(x.report.max_rel_err, y.report.max_rel_err);
        }
    }
}
