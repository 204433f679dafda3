//! Synthetic tasks that exercise spectral structure at desk scale.
//!
//! * `linreg_circulant`: `y = (W₀ + Δ*) x + noise` with `x ~ N(0, I)`,
//!   `W₀ ~ N(0, 1/n)` entrywise and `Δ*` a real circulant filter whose
//!   spectrum is nonzero on exactly `rank_true` bins. Interior bins are
//!   chosen first (each has rank 2 in the packed basis), then DC and
//!   Nyquist (rank 1 each).
//! * `band_classify`: label 0 signals live in bins `1..cutoff`, label 1
//!   signals in bins `cutoff..=n/2`, with Gaussian packed coefficients of
//!   total expected energy `signal_energy`. `W₀ = I`. The Bayes rule for
//!   clean inputs compares per-band energy (see [`band_energy_rule`]).
//!
//! Samples are generated train-then-test from one stream, so the splits are
//! disjoint draws.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, matmul, matvec, Matrix, Rng, Vector};
use crate::spectral::{dft_real, idft_real, packed_dft_matrix, PackedSpectrum, SpectrumPlan};

/// Stream tag for data generation.
const DATA_STREAM: u64 = 0xDA7A;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    LinregCirculant,
    BandClassify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub dim: usize,
    /// Number of nonzero spectral bins of `Δ*` (linreg only).
    pub rank_true: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// First bin of the high band (band_classify only).
    pub cutoff: usize,
    /// Standard deviation of additive target noise (linreg only).
    pub target_noise_std: f64,
    /// Standard deviation of the real and imaginary gains of `Δ*` (linreg only).
    pub delta_scale: f64,
    /// Expected squared norm of a clean input (band_classify only).
    pub signal_energy: f64,
    pub data_seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec {
            kind: TaskKind::LinregCirculant,
            dim: 16,
            rank_true: 2,
            train_size: 1024,
            test_size: 512,
            cutoff: 4,
            target_noise_std: 0.0,
            delta_scale: 0.5,
            signal_energy: 4.0,
            data_seed: 0,
        }
    }
}

impl TaskSpec {
    pub fn linreg(dim: usize, rank_true: usize) -> Self {
        TaskSpec {
            kind: TaskKind::LinregCirculant,
            dim,
            rank_true,
            ..TaskSpec::default()
        }
    }

    pub fn band_classify(dim: usize, cutoff: usize) -> Self {
        TaskSpec {
            kind: TaskKind::BandClassify,
            dim,
            cutoff,
            ..TaskSpec::default()
        }
    }

    /// Distinct spectral bins of a real signal of length `dim`.
    pub fn bin_count(&self) -> usize {
        self.dim / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.dim < 2 {
            return bad(format!("task dim must be at least 2, got {}", self.dim));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return bad("train_size and test_size must be positive".into());
        }
        if !(self.target_noise_std >= 0.0
            && self.delta_scale.is_finite()
            && self.signal_energy > 0.0)
        {
            return bad(
                "target_noise_std, delta_scale and signal_energy must be finite and in range"
                    .into(),
            );
        }
        match self.kind {
            TaskKind::LinregCirculant if self.rank_true > self.bin_count() => bad(format!(
                "rank_true {} exceeds the {} spectral bins of a length-{} signal",
                self.rank_true,
                self.bin_count(),
                self.dim
            )),
            TaskKind::BandClassify if self.cutoff < 2 || self.cutoff > self.dim / 2 => {
                bad(format!(
                    "cutoff must lie in 2..={} for dim {}, got {}",
                    self.dim / 2,
                    self.dim,
                    self.cutoff
                ))
            }
            _ => Ok(()),
        }
    }

    /// Output dimension of the model head input (layer `out_dim`).
    pub fn out_dim(&self) -> usize {
        self.dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Values(Vector),
    Class(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vector,
    pub target: Target,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub spec: TaskSpec,
    /// Frozen base weight the adapters start from.
    pub w0: Matrix,
    /// True update `Δ*` (linreg only).
    pub delta_true: Option<Matrix>,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    /// Generates the dataset from `spec.data_seed`.
    pub fn generate(spec: &TaskSpec) -> Result<Self> {
        gen_task(spec, &mut Rng::derive(spec.data_seed, DATA_STREAM))
    }
}

pub fn gen_task(spec: &TaskSpec, rng: &mut Rng) -> Result<Dataset> {
    spec.validate()?;
    match spec.kind {
        TaskKind::LinregCirculant => gen_linreg(spec, rng),
        TaskKind::BandClassify => gen_band(spec, rng),
    }
}

fn gen_linreg(spec: &TaskSpec, rng: &mut Rng) -> Result<Dataset> {
    let n = spec.dim;
    let w0 = Matrix::gaussian(n, n, 1.0 / (n as f64).sqrt(), rng);
    let block = circulant_spectrum_block(n, spec.rank_true, spec.delta_scale, rng);
    let p = packed_dft_matrix(&SpectrumPlan::new(n)?);
    let delta = matmul(&matmul(&p.transpose(), &block)?, &p)?;
    let full = w0.add(&delta)?;
    let draw = |rng: &mut Rng| -> Result<Sample> {
        let x = Vector::gaussian(n, rng);
        let clean = matvec(&full, &x)?;
        let y: Vec<f64> = clean
            .iter()
            .map(|v| v + spec.target_noise_std * rng.gaussian())
            .collect();
        Ok(Sample {
            x,
            target: Target::Values(y.into()),
        })
    };
    let train = (0..spec.train_size)
        .map(|_| draw(rng))
        .collect::<Result<Vec<_>>>()?;
    let test = (0..spec.test_size)
        .map(|_| draw(rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        spec: spec.clone(),
        w0,
        delta_true: Some(delta),
        train,
        test,
    })
}

/// Block-diagonal packed-basis matrix of a circulant filter with `bins`
/// nonzero spectral bins.
fn circulant_spectrum_block(n: usize, bins: usize, scale: f64, rng: &mut Rng) -> Matrix {
    let mut interior: Vec<usize> = (1..=(n - 1) / 2).collect();
    // Fisher–Yates
    for i in (1..interior.len()).rev() {
        let j = rng.index(i + 1);
        interior.swap(i, j);
    }
    let mut chosen: Vec<usize> = interior;
    chosen.push(0);
    if n.is_multiple_of(2) {
        chosen.push(n / 2);
    }
    chosen.truncate(bins);

    let mut block = Matrix::zeros(n, n);
    for bin in chosen {
        if bin == 0 {
            block[(0, 0)] = scale * rng.gaussian();
        } else if n.is_multiple_of(2) && bin == n / 2 {
            block[(n - 1, n - 1)] = scale * rng.gaussian();
        } else {
            let (a, b) = (scale * rng.gaussian(), scale * rng.gaussian());
            let (re, im) = (2 * bin - 1, 2 * bin);
            block[(re, re)] = a;
            block[(re, im)] = -b;
            block[(im, re)] = b;
            block[(im, im)] = a;
        }
    }
    block
}

/// Packed-spectrum slots belonging to bins in `lo..hi`.
pub fn band_slots(n: usize, lo: usize, hi: usize) -> Vec<usize> {
    let mut slots = Vec::new();
    for bin in lo..hi {
        if bin == 0 {
            slots.push(0);
        } else if n.is_multiple_of(2) && bin == n / 2 {
            slots.push(n - 1);
        } else if bin <= (n - 1) / 2 {
            slots.push(2 * bin - 1);
            slots.push(2 * bin);
        }
    }
    slots
}

fn gen_band(spec: &TaskSpec, rng: &mut Rng) -> Result<Dataset> {
    let n = spec.dim;
    let plan = SpectrumPlan::new(n)?;
    let bands = [
        band_slots(n, 1, spec.cutoff),
        band_slots(n, spec.cutoff, n / 2 + 1),
    ];
    let draw = |rng: &mut Rng| -> Result<Sample> {
        let label = (rng.next_u64() & 1) as usize;
        let slots = &bands[label];
        let std = (spec.signal_energy / slots.len() as f64).sqrt();
        let mut z = vec![0.0; n];
        for &s in slots {
            z[s] = std * rng.gaussian();
        }
        let x = idft_real(&PackedSpectrum::from_data(z), &plan)?;
        Ok(Sample {
            x,
            target: Target::Class(label),
        })
    };
    let train = (0..spec.train_size)
        .map(|_| draw(rng))
        .collect::<Result<Vec<_>>>()?;
    let test = (0..spec.test_size)
        .map(|_| draw(rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        spec: spec.clone(),
        w0: Matrix::identity(n),
        delta_true: None,
        train,
        test,
    })
}

/// Hand-coded spectral classifier: label 1 iff the mean energy per packed
/// slot above the cutoff exceeds the mean energy per slot below it.
pub fn band_energy_rule(x: &[f64], spec: &TaskSpec) -> Result<usize> {
    let n = spec.dim;
    let z = dft_real(x, &SpectrumPlan::new(n)?)?;
    let energy = |slots: &[usize]| {
        slots.iter().map(|&s| z.data()[s].powi(2)).sum::<f64>() / slots.len() as f64
    };
    let low = energy(&band_slots(n, 1, spec.cutoff));
    let high = energy(&band_slots(n, spec.cutoff, n / 2 + 1));
    Ok(usize::from(high > low))
}

/// Row norms of `P Δ Pᵀ`: the update expressed in the packed spectral basis.
pub fn packed_row_norms(delta: &Matrix) -> Result<Vec<f64>> {
    let p = packed_dft_matrix(&SpectrumPlan::new(delta.rows())?);
    let conj = matmul(&matmul(&p, delta)?, &p.transpose())?;
    Ok((0..conj.rows())
        .map(|i| dot(conj.row(i), conj.row(i)).sqrt())
        .collect())
}
