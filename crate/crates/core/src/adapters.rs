//! Frozen linear layers with a trainable low-rank branch.
//!
//! All three layers compute `h = W x + branch(x)` with `W` (`out x in`)
//! frozen:
//!
//! * [`Mode::Frozen`]: no branch.
//! * [`Mode::SpatialLora`]: `branch(x) = up · (down · x)`.
//! * [`Mode::FreqLora`]: `branch(x) = F_out⁻¹(α · up · (down · F_in(x)))`,
//!   where `F_in`/`F_out` are the orthonormal packed real DFTs of lengths
//!   `in` and `out` (see [`crate::spectral`]).
//!
//! `down` (`k x in`) projects into the width-`k` bottleneck and `up`
//! (`out x k`) projects back out, so the update always has rank `<= k`.
//! `up` starts at zero, which makes a freshly initialized adapter compute
//! exactly `W x`. The branch is never folded into `W`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{matmul, matvec, matvec_transposed, Matrix, Rng, Vector};
use crate::spectral::{dft_adjoint, dft_real, idft_real, PackedSpectrum, SpectrumPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Frozen,
    SpatialLora,
    FreqLora,
}

impl Mode {
    pub fn as_u8(self) -> u8 {
        match self {
            Mode::Frozen => 0,
            Mode::SpatialLora => 1,
            Mode::FreqLora => 2,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Mode::Frozen),
            1 => Some(Mode::SpatialLora),
            2 => Some(Mode::FreqLora),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Frozen => "frozen",
            Mode::SpatialLora => "spatial_lora",
            Mode::FreqLora => "freq_lora",
        }
    }
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    pub in_dim: usize,
    pub out_dim: usize,
    pub rank: usize,
    /// Scales the frequency branch only.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub mode: Mode,
    #[serde(default)]
    pub init_seed: u64,
}

impl AdapterConfig {
    pub fn new(in_dim: usize, out_dim: usize, rank: usize, mode: Mode) -> Self {
        AdapterConfig {
            in_dim,
            out_dim,
            rank,
            alpha: 1.0,
            mode,
            init_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::InvalidConfig(
                "adapter dimensions must be positive".into(),
            ));
        }
        let max = self.in_dim.min(self.out_dim);
        if self.rank == 0 || self.rank > max {
            return Err(Error::InvalidConfig(format!(
                "adapter rank {} must lie in 1..={max}",
                self.rank
            )));
        }
        if !self.alpha.is_finite() {
            return Err(Error::InvalidConfig("alpha must be finite".into()));
        }
        Ok(())
    }
}

/// Frozen weight plus trainable low-rank factors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams {
    /// `out x in`, frozen.
    pub w: Matrix,
    /// `out x k`.
    pub up: Matrix,
    /// `k x in`.
    pub down: Matrix,
}

impl AdapterParams {
    /// `up = 0`, `down ~ N(0, 1/in)` drawn from `init_seed`.
    pub fn init(cfg: &AdapterConfig, w: Matrix) -> Result<Self> {
        cfg.validate()?;
        if w.shape() != (cfg.out_dim, cfg.in_dim) {
            return Err(Error::shape(
                "AdapterParams::init",
                w.shape(),
                (cfg.out_dim, cfg.in_dim),
            ));
        }
        let mut rng = Rng::new(cfg.init_seed);
        let std = 1.0 / (cfg.in_dim as f64).sqrt();
        Ok(AdapterParams {
            w,
            up: Matrix::zeros(cfg.out_dim, cfg.rank),
            down: Matrix::gaussian(cfg.rank, cfg.in_dim, std, &mut rng),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn rank(&self) -> usize {
        self.down.rows()
    }

    fn check_shapes(&self) -> Result<()> {
        let (out, inp) = self.w.shape();
        let k = self.down.rows();
        if self.down.cols() != inp {
            return Err(Error::shape("adapter down", self.down.shape(), (k, inp)));
        }
        if self.up.shape() != (out, k) {
            return Err(Error::shape("adapter up", self.up.shape(), (out, k)));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        self.check_shapes()?;
        if x.len() != self.in_dim() {
            return Err(Error::length("adapter forward", self.in_dim(), x.len()));
        }
        Ok(())
    }
}

/// Gradients of the trainable factors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGrads {
    pub d_up: Matrix,
    pub d_down: Matrix,
}

impl AdapterGrads {
    pub fn zeros_like(p: &AdapterParams) -> Self {
        AdapterGrads {
            d_up: Matrix::zeros(p.up.rows(), p.up.cols()),
            d_down: Matrix::zeros(p.down.rows(), p.down.cols()),
        }
    }
}

/// Forward plan of length `in` and inverse plan of length `out`.
#[derive(Debug, Clone)]
pub struct SpectralPlans {
    pub input: SpectrumPlan,
    pub output: SpectrumPlan,
}

impl SpectralPlans {
    pub fn new(in_dim: usize, out_dim: usize) -> Result<Self> {
        Ok(SpectralPlans {
            input: SpectrumPlan::new(in_dim)?,
            output: SpectrumPlan::new(out_dim)?,
        })
    }

    fn check(&self, p: &AdapterParams) -> Result<()> {
        if self.input.len() != p.in_dim() {
            return Err(Error::length("forward plan", p.in_dim(), self.input.len()));
        }
        if self.output.len() != p.out_dim() {
            return Err(Error::length(
                "inverse plan",
                p.out_dim(),
                self.output.len(),
            ));
        }
        Ok(())
    }
}

pub fn forward_frozen(p: &AdapterParams, x: &[f64]) -> Result<Vector> {
    if x.len() != p.in_dim() {
        return Err(Error::length("forward_frozen", p.in_dim(), x.len()));
    }
    matvec(&p.w, x)
}

/// `W x + up (down x)`, without forming `up · down`.
pub fn forward_spatial_lora(p: &AdapterParams, x: &[f64]) -> Result<Vector> {
    p.check_input(x)?;
    let mid = matvec(&p.down, x)?;
    let branch = matvec(&p.up, &mid)?;
    Ok(matvec(&p.w, x)?.add(&branch))
}

pub fn forward_freq_lora(
    p: &AdapterParams,
    alpha: f64,
    x: &[f64],
    plans: &SpectralPlans,
) -> Result<Vector> {
    p.check_input(x)?;
    plans.check(p)?;
    let branch = freq_branch(p, alpha, x, plans)?;
    Ok(matvec(&p.w, x)?.add(&branch))
}

fn freq_branch(p: &AdapterParams, alpha: f64, x: &[f64], plans: &SpectralPlans) -> Result<Vector> {
    let z = dft_real(x, &plans.input)?;
    let mid = matvec(&p.down, z.data())?;
    let s = matvec(&p.up, &mid)?.scale(alpha);
    idft_real(&PackedSpectrum::from_data(s), &plans.output)
}

/// One layer: configuration, parameters and (for the frequency mode) plans.
#[derive(Debug, Clone)]
pub struct Adapter {
    pub config: AdapterConfig,
    pub params: AdapterParams,
    plans: Option<SpectralPlans>,
}

impl Adapter {
    pub fn new(config: AdapterConfig, w: Matrix) -> Result<Self> {
        let params = AdapterParams::init(&config, w)?;
        Self::from_params(config, params)
    }

    pub fn from_params(config: AdapterConfig, params: AdapterParams) -> Result<Self> {
        config.validate()?;
        params.check_shapes()?;
        if params.w.shape() != (config.out_dim, config.in_dim) || params.rank() != config.rank {
            return Err(Error::InvalidConfig(format!(
                "parameters ({}x{}, rank {}) do not match config ({}x{}, rank {})",
                params.out_dim(),
                params.in_dim(),
                params.rank(),
                config.out_dim,
                config.in_dim,
                config.rank
            )));
        }
        let plans = match config.mode {
            Mode::FreqLora => Some(SpectralPlans::new(config.in_dim, config.out_dim)?),
            _ => None,
        };
        Ok(Adapter {
            config,
            params,
            plans,
        })
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vector> {
        match self.config.mode {
            Mode::Frozen => forward_frozen(&self.params, x),
            Mode::SpatialLora => forward_spatial_lora(&self.params, x),
            Mode::FreqLora => forward_freq_lora(&self.params, self.config.alpha, x, self.plans()),
        }
    }

    fn plans(&self) -> &SpectralPlans {
        self.plans
            .as_ref()
            .expect("frequency adapter carries plans")
    }

    /// Output of the low-rank branch alone (`h - W x`).
    pub fn branch(&self, x: &[f64]) -> Result<Vector> {
        self.params.check_input(x)?;
        match self.config.mode {
            Mode::Frozen => Ok(Vector::zeros(self.params.out_dim())),
            Mode::SpatialLora => matvec(&self.params.up, &matvec(&self.params.down, x)?),
            Mode::FreqLora => freq_branch(&self.params, self.config.alpha, x, self.plans()),
        }
    }

    /// Vector-Jacobian product for upstream gradient `g = dL/dh`.
    ///
    /// Returns gradients for `up` and `down` (zero in frozen mode) and
    /// `dL/dx`. `W` gets no gradient here; see [`weight_grad`].
    pub fn backward(&self, x: &[f64], g: &[f64]) -> Result<(AdapterGrads, Vector)> {
        let mut grads = AdapterGrads::zeros_like(&self.params);
        let dx = self.backward_accumulate(x, g, &mut grads)?;
        Ok((grads, dx))
    }

    /// Like [`Adapter::backward`] but adds into existing gradient buffers.
    pub fn backward_accumulate(
        &self,
        x: &[f64],
        g: &[f64],
        grads: &mut AdapterGrads,
    ) -> Result<Vector> {
        let p = &self.params;
        p.check_input(x)?;
        if g.len() != p.out_dim() {
            return Err(Error::length("adapter backward", p.out_dim(), g.len()));
        }
        let dx_frozen = matvec_transposed(&p.w, g)?;
        let dx_branch = match self.config.mode {
            Mode::Frozen => return Ok(dx_frozen),
            Mode::SpatialLora => {
                let mid = matvec(&p.down, x)?;
                let g_mid = matvec_transposed(&p.up, g)?;
                grads.d_up.add_outer(1.0, g, &mid);
                grads.d_down.add_outer(1.0, &g_mid, x);
                matvec_transposed(&p.down, &g_mid)?
            }
            Mode::FreqLora => {
                let alpha = self.config.alpha;
                let plans = self.plans();
                let z = dft_real(x, &plans.input)?;
                let mid = matvec(&p.down, z.data())?;
                // F_out⁻¹ is orthogonal, so its transpose is the forward transform.
                let g_spec = dft_real(g, &plans.output)?;
                let g_mid = matvec_transposed(&p.up, g_spec.data())?.scale(alpha);
                grads.d_up.add_outer(alpha, g_spec.data(), &mid);
                grads.d_down.add_outer(1.0, &g_mid, z.data());
                let g_z = matvec_transposed(&p.down, &g_mid)?;
                dft_adjoint(&PackedSpectrum::from_data(g_z), &plans.input)?
            }
        };
        Ok(dx_frozen.add(&dx_branch))
    }

    /// Dense `out x in` matrix of the branch.
    pub fn materialize_delta(&self) -> Result<Matrix> {
        materialize_delta(
            &self.params,
            self.config.mode,
            self.config.alpha,
            self.plans.as_ref(),
        )
    }

    pub fn param_count(&self) -> (usize, usize) {
        param_count(&self.config)
    }
}

/// Gradient of the loss w.r.t. `W` for a single sample: `g xᵀ`. Only the
/// full fine-tuning baseline uses it.
pub fn weight_grad_accumulate(d_w: &mut Matrix, x: &[f64], g: &[f64]) {
    d_w.add_outer(1.0, g, x);
}

pub fn weight_grad(x: &[f64], g: &[f64]) -> Matrix {
    let mut d = Matrix::zeros(g.len(), x.len());
    weight_grad_accumulate(&mut d, x, g);
    d
}

/// `(trainable, frozen)` parameter counts.
pub fn param_count(cfg: &AdapterConfig) -> (usize, usize) {
    let frozen = cfg.out_dim * cfg.in_dim;
    let trainable = match cfg.mode {
        Mode::Frozen => 0,
        Mode::SpatialLora | Mode::FreqLora => cfg.rank * (cfg.out_dim + cfg.in_dim),
    };
    (trainable, frozen)
}

/// Effective dense update of the branch.
///
/// Spatial mode returns `up · down`. Frequency mode applies the branch to
/// each standard basis vector; `plans` must be provided for it.
pub fn materialize_delta(
    p: &AdapterParams,
    mode: Mode,
    alpha: f64,
    plans: Option<&SpectralPlans>,
) -> Result<Matrix> {
    p.check_shapes()?;
    match mode {
        Mode::Frozen => Ok(Matrix::zeros(p.out_dim(), p.in_dim())),
        Mode::SpatialLora => matmul(&p.up, &p.down),
        Mode::FreqLora => {
            let plans = plans.ok_or_else(|| {
                Error::InvalidConfig("frequency mode needs spectral plans".into())
            })?;
            plans.check(p)?;
            let (out, inp) = (p.out_dim(), p.in_dim());
            let mut delta = Matrix::zeros(out, inp);
            for j in 0..inp {
                let col = freq_branch(p, alpha, &Vector::basis(inp, j), plans)?;
                for i in 0..out {
                    delta[(i, j)] = col[i];
                }
            }
            Ok(delta)
        }
    }
}
