//! Unitary real DFT with a length-preserving, orthonormal packing of the
//! half-spectrum.
//!
//! For a real signal `x` of length `n` the unitary transform is
//! `X_k = n^{-1/2} Σ_j x_j e^{-2πi jk/n}`. Only bins `0..=n/2` are kept
//! (the rest follow by Hermitian symmetry) and packed into `n` reals:
//!
//! ```text
//! [Re X_0, √2 Re X_1, √2 Im X_1, √2 Re X_2, √2 Im X_2, ..., (Re X_{n/2} if n even)]
//! ```
//!
//! With the `√2` on interior bins the map `x -> packed` is an orthogonal
//! matrix, so its transpose is its inverse and norms are preserved.

use std::f64::consts::{SQRT_2, TAU};

use crate::error::{Error, Result};
use crate::numerics::{Complex, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Iterative radix-2 Cooley–Tukey; `n` is a power of two.
    Radix2,
    /// Direct `O(n²)` summation.
    Naive,
}

/// Precomputed twiddles for one transform length. Immutable and `Sync`.
#[derive(Debug, Clone)]
pub struct SpectrumPlan {
    n: usize,
    /// `e^{-2πi k/n}` for `k in 0..n`.
    twiddles: Vec<Complex>,
    strategy: Strategy,
}

impl SpectrumPlan {
    pub fn new(n: usize) -> Result<Self> {
        let strategy = if n.is_power_of_two() {
            Strategy::Radix2
        } else {
            Strategy::Naive
        };
        Self::with_strategy(n, strategy)
    }

    /// Forces a strategy. `Radix2` requires a power-of-two length.
    pub fn with_strategy(n: usize, strategy: Strategy) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig(
                "transform length must be positive".into(),
            ));
        }
        if strategy == Strategy::Radix2 && !n.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "radix-2 transform needs a power-of-two length, got {n}"
            )));
        }
        let twiddles = (0..n)
            .map(|k| Complex::from_polar(1.0, -TAU * k as f64 / n as f64))
            .collect();
        Ok(SpectrumPlan {
            n,
            twiddles,
            strategy,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// Unnormalized in-place complex DFT (`inverse` flips the exponent sign).
    fn transform(&self, buf: &mut [Complex], inverse: bool) {
        debug_assert_eq!(buf.len(), self.n);
        match self.strategy {
            Strategy::Radix2 => self.radix2(buf, inverse),
            Strategy::Naive => self.naive(buf, inverse),
        }
    }

    fn twiddle(&self, idx: usize, inverse: bool) -> Complex {
        let w = self.twiddles[idx];
        if inverse {
            w.conj()
        } else {
            w
        }
    }

    fn radix2(&self, buf: &mut [Complex], inverse: bool) {
        let n = self.n;
        if n == 1 {
            return;
        }
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let stride = n / size;
            for start in (0..n).step_by(size) {
                for j in 0..half {
                    let w = self.twiddle(j * stride, inverse);
                    let u = buf[start + j];
                    let t = w * buf[start + j + half];
                    buf[start + j] = u + t;
                    buf[start + j + half] = u - t;
                }
            }
            size *= 2;
        }
    }

    fn naive(&self, buf: &mut [Complex], inverse: bool) {
        let n = self.n;
        let input = buf.to_vec();
        for (k, out) in buf.iter_mut().enumerate() {
            let mut acc = Complex::new(0.0, 0.0);
            for (j, v) in input.iter().enumerate() {
                acc += v * self.twiddle((j * k) % n, inverse);
            }
            *out = acc;
        }
    }
}

/// Real encoding of a half-spectrum; `data.len() == n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedSpectrum {
    data: Vector,
}

impl PackedSpectrum {
    pub fn from_data(data: impl Into<Vector>) -> Self {
        PackedSpectrum { data: data.into() }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &Vector {
        &self.data
    }

    pub fn into_data(self) -> Vector {
        self.data
    }

    /// Packs bins `0..=n/2` of a Hermitian spectrum of length `n`.
    /// Imaginary parts of the DC and Nyquist bins are ignored.
    pub fn pack(bins: &[Complex], n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig(
                "spectrum length must be positive".into(),
            ));
        }
        if bins.len() != n / 2 + 1 {
            return Err(Error::length("PackedSpectrum::pack", n / 2 + 1, bins.len()));
        }
        let mut data = vec![0.0; n];
        data[0] = bins[0].re;
        for k in 1..=(n - 1) / 2 {
            data[2 * k - 1] = SQRT_2 * bins[k].re;
            data[2 * k] = SQRT_2 * bins[k].im;
        }
        if n.is_multiple_of(2) {
            data[n - 1] = bins[n / 2].re;
        }
        Ok(PackedSpectrum::from_data(data))
    }

    /// Inverse of [`PackedSpectrum::pack`]: bins `0..=n/2`.
    pub fn unpack(&self) -> Vec<Complex> {
        let n = self.len();
        if n == 0 {
            return Vec::new();
        }
        let d = &self.data;
        let mut bins = vec![Complex::new(0.0, 0.0); n / 2 + 1];
        bins[0] = Complex::new(d[0], 0.0);
        for (k, bin) in bins.iter_mut().enumerate().take((n - 1) / 2 + 1).skip(1) {
            *bin = Complex::new(d[2 * k - 1], d[2 * k]) / SQRT_2;
        }
        if n.is_multiple_of(2) {
            bins[n / 2] = Complex::new(d[n - 1], 0.0);
        }
        bins
    }
}

/// Unitary DFT bins `0..=n/2` of a real signal, before packing.
pub fn half_spectrum(x: &[f64], plan: &SpectrumPlan) -> Result<Vec<Complex>> {
    if x.len() != plan.len() {
        return Err(Error::length("dft_real", plan.len(), x.len()));
    }
    let n = plan.len();
    let mut buf: Vec<Complex> = x.iter().map(|v| Complex::new(*v, 0.0)).collect();
    plan.transform(&mut buf, false);
    let scale = 1.0 / (n as f64).sqrt();
    buf.truncate(n / 2 + 1);
    buf.iter_mut().for_each(|c| *c *= scale);
    Ok(buf)
}

/// Forward transform: real signal to packed spectrum. Orthonormal.
pub fn dft_real(x: &[f64], plan: &SpectrumPlan) -> Result<PackedSpectrum> {
    let bins = half_spectrum(x, plan)?;
    PackedSpectrum::pack(&bins, plan.len())
}

/// Inverse of [`dft_real`].
///
/// Interior bins are doubled and `x_j` is the real part of the one-sided
/// synthesis sum, which is the real inverse formula itself. The output is
/// real by construction rather than by dropping a complex residue.
pub fn idft_real(s: &PackedSpectrum, plan: &SpectrumPlan) -> Result<Vector> {
    let n = plan.len();
    if s.len() != n {
        return Err(Error::length("idft_real", n, s.len()));
    }
    let bins = s.unpack();
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    buf[0] = bins[0];
    for k in 1..=(n - 1) / 2 {
        buf[k] = bins[k] * 2.0;
    }
    if n.is_multiple_of(2) {
        buf[n / 2] = bins[n / 2];
    }
    plan.transform(&mut buf, true);
    let scale = 1.0 / (n as f64).sqrt();
    Ok(Vector::from(
        buf.iter().map(|c| c.re * scale).collect::<Vec<_>>(),
    ))
}

/// Vector-Jacobian product of [`dft_real`]. The packed transform is
/// orthogonal, so this is exactly [`idft_real`].
pub fn dft_adjoint(g: &PackedSpectrum, plan: &SpectrumPlan) -> Result<Vector> {
    idft_real(g, plan)
}

/// Dense `n x n` matrix of the packed transform: `P x == dft_real(x)`.
pub fn packed_dft_matrix(plan: &SpectrumPlan) -> Matrix {
    let n = plan.len();
    let mut m = Matrix::zeros(n, n);
    for j in 0..n {
        let col = dft_real(&Vector::basis(n, j), plan).expect("plan-sized basis vector");
        for i in 0..n {
            m[(i, j)] = col.data()[i];
        }
    }
    m
}
