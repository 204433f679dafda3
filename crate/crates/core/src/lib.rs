//! Low-rank adaptation of frozen linear layers in the spatial and the
//! frequency domain.
//!
//! The crate is organized bottom-up:
//!
//! * [`numerics`]: dense matrices, vectors and a documented seeded PRNG.
//! * [`spectral`]: orthonormal real DFT with packed half-spectra.
//! * [`lowrank`]: one-sided Jacobi SVD and Eckart–Young truncation.
//! * [`adapters`]: frozen, spatial-LoRA and frequency-LoRA layers.
//! * [`training`]: losses, AdamW, noise injection, synthetic tasks, trainer.
//! * [`grad_check`]: central finite-difference gradient checker.
//! * [`experiment`]: sweeps, closed-form oracle, reports and file formats.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapters;
pub mod error;
pub mod experiment;
pub mod grad_check;
pub mod lowrank;
pub mod numerics;
pub mod spectral;
pub mod training;

pub use adapters::{Adapter, AdapterConfig, AdapterGrads, AdapterParams, Mode, SpectralPlans};
pub use error::{Error, Result};
pub use lowrank::{svd, truncate, SvdResult, TruncatedFactors};
pub use numerics::{Matrix, Rng, Vector};
pub use spectral::{dft_adjoint, dft_real, idft_real, PackedSpectrum, SpectrumPlan};
