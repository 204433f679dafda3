//! Dense real linear algebra, complex scalars and the seeded generator.

mod matrix;
mod rng;

pub use matrix::{dot, matmul, matvec, matvec_transposed, Matrix, Vector};
pub use rng::Rng;

/// Complex scalar used inside the Fourier transforms.
pub type Complex = num_complex::Complex64;
