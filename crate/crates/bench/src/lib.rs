//! Deterministic inputs shared by the kernel benchmarks.

use freqlora::{Adapter, AdapterConfig, Matrix, Mode, Rng, Vector};

pub fn signal(n: usize, seed: u64) -> Vector {
    Vector::gaussian(n, &mut Rng::new(seed))
}

pub fn dense(rows: usize, cols: usize, seed: u64) -> Matrix {
    Matrix::gaussian(rows, cols, 1.0, &mut Rng::new(seed))
}

/// Square adapter with nonzero `up`, so the branch does real work.
pub fn adapter(n: usize, rank: usize, mode: Mode) -> Adapter {
    let mut layer =
        Adapter::new(AdapterConfig::new(n, n, rank, mode), dense(n, n, 1)).expect("valid adapter");
    layer.params.up = dense(n, rank, 2);
    layer
}
