//! Seeded random test operators shared by unit tests and the synthetic suites.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::ComplexMatrix;
#[cfg(test)]
use crate::numerics::orthonormal_basis;

pub(crate) fn random_matrix(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

#[cfg(test)]
pub(crate) fn random_unitary(n: usize, seed: u64) -> ComplexMatrix {
    orthonormal_basis(&random_matrix(n, n, seed), 1e-14).unwrap()
}

/// `Q·diag(eigs)·Qᴴ` for a random unitary `Q`.
#[cfg(test)]
pub(crate) fn random_normal(eigs: &[Complex64], seed: u64) -> ComplexMatrix {
    let q = random_unitary(eigs.len(), seed);
    q.matmul(&ComplexMatrix::from_diag(eigs)).matmul(&q.adjoint())
}
