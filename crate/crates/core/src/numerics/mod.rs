//! Dense complex linear-algebra kernels.
//!
//! Every routine here is a pure function of its inputs. Heavy lifting
//! (bidiagonal SVD, Schur-based eigendecomposition, LU) is delegated to
//! `faer`; this module pins the tolerance contracts the rest of the crate
//! relies on.

mod hessenberg;
mod matrix;

use faer::linalg::solvers::Solve;
use num_complex::Complex64;

pub use hessenberg::ShiftedSigmaMin;
pub use matrix::{vec_dot, vec_norm, ComplexMatrix};

use crate::error::{Error, Result};

/// Default relative cutoff for treating singular values as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Condition ratio below which [`solve`] refuses to answer.
pub const SINGULAR_RATIO: f64 = 1e-14;

/// Thin singular value decomposition `m = U·diag(s)·Vᴴ`.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub left_vectors: ComplexMatrix,
    pub singular_values: Vec<f64>,
    pub right_vectors: ComplexMatrix,
    /// Absolute threshold `DEFAULT_RANK_TOL · s_max` used for rank decisions.
    pub rank_tolerance: f64,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.singular_values
            .iter()
            .filter(|&&s| s > self.rank_tolerance)
            .count()
    }

    pub fn s_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn s_min(&self) -> f64 {
        self.singular_values.last().copied().unwrap_or(0.0)
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        let us = self.left_vectors.scale_cols(&self.singular_values);
        us.matmul(&self.right_vectors.adjoint())
    }
}

impl ComplexMatrix {
    fn scale_cols(&self, d: &[f64]) -> ComplexMatrix {
        assert_eq!(d.len(), self.cols());
        ComplexMatrix::from_fn(self.rows(), self.cols(), |i, j| self[(i, j)] * d[j])
    }
}

pub fn svd(m: &ComplexMatrix) -> Result<SvdFactors> {
    if m.is_empty() {
        return Err(Error::Shape("svd of an empty matrix".into()));
    }
    m.ensure_finite("svd input")?;
    let f = m
        .as_faer()
        .thin_svd()
        .map_err(|e| Error::Numeric(format!("svd did not converge: {e:?}")))?;
    let k = m.rows().min(m.cols());
    let mut s: Vec<f64> = (0..k).map(|i| f.S().column_vector()[i].re.max(0.0)).collect();
    let mut u = ComplexMatrix::from_faer_ref(f.U());
    let mut v = ComplexMatrix::from_faer_ref(f.V());
    // faer already sorts; keep the contract explicit in case a backend does not.
    if s.windows(2).any(|w| w[0] < w[1]) {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        s = order.iter().map(|&i| s[i]).collect();
        u = ComplexMatrix::from_fn(u.rows(), k, |i, j| u[(i, order[j])]);
        v = ComplexMatrix::from_fn(v.rows(), k, |i, j| v[(i, order[j])]);
    }
    let rank_tolerance = DEFAULT_RANK_TOL * s[0];
    Ok(SvdFactors {
        left_vectors: u,
        singular_values: s,
        right_vectors: v,
        rank_tolerance,
    })
}

/// Singular values in descending order.
pub fn singular_values(m: &ComplexMatrix) -> Result<Vec<f64>> {
    if m.is_empty() {
        return Ok(Vec::new());
    }
    m.ensure_finite("singular value input")?;
    let mut s = m
        .as_faer()
        .singular_values()
        .map_err(|e| Error::Numeric(format!("svd did not converge: {e:?}")))?;
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Moore–Penrose pseudoinverse with relative singular-value cutoff `rel_tol`.
pub fn pinv(m: &ComplexMatrix, rel_tol: f64) -> Result<ComplexMatrix> {
    if !(rel_tol > 0.0) {
        return Err(Error::param("rel_tol", "must be positive"));
    }
    if m.is_empty() {
        return Ok(ComplexMatrix::zeros(m.cols(), m.rows()));
    }
    let f = svd(m)?;
    if f.s_max() == 0.0 {
        return Ok(ComplexMatrix::zeros(m.cols(), m.rows()));
    }
    let cut = rel_tol * f.s_max();
    let inv: Vec<f64> = f
        .singular_values
        .iter()
        .map(|&s| if s > cut { 1.0 / s } else { 0.0 })
        .collect();
    Ok(f.right_vectors
        .scale_cols(&inv)
        .matmul(&f.left_vectors.adjoint()))
}

/// Eigenpairs of a square matrix, with algebraic multiplicity.
///
/// Eigenvectors are normalized to unit 2-norm.
pub fn eig(m: &ComplexMatrix) -> Result<Vec<(Complex64, Vec<Complex64>)>> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "eig of a non-square {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    if m.rows() == 0 {
        return Ok(Vec::new());
    }
    m.ensure_finite("eig input")?;
    let e = m
        .as_faer()
        .eigen()
        .map_err(|e| Error::Numeric(format!("eigensolver did not converge: {e:?}")))?;
    let n = m.rows();
    let vals = e.S().column_vector();
    let vecs = e.U();
    Ok((0..n)
        .map(|j| {
            let mut v: Vec<Complex64> = (0..n).map(|i| vecs[(i, j)]).collect();
            let nv = vec_norm(&v);
            if nv > 0.0 {
                v.iter_mut().for_each(|x| *x /= nv);
            }
            (vals[j], v)
        })
        .collect())
}

/// Eigenvalues only.
pub fn eigenvalues(m: &ComplexMatrix) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::Shape("eigenvalues of a non-square matrix".into()));
    }
    if m.rows() == 0 {
        return Ok(Vec::new());
    }
    m.ensure_finite("eig input")?;
    m.as_faer()
        .eigenvalues()
        .map_err(|e| Error::Numeric(format!("eigensolver did not converge: {e:?}")))
}

/// Smallest singular value.
pub fn sigma_min(m: &ComplexMatrix) -> Result<f64> {
    Ok(singular_values(m)?.last().copied().unwrap_or(0.0))
}

/// Largest singular value.
pub fn spectral_norm(m: &ComplexMatrix) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// Solves `m·x = rhs` for square, reasonably conditioned `m`.
pub fn solve(m: &ComplexMatrix, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !m.is_square() || m.rows() != rhs.rows() {
        return Err(Error::Shape(format!(
            "solve with {}x{} system and {}x{} rhs",
            m.rows(),
            m.cols(),
            rhs.rows(),
            rhs.cols()
        )));
    }
    let s = singular_values(m)?;
    let (smax, smin) = (s[0], *s.last().unwrap());
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if ratio <= SINGULAR_RATIO {
        return Err(Error::Singular { ratio });
    }
    let lu = m.as_faer().partial_piv_lu();
    let x = lu.solve(rhs.as_faer());
    let x = ComplexMatrix::from_faer(x);
    x.ensure_finite("solve output")?;
    Ok(x)
}

/// Orthonormal basis for the column space, dropping directions whose
/// singular values fall below `rel_tol · s_max`.
pub fn orthonormal_basis(m: &ComplexMatrix, rel_tol: f64) -> Result<ComplexMatrix> {
    let f = svd(m)?;
    let cut = rel_tol * f.s_max();
    let r = f.singular_values.iter().filter(|&&s| s > cut).count();
    Ok(f.left_vectors.sub_block(0, 0, m.rows(), r))
}
