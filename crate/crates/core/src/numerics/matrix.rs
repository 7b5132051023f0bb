use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use faer::{Mat, MatRef};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix.
///
/// Storage is delegated to `faer`; the serialized form (CSV, binary
/// containers, [`ComplexMatrix::to_row_major`]) is always row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    inner: Mat<Complex64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows(), self.cols())?;
        for i in 0..self.rows().min(8) {
            write!(f, "  ")?;
            for j in 0..self.cols().min(8) {
                let v = self[(i, j)];
                write!(f, "{:>10.4}{:+.4}i ", v.re, v.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            inner: Mat::zeros(rows, cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: Mat::identity(n, n),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        Self {
            inner: Mat::from_fn(rows, cols, f),
        }
    }

    pub fn from_real_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut f = f;
        Self::from_fn(rows, cols, |i, j| Complex64::new(f(i, j), 0.0))
    }

    /// Builds a matrix from row-major entries, rejecting wrong lengths and
    /// non-finite values.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[Complex64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self::from_fn(rows, cols, |i, j| entries[i * cols + j]))
    }

    pub fn from_real_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        let c: Vec<Complex64> = entries.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_row_major(rows, cols, &c)
    }

    pub fn from_diag(diag: &[Complex64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { diag[i] } else { Complex64::new(0.0, 0.0) })
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let d: Vec<Complex64> = diag.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_diag(&d)
    }

    /// Single column built from a vector.
    pub fn column(v: &[Complex64]) -> Self {
        Self::from_fn(v.len(), 1, |i, _| v[i])
    }

    pub(crate) fn from_faer(inner: Mat<Complex64>) -> Self {
        Self { inner }
    }

    pub(crate) fn from_faer_ref(m: MatRef<'_, Complex64>) -> Self {
        Self {
            inner: m.to_owned(),
        }
    }

    pub fn as_faer(&self) -> MatRef<'_, Complex64> {
        self.inner.as_ref()
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.rows() == 0 || self.cols() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.entries().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn ensure_finite(&self, what: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }

    /// Iterates entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = Complex64> + '_ {
        (0..self.rows()).flat_map(move |i| (0..self.cols()).map(move |j| self.inner[(i, j)]))
    }

    pub fn to_row_major(&self) -> Vec<Complex64> {
        self.entries().collect()
    }

    pub fn row(&self, i: usize) -> Vec<Complex64> {
        (0..self.cols()).map(|j| self.inner[(i, j)]).collect()
    }

    pub fn col(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows()).map(|i| self.inner[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.rows().min(self.cols()))
            .map(|i| self.inner[(i, i)])
            .collect()
    }

    pub fn trace(&self) -> Complex64 {
        self.diagonal().into_iter().sum()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self {
            inner: self.inner.adjoint().to_owned(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            inner: self.inner.transpose().to_owned(),
        }
    }

    pub fn conj(&self) -> Self {
        Self::from_fn(self.rows(), self.cols(), |i, j| self.inner[(i, j)].conj())
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(
            self.cols(),
            rhs.rows(),
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows(),
            self.cols(),
            rhs.rows(),
            rhs.cols()
        );
        Self {
            inner: &self.inner * &rhs.inner,
        }
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols(), v.len());
        (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.inner[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_fn(self.rows(), self.cols(), |i, j| self.inner[(i, j)] * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    /// Multiplies row `i` by `d[i]`.
    pub fn scale_rows(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.rows());
        Self::from_fn(self.rows(), self.cols(), |i, j| self.inner[(i, j)] * d[i])
    }

    /// `z·I − self`.
    pub fn shifted(&self, z: Complex64) -> Self {
        assert!(self.is_square());
        Self::from_fn(self.rows(), self.cols(), |i, j| {
            let d = if i == j { z } else { Complex64::new(0.0, 0.0) };
            d - self.inner[(i, j)]
        })
    }

    pub fn sub_block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_faer_ref(self.inner.as_ref().submatrix(r0, c0, rows, cols))
    }

    /// Embeds `self` in the top-left corner of a `rows × cols` zero matrix.
    pub fn zero_padded(&self, rows: usize, cols: usize) -> Self {
        assert!(rows >= self.rows() && cols >= self.cols());
        Self::from_fn(rows, cols, |i, j| {
            if i < self.rows() && j < self.cols() {
                self.inner[(i, j)]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn norm_fro(&self) -> f64 {
        self.entries().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise deviation from Hermitian symmetry.
    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.inner[(i, j)] - self.inner[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Returns `(self + selfᴴ)/2`.
    pub fn hermitian_part(&self) -> Self {
        let n = self.rows();
        Self::from_fn(n, n, |i, j| {
            (self.inner[(i, j)] + self.inner[(j, i)].conj()) * 0.5
        })
    }

    pub fn hstack(&self, rhs: &Self) -> Self {
        assert_eq!(self.rows(), rhs.rows());
        let c = self.cols();
        Self::from_fn(self.rows(), c + rhs.cols(), |i, j| {
            if j < c {
                self.inner[(i, j)]
            } else {
                rhs.inner[(i, j - c)]
            }
        })
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, idx: (usize, usize)) -> &Complex64 {
        &self.inner[idx]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut Complex64 {
        &mut self.inner[idx]
    }
}

impl<'a> Mul<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &'a ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl<'a> Add<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &'a ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.shape(), rhs.shape());
        ComplexMatrix {
            inner: &self.inner + &rhs.inner,
        }
    }
}

impl<'a> Sub<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &'a ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.shape(), rhs.shape());
        ComplexMatrix {
            inner: &self.inner - &rhs.inner,
        }
    }
}

/// Euclidean norm of a complex vector.
pub fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `aᴴ b`.
pub fn vec_dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
