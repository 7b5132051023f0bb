//! Fast repeated evaluation of `σ_min(z·I − K)` for many shifts `z`.
//!
//! `K` is reduced once to upper Hessenberg form `H = QᴴKQ`. Because `Q` is
//! unitary, `σ_min(zI − K) = σ_min(zI − H)`. For each shift the Hessenberg
//! matrix `zI − H` is triangularized with `n − 1` Givens rotations (O(n²))
//! and the largest eigenvalue of `(RᴴR)⁻¹` is found by Lanczos with full
//! reorthogonalization, each step costing two triangular solves.

use faer::{Mat, Side};
use num_complex::Complex64;

use super::{singular_values, ComplexMatrix};
use crate::error::{Error, Result};

const LANCZOS_TOL: f64 = 1e-14;
const LANCZOS_MAX_STEPS: usize = 160;

/// Precomputed Hessenberg form of an operator for shifted `σ_min` queries.
#[derive(Clone, Debug)]
pub struct ShiftedSigmaMin {
    n: usize,
    /// Row-major upper Hessenberg matrix.
    h: Vec<Complex64>,
    /// Unit Householder vectors; `Q = P_0 P_1 ⋯` with `P_k = I − 2v_kv_kᴴ`.
    reflectors: Vec<Vec<Complex64>>,
}

impl ShiftedSigmaMin {
    pub fn new(k: &ComplexMatrix) -> Result<Self> {
        if !k.is_square() {
            return Err(Error::Shape("shifted sigma_min needs a square operator".into()));
        }
        k.ensure_finite("operator")?;
        let n = k.rows();
        let mut h = k.to_row_major();
        let reflectors = reduce_to_hessenberg(&mut h, n);
        Ok(Self { n, h, reflectors })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn hessenberg(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.n, self.n, |i, j| self.h[i * self.n + j])
    }

    fn shifted_triangle(&self, z: Complex64) -> Vec<Complex64> {
        let n = self.n;
        let mut r = self.h.iter().map(|v| -v).collect::<Vec<_>>();
        for i in 0..n {
            r[i * n + i] += z;
        }
        triangularize(&mut r, n);
        r
    }

    fn has_zero_pivot(&self, r: &[Complex64]) -> bool {
        (0..self.n).any(|i| r[i * self.n + i].norm() == 0.0)
    }

    /// `σ_min(z·I − K)`.
    pub fn sigma_min(&self, z: Complex64) -> f64 {
        let n = self.n;
        if n == 0 {
            return f64::INFINITY;
        }
        let r = self.shifted_triangle(z);
        if self.has_zero_pivot(&r) {
            return 0.0;
        }
        match lanczos_inverse_gram(&r, n, false).map(|(t, _)| t) {
            Some(theta) if theta.is_finite() && theta > 0.0 => 1.0 / theta.sqrt(),
            Some(theta) if theta.is_infinite() => 0.0,
            _ => {
                let rm = ComplexMatrix::from_fn(n, n, |i, j| r[i * n + j]);
                singular_values(&rm)
                    .ok()
                    .and_then(|s| s.last().copied())
                    .unwrap_or(0.0)
            }
        }
    }

    /// Smallest singular value of `z·I − K` with its unit right singular
    /// vector, or `None` when the shift is numerically singular.
    pub fn min_singular_pair(&self, z: Complex64) -> Option<(f64, Vec<Complex64>)> {
        let n = self.n;
        if n == 0 {
            return None;
        }
        let r = self.shifted_triangle(z);
        if self.has_zero_pivot(&r) {
            return None;
        }
        let (theta, v) = lanczos_inverse_gram(&r, n, true)?;
        if !(theta.is_finite() && theta > 0.0) {
            return None;
        }
        let mut v = v?;
        // One inverse-iteration step polishes the Ritz vector.
        solve_adjoint(&r, n, &mut v);
        solve_upper(&r, n, &mut v);
        let vn = norm(&v);
        if !(vn.is_finite() && vn > 0.0) {
            return None;
        }
        v.iter_mut().for_each(|x| *x /= vn);
        let sigma = norm(&upper_matvec(&r, n, &v));
        Some((sigma, self.apply_q(v)))
    }

    /// Maps a vector from Hessenberg coordinates back: `x ↦ Q x`.
    fn apply_q(&self, mut x: Vec<Complex64>) -> Vec<Complex64> {
        for v in self.reflectors.iter().rev() {
            let t = dot(v, &x) * 2.0;
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi -= vi * t;
            }
        }
        x
    }
}

fn upper_matvec(r: &[Complex64], n: usize, v: &[Complex64]) -> Vec<Complex64> {
    (0..n)
        .map(|i| (i..n).map(|j| r[i * n + j] * v[j]).sum())
        .collect()
}

fn reduce_to_hessenberg(h: &mut [Complex64], n: usize) -> Vec<Vec<Complex64>> {
    let mut reflectors = Vec::new();
    if n < 3 {
        return reflectors;
    }
    let zero = Complex64::new(0.0, 0.0);
    let mut v = vec![zero; n];
    let mut s = vec![zero; n];
    for k in 0..n - 2 {
        let norm_x = (k + 1..n).map(|i| h[i * n + k].norm_sqr()).sum::<f64>().sqrt();
        if norm_x == 0.0 {
            continue;
        }
        let x0 = h[(k + 1) * n + k];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { Complex64::new(1.0, 0.0) };
        let alpha = -phase * norm_x;
        for i in 0..n {
            v[i] = if i > k { h[i * n + k] } else { zero };
        }
        v[k + 1] -= alpha;
        let vn = (k + 1..n).map(|i| v[i].norm_sqr()).sum::<f64>().sqrt();
        if vn == 0.0 {
            continue;
        }
        for vi in v.iter_mut().skip(k + 1) {
            *vi /= vn;
        }
        // Left: H ← (I − 2vvᴴ)H on rows k+1.., columns k..
        s[k..n].iter_mut().for_each(|x| *x = zero);
        for i in k + 1..n {
            let vc = v[i].conj();
            let row = &h[i * n..(i + 1) * n];
            for j in k..n {
                s[j] += vc * row[j];
            }
        }
        for i in k + 1..n {
            let f = v[i] * 2.0;
            let row = &mut h[i * n..(i + 1) * n];
            for j in k..n {
                row[j] -= f * s[j];
            }
        }
        // Right: H ← H(I − 2vvᴴ) on all rows, columns k+1..
        for i in 0..n {
            let row = &mut h[i * n..(i + 1) * n];
            let mut t = zero;
            for j in k + 1..n {
                t += row[j] * v[j];
            }
            let t2 = t * 2.0;
            for j in k + 1..n {
                row[j] -= t2 * v[j].conj();
            }
        }
        h[(k + 1) * n + k] = alpha;
        for i in k + 2..n {
            h[i * n + k] = zero;
        }
        reflectors.push(v.clone());
    }
    reflectors
}

/// Reduces a row-major upper Hessenberg matrix to upper triangular form in
/// place by left Givens rotations.
fn triangularize(r: &mut [Complex64], n: usize) {
    for i in 0..n.saturating_sub(1) {
        let a = r[i * n + i];
        let b = r[(i + 1) * n + i];
        let rr = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if b.norm() == 0.0 || rr == 0.0 {
            continue;
        }
        let c = a / rr;
        let s = b / rr;
        let (top, bottom) = r.split_at_mut((i + 1) * n);
        let top = &mut top[i * n..];
        let bottom = &mut bottom[..n];
        for j in i..n {
            let x = top[j];
            let y = bottom[j];
            top[j] = c.conj() * x + s.conj() * y;
            bottom[j] = -s * x + c * y;
        }
        bottom[i] = Complex64::new(0.0, 0.0);
    }
}

/// Solves `Rᴴ y = x` in place (forward substitution).
fn solve_adjoint(r: &[Complex64], n: usize, x: &mut [Complex64]) {
    for i in 0..n {
        let mut acc = x[i];
        for k in 0..i {
            acc -= r[k * n + i].conj() * x[k];
        }
        x[i] = acc / r[i * n + i].conj();
    }
}

/// Solves `R w = y` in place (back substitution).
fn solve_upper(r: &[Complex64], n: usize, x: &mut [Complex64]) {
    for i in (0..n).rev() {
        let row = &r[i * n..(i + 1) * n];
        let mut acc = x[i];
        for k in i + 1..n {
            acc -= row[k] * x[k];
        }
        x[i] = acc / row[i];
    }
}

/// Largest eigenvalue of `(RᴴR)⁻¹` (and optionally its Ritz vector), or
/// `None` when the iteration breaks down.
fn lanczos_inverse_gram(
    r: &[Complex64],
    n: usize,
    want_vector: bool,
) -> Option<(f64, Option<Vec<Complex64>>)> {
    let zero = Complex64::new(0.0, 0.0);
    let max_steps = LANCZOS_MAX_STEPS.min(n);
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(max_steps);
    let mut alphas: Vec<f64> = Vec::with_capacity(max_steps);
    let mut betas: Vec<f64> = Vec::with_capacity(max_steps);

    // Fixed, structure-free start vector so results are reproducible.
    let mut q: Vec<Complex64> = (0..n)
        .map(|i| {
            let t = i as f64;
            Complex64::new(1.0 + 0.37 * (1.3 * t).sin(), 0.29 * (0.7 * t + 0.4).cos())
        })
        .collect();
    let qn = norm(&q);
    q.iter_mut().for_each(|x| *x /= qn);

    let mut theta_prev = 0.0;
    for step in 0..max_steps {
        let mut w = q.clone();
        solve_adjoint(r, n, &mut w);
        solve_upper(r, n, &mut w);
        if w.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Some((f64::INFINITY, None));
        }
        let alpha = dot(&q, &w).re;
        for (wi, qi) in w.iter_mut().zip(&q) {
            *wi -= qi * alpha;
        }
        if let (Some(prev), Some(&b)) = (basis.last(), betas.last()) {
            for (wi, pi) in w.iter_mut().zip(prev) {
                *wi -= pi * b;
            }
        }
        basis.push(q.clone());
        alphas.push(alpha);
        // Two passes of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for b in &basis {
                let p = dot(b, &w);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= bi * p;
                }
            }
        }
        let beta = norm(&w);
        let (theta, u) = largest_ritz(&alphas, &betas)?;
        let resid = beta * u[u.len() - 1].abs();
        let scale = theta.abs().max(f64::MIN_POSITIVE);
        let settled = step > 0 && (theta - theta_prev).abs() <= LANCZOS_TOL * scale;
        let finish = |theta: f64| {
            let vector = want_vector.then(|| {
                let mut y = vec![zero; n];
                for (b, ui) in basis.iter().zip(&u) {
                    for (yi, bi) in y.iter_mut().zip(b) {
                        *yi += bi * *ui;
                    }
                }
                y
            });
            Some((theta, vector))
        };
        if resid <= LANCZOS_TOL * scale || (settled && resid <= 1e-10 * scale) {
            return finish(theta);
        }
        if beta <= 1e-300 || step + 1 == n {
            return finish(theta);
        }
        theta_prev = theta;
        betas.push(beta);
        q = w.into_iter().map(|x| x / beta).collect();
        if q.iter().all(|x| *x == zero) {
            return Some((theta, None));
        }
    }
    None
}

/// Largest eigenvalue of the symmetric tridiagonal (alphas, betas) and its
/// unit eigenvector.
fn largest_ritz(alphas: &[f64], betas: &[f64]) -> Option<(f64, Vec<f64>)> {
    let k = alphas.len();
    if k == 1 {
        return Some((alphas[0], vec![1.0]));
    }
    let t = Mat::<f64>::from_fn(k, k, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j {
            betas[i]
        } else if j + 1 == i {
            betas[j]
        } else {
            0.0
        }
    });
    let e = t.self_adjoint_eigen(Side::Lower).ok()?;
    let theta = e.S().column_vector()[k - 1];
    let u = (0..k).map(|i| e.U()[(i, k - 1)]).collect();
    Some((theta, u))
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}
