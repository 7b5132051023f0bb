//! Pseudo-resolvent evaluation, pseudospectral scans and spectrum detection.
//!
//! With data matrices `Ψ_X, Ψ_Y` the Sherman–Morrison–Woodbury form
//!
//! ```text
//! R_N(z) = (1/z)·I + (1/z²)·Ψ_X^† (I − (1/z)·Ψ_Y Ψ_X^†)^{-1} Ψ_Y
//! ```
//!
//! equals `(z·I − K_N)^{-1}` with `K_N = Ψ_X^† Ψ_Y`. In generator mode `Ψ_Y`
//! is replaced by the finite-difference matrix `Ψ'_X` and `K_N` by `A_N`.
//! Norm scans use `1/‖R_N(z)‖ = σ_min(z·I − K_N)`.

use std::io::Write;
use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::SnapshotMatrices;
use crate::edmd::{generator_from_koopman, koopman, KoopmanMatrix, KoopmanRoute};
use crate::error::{Error, Result};
use crate::numerics::{
    pinv, solve, svd, ComplexMatrix, ShiftedSigmaMin, DEFAULT_RANK_TOL,
};
use crate::plot;
use crate::systems::fmt17;

/// Below this modulus the SMW form is replaced by a direct solve.
pub const POLE_GUARD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolventMode {
    Koopman,
    Generator,
}

/// Precomputed data for evaluating `R_N(z)` by several routes.
#[derive(Debug)]
pub struct ResolventEvaluator {
    psi_x_pinv: ComplexMatrix,
    psi_y: ComplexMatrix,
    operator: ComplexMatrix,
    route: KoopmanRoute,
    mode: ResolventMode,
    cached_product: OnceLock<ComplexMatrix>,
    shifted: OnceLock<Option<ShiftedSigmaMin>>,
}

impl Clone for ResolventEvaluator {
    fn clone(&self) -> Self {
        Self {
            psi_x_pinv: self.psi_x_pinv.clone(),
            psi_y: self.psi_y.clone(),
            operator: self.operator.clone(),
            route: self.route,
            mode: self.mode,
            cached_product: OnceLock::new(),
            shifted: OnceLock::new(),
        }
    }
}

impl ResolventEvaluator {
    /// Builds the evaluator from weighted snapshot data.
    ///
    /// The operator used by the direct and σ_min routes comes from `route`;
    /// the SMW route always uses `pinv(√W Ψ_X)` and `√W Ψ_Y` (or `√W Ψ'_X`).
    pub fn from_snapshots(snap: &SnapshotMatrices, mode: ResolventMode, route: KoopmanRoute) -> Result<Self> {
        let sw = snap.sqrt_weights();
        let x = snap.psi_x.scale_rows(&sw);
        let psi_x_pinv = pinv(&x, DEFAULT_RANK_TOL)?;
        let k = match route {
            KoopmanRoute::PseudoinverseRoute => {
                let y = snap.psi_y.scale_rows(&sw);
                KoopmanMatrix {
                    k: psi_x_pinv.matmul(&y),
                    source: route,
                    dict_size: x.cols(),
                }
            }
            KoopmanRoute::GramRoute => koopman(snap, route)?,
        };
        let (psi_y, operator) = match mode {
            ResolventMode::Koopman => (snap.psi_y.scale_rows(&sw), k.k),
            ResolventMode::Generator => (
                snap.psi_x_dot().scale_rows(&sw),
                generator_from_koopman(&k, snap.dt)?.a,
            ),
        };
        operator.ensure_finite("operator")?;
        Ok(Self {
            psi_x_pinv,
            psi_y,
            operator,
            route,
            mode,
            cached_product: OnceLock::new(),
            shifted: OnceLock::new(),
        })
    }

    /// Evaluator for an explicit operator, represented as the data pair
    /// `Ψ_X = I`, `Ψ_Y = K` so that every route applies unchanged.
    pub fn from_operator(k: &ComplexMatrix, mode: ResolventMode) -> Result<Self> {
        if !k.is_square() {
            return Err(Error::Shape(format!("operator must be square, got {:?}", k.shape())));
        }
        k.ensure_finite("operator")?;
        Ok(Self {
            psi_x_pinv: ComplexMatrix::identity(k.rows()),
            psi_y: k.clone(),
            operator: k.clone(),
            route: KoopmanRoute::PseudoinverseRoute,
            mode,
            cached_product: OnceLock::new(),
            shifted: OnceLock::new(),
        })
    }

    pub fn mode(&self) -> ResolventMode {
        self.mode
    }

    pub fn route(&self) -> KoopmanRoute {
        self.route
    }

    /// `K_N` in Koopman mode, `A_N` in generator mode.
    pub fn operator(&self) -> &ComplexMatrix {
        &self.operator
    }

    pub fn dict_size(&self) -> usize {
        self.operator.rows()
    }

    pub fn psi_x_pinv(&self) -> &ComplexMatrix {
        &self.psi_x_pinv
    }

    pub fn psi_y(&self) -> &ComplexMatrix {
        &self.psi_y
    }

    /// `Ψ_Y Ψ_X^†` (M×M), computed on first use.
    pub fn cached_product(&self) -> &ComplexMatrix {
        self.cached_product
            .get_or_init(|| self.psi_y.matmul(&self.psi_x_pinv))
    }

    fn shifted(&self) -> Option<&ShiftedSigmaMin> {
        self.shifted
            .get_or_init(|| ShiftedSigmaMin::new(&self.operator).ok())
            .as_ref()
    }

    /// `R_N(z)` by the Sherman–Morrison–Woodbury identity.
    pub fn smw_resolvent(&self, z: Complex64) -> Result<ComplexMatrix> {
        if z.norm() == 0.0 {
            return Err(Error::Pole);
        }
        if z.norm() < POLE_GUARD {
            return self.direct_resolvent(z);
        }
        let m = self.psi_y.rows();
        let inv_z = z.inv();
        let inner = &ComplexMatrix::identity(m) - &self.cached_product().scale(inv_z);
        let middle = match solve(&inner, &self.psi_y) {
            Ok(x) => x,
            Err(Error::Singular { .. }) => return Err(Error::SingularAt { z }),
            Err(e) => return Err(e),
        };
        let tail = self.psi_x_pinv.matmul(&middle).scale(inv_z * inv_z);
        let n = self.dict_size();
        Ok(&ComplexMatrix::identity(n).scale(inv_z) + &tail)
    }

    /// `(z·I − K_N)^{-1}` by a linear solve.
    pub fn direct_resolvent(&self, z: Complex64) -> Result<ComplexMatrix> {
        let n = self.dict_size();
        match solve(&self.operator.shifted(z), &ComplexMatrix::identity(n)) {
            Ok(r) => Ok(r),
            Err(Error::Singular { .. }) => Err(Error::EigenvalueHit { z }),
            Err(e) => Err(e),
        }
    }

    /// `σ_min(z·I − K_N)`, i.e. `1/‖R_N(z)‖` (0 at an exact eigenvalue).
    pub fn inv_resolvent_norm(&self, z: Complex64) -> f64 {
        if let Some(f) = self.shifted() {
            let s = f.sigma_min(z);
            if s.is_finite() {
                return s;
            }
        }
        crate::numerics::sigma_min(&self.operator.shifted(z)).unwrap_or(0.0)
    }

    /// Direction maximally amplified by `R_N(z)`.
    pub fn pseudoeigenfunction(&self, z: Complex64) -> Result<Pseudoeigenfunction> {
        let (sigma, mut coeffs) = match self.shifted().and_then(|f| f.min_singular_pair(z)) {
            Some(pair) => pair,
            None => {
                let f = svd(&self.operator.shifted(z))?;
                let last = f.singular_values.len() - 1;
                (f.singular_values[last], f.right_vectors.col(last))
            }
        };
        fix_phase(&mut coeffs);
        let amplification = if sigma > 0.0 { 1.0 / sigma } else { f64::INFINITY };
        Ok(Pseudoeigenfunction {
            z,
            coeffs,
            amplification,
        })
    }

    pub fn scan_points(&self, points: &[Complex64]) -> Vec<f64> {
        // Build the factorization before fanning out.
        let _ = self.shifted();
        points.par_iter().map(|&z| self.inv_resolvent_norm(z)).collect()
    }

    /// `1/‖R_N(z)‖` at `z = r·e^{2πij/n}`.
    pub fn scan_circle(&self, radius: f64, n_points: usize) -> Result<PseudospectrumGrid> {
        let points = circle_points(radius, n_points)?;
        let inv_norms = self.scan_points(&points);
        Ok(PseudospectrumGrid {
            points,
            inv_norms,
            kind: GridKind::Circle { radius },
        })
    }

    /// Row-major scan (real part fastest) over a complex rectangle.
    pub fn scan_rectangle(
        &self,
        re_range: [f64; 2],
        im_range: [f64; 2],
        nx: usize,
        ny: usize,
    ) -> Result<PseudospectrumGrid> {
        let points = rectangle_points(re_range, im_range, nx, ny)?;
        let inv_norms = self.scan_points(&points);
        Ok(PseudospectrumGrid {
            points,
            inv_norms,
            kind: GridKind::Rectangle {
                re_range,
                im_range,
                nx,
                ny,
            },
        })
    }
}

/// Makes the largest-modulus entry real and positive.
pub(crate) fn fix_phase(v: &mut [Complex64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.norm() > v[best].norm() * (1.0 + 1e-12) {
            best = i;
        }
    }
    let m = v[best].norm();
    if m > 0.0 {
        let phase = v[best].conj() / m;
        v.iter_mut().for_each(|x| *x *= phase);
        v[best] = Complex64::new(v[best].norm(), 0.0);
    }
}

pub fn circle_points(radius: f64, n_points: usize) -> Result<Vec<Complex64>> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::param("radius", "must be positive"));
    }
    if n_points < 4 {
        return Err(Error::param("n_points", "need at least 4 points"));
    }
    Ok((0..n_points)
        .map(|j| Complex64::from_polar(radius, 2.0 * std::f64::consts::PI * j as f64 / n_points as f64))
        .collect())
}

pub fn rectangle_points(re_range: [f64; 2], im_range: [f64; 2], nx: usize, ny: usize) -> Result<Vec<Complex64>> {
    if nx < 2 || ny < 2 {
        return Err(Error::param("nx/ny", "need at least 2 points per axis"));
    }
    if re_range.iter().chain(&im_range).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rectangle bounds"));
    }
    let lin = |r: [f64; 2], n: usize, i: usize| r[0] + (r[1] - r[0]) * i as f64 / (n - 1) as f64;
    Ok((0..ny)
        .flat_map(|iy| (0..nx).map(move |ix| Complex64::new(lin(re_range, nx, ix), lin(im_range, ny, iy))))
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pseudoeigenfunction {
    pub z: Complex64,
    pub coeffs: Vec<Complex64>,
    pub amplification: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GridKind {
    Circle {
        radius: f64,
    },
    Rectangle {
        re_range: [f64; 2],
        im_range: [f64; 2],
        nx: usize,
        ny: usize,
    },
    Points,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudospectrumGrid {
    pub points: Vec<Complex64>,
    pub inv_norms: Vec<f64>,
    pub kind: GridKind,
}

impl PseudospectrumGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.inv_norms.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn median(&self) -> f64 {
        median(&self.inv_norms)
    }

    /// Index of the smallest value (first on ties).
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.inv_norms.iter().enumerate() {
            if *v < self.inv_norms[best] {
                best = i;
            }
        }
        best
    }

    /// `re(z),im(z),inv_norm`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "re(z),im(z),inv_norm")?;
        for (z, v) in self.points.iter().zip(&self.inv_norms) {
            writeln!(w, "{},{},{}", fmt17(z.re), fmt17(z.im), fmt17(*v))?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut inv_norms = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() < 3 {
                return Err(Error::Shape(format!("grid CSV line {} has {} fields", i + 1, f.len())));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Shape(format!("grid CSV line {}: {e}", i + 1)))
            };
            points.push(Complex64::new(parse(f[0])?, parse(f[1])?));
            inv_norms.push(parse(f[2])?);
        }
        Ok(Self {
            points,
            inv_norms,
            kind: GridKind::Points,
        })
    }

    /// SVG of `log10(inv_norm)`: a heatmap for rectangles, markers otherwise.
    pub fn to_svg(&self, title: &str) -> String {
        let logs: Vec<f64> = self
            .inv_norms
            .iter()
            .map(|v| v.max(f64::MIN_POSITIVE).log10())
            .collect();
        match &self.kind {
            GridKind::Rectangle {
                re_range,
                im_range,
                nx,
                ny,
            } => plot::heatmap_svg(title, &logs, *nx, *ny, *re_range, *im_range, "log10 1/|R|"),
            GridKind::Circle { .. } | GridKind::Points => {
                let pts: Vec<(f64, f64)> = self.points.iter().map(|z| (z.re, z.im)).collect();
                plot::scatter_svg(title, &pts, &logs, Some(1.0), "log10 1/|R|")
            }
        }
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionResult {
    pub threshold: f64,
    pub detected: Vec<Complex64>,
    pub mask: Vec<bool>,
}

impl DetectionResult {
    pub fn count(&self) -> usize {
        self.detected.len()
    }

    /// Grid CSV with an extra `detected` 0/1 column.
    pub fn write_csv<W: Write>(&self, grid: &PseudospectrumGrid, mut w: W) -> std::io::Result<()> {
        writeln!(w, "re(z),im(z),inv_norm,detected")?;
        for ((z, v), d) in grid.points.iter().zip(&grid.inv_norms).zip(&self.mask) {
            writeln!(w, "{},{},{},{}", fmt17(z.re), fmt17(z.im), fmt17(*v), u8::from(*d))?;
        }
        Ok(())
    }
}

/// Grid points with `inv_norm < threshold`.
pub fn detect(grid: &PseudospectrumGrid, threshold: f64) -> Result<DetectionResult> {
    if !(threshold > 0.0) {
        return Err(Error::param("threshold", "must be positive"));
    }
    let mask: Vec<bool> = grid.inv_norms.iter().map(|v| *v < threshold).collect();
    let detected = grid
        .points
        .iter()
        .zip(&mask)
        .filter(|(_, m)| **m)
        .map(|(z, _)| *z)
        .collect();
    Ok(DetectionResult {
        threshold,
        detected,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{eigenvalues, spectral_norm, vec_norm};
    use crate::random::{random_matrix, random_normal};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn data_evaluator(m: usize, n: usize, seed: u64) -> ResolventEvaluator {
        let x = random_matrix(m, n, seed);
        let y = random_matrix(m, n, seed + 1000);
        let snap = SnapshotMatrices::new(x, y, vec![1.0 / m as f64; m], 0.1).unwrap();
        ResolventEvaluator::from_snapshots(&snap, ResolventMode::Koopman, KoopmanRoute::PseudoinverseRoute).unwrap()
    }

    #[test]
    fn smw_examples() {
        let ev = ResolventEvaluator::from_operator(&ComplexMatrix::zeros(3, 3), ResolventMode::Koopman).unwrap();
        let z = c(0.3, 1.1);
        let r = ev.smw_resolvent(z).unwrap();
        assert!((&r - &ComplexMatrix::identity(3).scale(z.inv())).max_abs() < 1e-15);
        assert!(matches!(ev.smw_resolvent(c(0.0, 0.0)), Err(Error::Pole)));

        let one = ComplexMatrix::from_real_row_major(1, 1, &[1.0]).unwrap();
        let half = ComplexMatrix::from_real_row_major(1, 1, &[0.5]).unwrap();
        let snap = SnapshotMatrices::new(one, half, vec![1.0], 1.0).unwrap();
        let ev = ResolventEvaluator::from_snapshots(&snap, ResolventMode::Koopman, KoopmanRoute::GramRoute).unwrap();
        assert!((ev.smw_resolvent(c(2.0, 0.0)).unwrap()[(0, 0)] - c(2.0 / 3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn smw_matches_direct_on_random_data() {
        let ev = data_evaluator(40, 12, 5);
        let cached = ev.psi_y().matmul(ev.psi_x_pinv());
        assert!((&cached - ev.cached_product()).max_abs() < 1e-12);
        for z in circle_points(1.5, 20).unwrap() {
            let a = ev.smw_resolvent(z).unwrap();
            let b = ev.direct_resolvent(z).unwrap();
            assert!((&a - &b).norm_fro() <= 1e-10 * b.norm_fro());
        }
    }

    #[test]
    fn smw_singular_inner_system_names_z() {
        let k = ComplexMatrix::from_real_diag(&[0.5, 0.2]);
        let ev = ResolventEvaluator::from_operator(&k, ResolventMode::Koopman).unwrap();
        assert!(matches!(ev.smw_resolvent(c(0.5, 0.0)), Err(Error::SingularAt { .. })));
        assert!(matches!(ev.direct_resolvent(c(0.5, 0.0)), Err(Error::EigenvalueHit { .. })));
    }

    #[test]
    fn direct_examples_and_first_identity() {
        let ev = ResolventEvaluator::from_operator(&ComplexMatrix::zeros(2, 2), ResolventMode::Koopman).unwrap();
        assert_eq!(ev.direct_resolvent(c(1.0, 0.0)).unwrap(), ComplexMatrix::identity(2));
        let ev = ResolventEvaluator::from_operator(&ComplexMatrix::from_real_diag(&[0.5]), ResolventMode::Koopman)
            .unwrap();
        assert!((ev.direct_resolvent(c(1.5, 0.0)).unwrap()[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);

        let k = random_matrix(12, 12, 77).scale_real(0.25);
        let ev = ResolventEvaluator::from_operator(&k, ResolventMode::Koopman).unwrap();
        let (z, w) = (c(1.2, 0.4), c(-0.3, 1.7));
        let rz = ev.direct_resolvent(z).unwrap();
        let rw = ev.direct_resolvent(w).unwrap();
        let resid = &(&rz - &rw) - &rz.matmul(&rw).scale(w - z);
        let scale = (spectral_norm(&rz).unwrap() * spectral_norm(&rw).unwrap()).max(1.0);
        assert!(spectral_norm(&resid).unwrap() <= 1e-9 * scale);
    }

    #[test]
    fn inv_norm_examples() {
        let ev = ResolventEvaluator::from_operator(&ComplexMatrix::from_real_diag(&[0.5]), ResolventMode::Koopman)
            .unwrap();
        assert!((ev.inv_resolvent_norm(c(1.5, 0.0)) - 1.0).abs() < 1e-14);
        assert!(ev.inv_resolvent_norm(c(0.5, 0.0)) < 1e-14);

        let eigs: Vec<Complex64> = (0..8).map(|j| Complex64::from_polar(0.3 + 0.08 * j as f64, j as f64)).collect();
        let k = random_normal(&eigs, 3);
        let ev = ResolventEvaluator::from_operator(&k, ResolventMode::Koopman).unwrap();
        for z in circle_points(0.7, 24).unwrap() {
            let dist = eigs.iter().map(|l| (z - l).norm()).fold(f64::INFINITY, f64::min);
            assert!((ev.inv_resolvent_norm(z) - dist).abs() < 1e-10);
        }
    }

    #[test]
    fn inv_norm_agrees_with_smw_norm() {
        let ev = data_evaluator(30, 8, 9);
        for z in circle_points(1.3, 9).unwrap() {
            let via_smw = 1.0 / spectral_norm(&ev.smw_resolvent(z).unwrap()).unwrap();
            let s = ev.inv_resolvent_norm(z);
            assert!((s - via_smw).abs() <= 1e-8 * s);
        }
    }

    #[test]
    fn lower_bound_and_conjugate_symmetry() {
        let k = ComplexMatrix::from_real_fn(15, 15, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.45);
        let ev = ResolventEvaluator::from_operator(&k, ResolventMode::Koopman).unwrap();
        let eigs = eigenvalues(&k).unwrap();
        let grid = ev.scan_rectangle([-2.0, 2.0], [-1.5, 1.5], 9, 8).unwrap();
        for (z, v) in grid.points.iter().zip(&grid.inv_norms) {
            let dist = eigs.iter().map(|l| (z - l).norm()).fold(f64::INFINITY, f64::min);
            assert!(*v <= dist + 1e-12);
            let vc = ev.inv_resolvent_norm(z.conj());
            assert!((vc - v).abs() <= 1e-12 * v.max(1.0));
        }
    }

    #[test]
    fn scan_examples() {
        let ev = ResolventEvaluator::from_operator(&ComplexMatrix::zeros(3, 3), ResolventMode::Koopman).unwrap();
        let g = ev.scan_circle(2.0, 16).unwrap();
        assert!(g.inv_norms.iter().all(|v| (v - 2.0).abs() < 1e-14));
        let g = ev.scan_rectangle([1.0, 2.0], [0.0, 0.0], 2, 2).unwrap();
        assert!((g.inv_norms[0] - 1.0).abs() < 1e-14 && (g.inv_norms[1] - 2.0).abs() < 1e-14);

        let ev = ResolventEvaluator::from_operator(&ComplexMatrix::from_real_diag(&[0.9]), ResolventMode::Koopman)
            .unwrap();
        let g = ev.scan_circle(1.01, 360).unwrap();
        assert_eq!(g.argmin(), 0);
        assert!((g.min() - 0.11).abs() < 1e-12);
        assert!(ev.scan_circle(1.0, 3).is_err());
        assert!(ev.scan_rectangle([0.0, 1.0], [0.0, 1.0], 1, 5).is_err());
    }

    #[test]
    fn generator_mode_handles_origin() {
        let x = random_matrix(30, 6, 61);
        let y = random_matrix(30, 6, 62);
        let snap = SnapshotMatrices::new(x, y, vec![1.0 / 30.0; 30], 0.2).unwrap();
        let ev = ResolventEvaluator::from_snapshots(&snap, ResolventMode::Generator, KoopmanRoute::GramRoute).unwrap();
        let grid = ev.scan_rectangle([-1.0, 1.0], [-1.0, 1.0], 3, 3).unwrap();
        assert!(grid.inv_norms.iter().all(|v| v.is_finite()));
        let z = c(0.4, -0.7);
        let a = ev.smw_resolvent(z).unwrap();
        let b = ev.direct_resolvent(z).unwrap();
        assert!((&a - &b).norm_fro() <= 1e-9 * b.norm_fro());
        assert!(ev.smw_resolvent(c(1e-10, 0.0)).is_ok());
    }

    #[test]
    fn detection_properties() {
        let ev = data_evaluator(20, 6, 31);
        let grid = ev.scan_circle(1.0, 64).unwrap();
        let lo = grid.min();
        let hi = grid.inv_norms.iter().copied().fold(0.0, f64::max);
        assert_eq!(detect(&grid, lo).unwrap().count(), 0);
        assert_eq!(detect(&grid, hi * 1.01).unwrap().count(), 64);
        let mut prev = 0;
        for t in [0.1, 0.3, 0.5, 0.8, 1.2, 2.0] {
            let d = detect(&grid, t).unwrap();
            assert!(d.count() >= prev);
            prev = d.count();
            for z in &d.detected {
                let i = grid.points.iter().position(|p| p == z).unwrap();
                assert!(grid.inv_norms[i] < t);
            }
        }
        assert!(detect(&grid, 0.0).is_err());
    }

    #[test]
    fn pseudoeigenfunction_examples() {
        let ev = ResolventEvaluator::from_operator(&ComplexMatrix::from_real_diag(&[0.9, 0.1]), ResolventMode::Koopman)
            .unwrap();
        let pf = ev.pseudoeigenfunction(c(0.95, 0.0)).unwrap();
        assert!((pf.coeffs[0] - c(1.0, 0.0)).norm() < 1e-12);
        assert!(pf.coeffs[1].norm() < 1e-12);
        assert!((pf.amplification * 0.05 - 1.0).abs() < 1e-10);

        let eigs = [c(0.8, 0.1), c(-0.2, 0.5), c(0.1, -0.6), c(0.4, 0.4)];
        let k = random_normal(&eigs, 8);
        let ev = ResolventEvaluator::from_operator(&k, ResolventMode::Koopman).unwrap();
        let z = eigs[2] + c(1e-6, 0.0);
        let pf = ev.pseudoeigenfunction(z).unwrap();
        assert!((vec_norm(&pf.coeffs) - 1.0).abs() < 1e-12);
        let kv = k.matvec(&pf.coeffs);
        let resid: Vec<Complex64> = kv.iter().zip(&pf.coeffs).map(|(a, b)| a - eigs[2] * b).collect();
        assert!(vec_norm(&resid) < 1e-5);
        let sigma = crate::numerics::sigma_min(&k.shifted(z)).unwrap();
        assert!((pf.amplification * sigma - 1.0).abs() < 1e-10);
    }

    #[test]
    fn csv_round_trip_and_svg() {
        let ev = data_evaluator(15, 4, 3);
        let grid = ev.scan_rectangle([-1.0, 1.0], [-1.0, 1.0], 4, 3).unwrap();
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        let back = PseudospectrumGrid::read_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.points, grid.points);
        assert_eq!(back.inv_norms, grid.inv_norms);
        let d = detect(&grid, 0.5).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&grid, &mut buf).unwrap();
        assert!(std::str::from_utf8(&buf).unwrap().starts_with("re(z),im(z),inv_norm,detected\n"));
        assert_eq!(grid.to_svg("x"), grid.to_svg("x"));
    }
}
