//! Contour-integral spectral projections, enclosed-eigenvalue means, the
//! residual `η_N` with its eigenvalue error bound, and the ResDMD residual.

use std::f64::consts::PI;

use faer::Side;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::GramSet;
use crate::edmd::KoopmanMatrix;
use crate::error::{Error, Result};
use crate::numerics::{eigenvalues, orthonormal_basis, spectral_norm, vec_dot, ComplexMatrix};
use crate::resolvent::{ResolventEvaluator, ResolventMode};

/// Largest allowed deviation of `Re tr P` from an integer.
pub const MULTIPLICITY_TOL: f64 = 0.1;
/// Eigenvalues closer than this fraction of the radius to the curve collide.
pub const COLLISION_FRACTION: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contour {
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default = "default_quadrature_points")]
    pub quadrature_points: usize,
}

fn default_quadrature_points() -> usize {
    64
}

impl Contour {
    pub fn circle(center: Complex64, radius: f64) -> Self {
        Self {
            center: [center.re, center.im],
            radius,
            quadrature_points: 64,
        }
    }

    pub fn with_points(mut self, n: usize) -> Self {
        self.quadrature_points = n;
        self
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(self.center[0], self.center[1])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::param("radius", "must be positive"));
        }
        if self.quadrature_points < 8 {
            return Err(Error::param("quadrature_points", "need at least 8"));
        }
        if !(self.center[0].is_finite() && self.center[1].is_finite()) {
            return Err(Error::NonFinite("contour center"));
        }
        Ok(())
    }

    pub fn encloses(&self, z: Complex64) -> bool {
        (z - self.center()).norm() < self.radius
    }

    /// Eigenvalues within `COLLISION_FRACTION · radius` of the curve.
    pub fn collisions(&self, eigs: &[Complex64]) -> Vec<Complex64> {
        eigs.iter()
            .copied()
            .filter(|l| ((l - self.center()).norm() - self.radius).abs() <= COLLISION_FRACTION * self.radius)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralProjection {
    pub p: ComplexMatrix,
    pub contour: Contour,
    pub trace_value: Complex64,
    pub multiplicity: usize,
}

/// Pairwise sum of matrices in index order.
fn tree_sum(mut items: Vec<ComplexMatrix>) -> ComplexMatrix {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(&a + &b),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop().expect("non-empty sum")
}

/// Trapezoid-rule approximation of `(1/2πi)∮ (zI − K)^{-1} dz` on a circle.
pub fn contour_projection(ev: &ResolventEvaluator, c: &Contour) -> Result<SpectralProjection> {
    c.validate()?;
    let eigs = eigenvalues(ev.operator())?;
    let hits = c.collisions(&eigs);
    if !hits.is_empty() {
        return Err(Error::ContourCollision { eigenvalues: hits });
    }
    let n = c.quadrature_points;
    let terms = (0..n)
        .into_par_iter()
        .map(|j| {
            let e = Complex64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64);
            let z = c.center() + e * c.radius;
            // dz/(2πi) = r·e^{iθ} dθ/(2π); dθ = 2π/n.
            Ok(ev.direct_resolvent(z)?.scale(e * (c.radius / n as f64)))
        })
        .collect::<Result<Vec<_>>>()?;
    let p = tree_sum(terms);
    let trace_value = p.trace();
    let rounded = trace_value.re.round();
    if (trace_value.re - rounded).abs() > MULTIPLICITY_TOL || rounded < 0.0 {
        return Err(Error::Inconsistent(format!(
            "projection trace {trace_value} is not within {MULTIPLICITY_TOL} of an integer"
        )));
    }
    Ok(SpectralProjection {
        p,
        contour: *c,
        trace_value,
        multiplicity: rounded as usize,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigMeanResult {
    pub enclosed_eigs: Vec<Complex64>,
    /// `None` when nothing is enclosed.
    pub mean: Option<Complex64>,
    pub contour: Contour,
}

fn enclosed_of(eigs: &[Complex64], c: &Contour) -> EigMeanResult {
    let enclosed_eigs: Vec<Complex64> = eigs.iter().copied().filter(|l| c.encloses(*l)).collect();
    let mean = (!enclosed_eigs.is_empty())
        .then(|| enclosed_eigs.iter().sum::<Complex64>() / enclosed_eigs.len() as f64);
    EigMeanResult {
        enclosed_eigs,
        mean,
        contour: *c,
    }
}

/// Arithmetic mean of the eigenvalues inside `c`, cross-checked against the
/// projection trace.
pub fn enclosed_mean(ev: &ResolventEvaluator, c: &Contour) -> Result<EigMeanResult> {
    let proj = contour_projection(ev, c)?;
    let eigs = eigenvalues(ev.operator())?;
    let res = enclosed_of(&eigs, c);
    if res.enclosed_eigs.len() != proj.multiplicity {
        return Err(Error::Inconsistent(format!(
            "{} eigenvalues inside the contour but projection trace gives {}",
            res.enclosed_eigs.len(),
            proj.multiplicity
        )));
    }
    Ok(res)
}

/// Residual bound record for one contour.
///
/// The residual uses a zero-padding injection of the smaller operator into
/// the reference space, a finite-dimensional surrogate of the operator
/// residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualBound {
    pub contour: Contour,
    pub multiplicity: usize,
    pub eta: f64,
    pub reference_dim: usize,
    pub target_dim: usize,
    pub lambda_ref: [f64; 2],
    pub lambda_mean: [f64; 2],
    pub error: f64,
    /// `|λ_ref − λ̄_N| / η_N`, `None` when `η_N = 0`.
    pub ratio: Option<f64>,
    pub residual_kind: String,
}

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn embed(k_n: &ComplexMatrix, n_ref: usize) -> Result<ComplexMatrix> {
    if k_n.rows() > n_ref {
        return Err(Error::Shape(format!(
            "target dimension {} exceeds reference dimension {n_ref}",
            k_n.rows()
        )));
    }
    Ok(k_n.zero_padded(n_ref, n_ref))
}

/// `η_N = ‖(K_ref − ΠK_NΠ)P_N‖` and the enclosed means of both operators.
pub fn eta_residual(ref_k: &KoopmanMatrix, k_n: &KoopmanMatrix, c: &Contour) -> Result<ResidualBound> {
    let n_ref = ref_k.k.rows();
    let embedded = embed(&k_n.k, n_ref)?;
    let ev_n = ResolventEvaluator::from_operator(&embedded, ResolventMode::Koopman)?;
    let ev_ref = ResolventEvaluator::from_operator(&ref_k.k, ResolventMode::Koopman)?;
    let proj = contour_projection(&ev_n, c)?;
    let mean_n = enclosed_mean(&ev_n, c)?;
    let mean_ref = enclosed_mean(&ev_ref, c)?;
    let (Some(lambda_mean), Some(lambda_ref)) = (mean_n.mean, mean_ref.mean) else {
        return Err(Error::Inconsistent("contour encloses no eigenvalue".into()));
    };
    let diff = &ref_k.k - &embedded;
    let eta = spectral_norm(&diff.matmul(&proj.p))?;
    let error = (lambda_ref - lambda_mean).norm();
    Ok(ResidualBound {
        contour: *c,
        multiplicity: proj.multiplicity,
        eta,
        reference_dim: n_ref,
        target_dim: k_n.k.rows(),
        lambda_ref: pair(lambda_ref),
        lambda_mean: pair(lambda_mean),
        error,
        ratio: (eta > 0.0).then(|| error / eta),
        residual_kind: "zero-padded finite-dimensional surrogate".into(),
    })
}

/// Both sides of the trace identity `λ − λ̄ = (1/m)·tr((K − K_N)|_M)`.
///
/// `M` is the invariant subspace of the reference operator inside `c`;
/// restrictions are taken as `Yᴴ(·)X` with `X` an orthonormal basis of `M`
/// and `Yᴴ = XᴴP_ref` its dual, so `λ̄` is the mean eigenvalue of `Yᴴ K̃_N X`.
pub fn trace_identity(ref_k: &KoopmanMatrix, k_n: &KoopmanMatrix, c: &Contour) -> Result<(Complex64, Complex64)> {
    let n_ref = ref_k.k.rows();
    let embedded = embed(&k_n.k, n_ref)?;
    let ev_ref = ResolventEvaluator::from_operator(&ref_k.k, ResolventMode::Koopman)?;
    let proj = contour_projection(&ev_ref, c)?;
    let m = proj.multiplicity;
    if m == 0 {
        return Err(Error::Inconsistent("contour encloses no reference eigenvalue".into()));
    }
    let x = orthonormal_basis(&proj.p, 1e-8)?;
    if x.cols() != m {
        return Err(Error::Inconsistent(format!(
            "projection rank {} differs from multiplicity {m}",
            x.cols()
        )));
    }
    let yh = x.adjoint().matmul(&proj.p);
    let g = yh.matmul(&embedded).matmul(&x);
    let lambda_bar = eigenvalues(&g)?.iter().sum::<Complex64>() / m as f64;
    let lambda_ref = enclosed_mean(&ev_ref, c)?
        .mean
        .ok_or_else(|| Error::Inconsistent("no enclosed reference eigenvalue".into()))?;
    let lhs = lambda_ref - lambda_bar;
    let rhs = yh.matmul(&(&ref_k.k - &embedded)).matmul(&x).trace() / m as f64;
    Ok((lhs, rhs))
}

/// Quadratic form `a2 − z·a1ᴴ − z̄·a1 + |z|²·g`.
fn residual_form(gr: &GramSet, z: Complex64) -> ComplexMatrix {
    let a1h = gr.a1.adjoint();
    let t = &(&gr.a2 - &a1h.scale(z)) - &gr.a1.scale(z.conj());
    (&t + &gr.g.scale_real(z.norm_sqr())).hermitian_part()
}

/// ResDMD relative residual of the observable with coefficients `v` at `z`.
pub fn resdmd_residual(gr: &GramSet, z: Complex64, coeffs: &[Complex64]) -> Result<f64> {
    let n = gr.dict_size();
    if coeffs.len() != n {
        return Err(Error::Shape(format!("{} coefficients for dictionary size {n}", coeffs.len())));
    }
    let vnorm2: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    if vnorm2 == 0.0 {
        return Err(Error::Degenerate("observable: zero coefficient vector".into()));
    }
    let den = vec_dot(coeffs, &gr.g.matvec(coeffs)).re;
    if den <= 1e-14 * vnorm2 {
        return Err(Error::Degenerate(format!("observable: vᴴGv = {den:e}")));
    }
    let num = vec_dot(coeffs, &residual_form(gr, z).matvec(coeffs)).re;
    Ok((num.max(0.0) / den).sqrt())
}

/// Precomputed whitening for ResDMD minimization over observables.
#[derive(Clone, Debug)]
pub struct ResDmdScanner {
    gr: GramSet,
    /// Maps whitened coordinates back to coefficients (`N × r`).
    whiten: ComplexMatrix,
    cholesky: bool,
}

impl ResDmdScanner {
    /// Whitens `g` by its Cholesky factor; if `g` is not numerically positive
    /// definite, falls back to eigen-whitening restricted to eigenvalues above
    /// `1e-12·λ_max`.
    pub fn new(gr: &GramSet) -> Result<Self> {
        let n = gr.dict_size();
        let g = gr.g.as_faer();
        if let Ok(llt) = g.llt(Side::Lower) {
            let l = ComplexMatrix::from_faer(llt.L().to_owned());
            let diag_min = l.diagonal().iter().map(|d| d.norm()).fold(f64::INFINITY, f64::min);
            let diag_max = l.diagonal().iter().map(|d| d.norm()).fold(0.0, f64::max);
            if diag_min > 1e-6 * diag_max {
                // Columns of L^{-H} form the whitening map.
                let linv = crate::numerics::solve(&l, &ComplexMatrix::identity(n))?;
                return Ok(Self {
                    gr: gr.clone(),
                    whiten: linv.adjoint(),
                    cholesky: true,
                });
            }
        }
        let e = g
            .self_adjoint_eigen(Side::Lower)
            .map_err(|err| Error::Numeric(format!("Gram eigensolve failed: {err:?}")))?;
        let vals: Vec<f64> = e.S().column_vector().iter().map(|v| v.re).collect();
        let top = vals.iter().copied().fold(0.0, f64::max);
        if top <= 0.0 {
            return Err(Error::Degenerate("Gram matrix is zero".into()));
        }
        let keep: Vec<usize> = (0..n).filter(|&i| vals[i] > 1e-12 * top).collect();
        let u = ComplexMatrix::from_faer_ref(e.U());
        let whiten = ComplexMatrix::from_fn(n, keep.len(), |i, j| u[(i, keep[j])] / vals[keep[j]].sqrt());
        Ok(Self {
            gr: gr.clone(),
            whiten,
            cholesky: false,
        })
    }

    /// Whether Cholesky whitening was used (otherwise truncated eigen-whitening).
    pub fn uses_cholesky(&self) -> bool {
        self.cholesky
    }

    /// Minimal residual and its minimizing coefficient vector (`vᴴGv = 1`).
    pub fn minimize(&self, z: Complex64) -> Result<(f64, Vec<Complex64>)> {
        let q = residual_form(&self.gr, z);
        let wq = self.whiten.adjoint().matmul(&q).matmul(&self.whiten).hermitian_part();
        let e = wq
            .as_faer()
            .self_adjoint_eigen(Side::Lower)
            .map_err(|err| Error::Numeric(format!("ResDMD eigensolve failed: {err:?}")))?;
        let smallest = e.S().column_vector()[0].re;
        let u = ComplexMatrix::from_faer_ref(e.U());
        let v = self.whiten.matvec(&u.col(0));
        Ok((smallest.max(0.0).sqrt(), v))
    }

    pub fn scan(&self, grid: &[Complex64]) -> Result<Vec<f64>> {
        grid.par_iter().map(|&z| self.minimize(z).map(|(r, _)| r)).collect()
    }
}

/// Minimal ResDMD residual at each grid point.
pub fn resdmd_scan(gr: &GramSet, grid: &[Complex64]) -> Result<Vec<f64>> {
    ResDmdScanner::new(gr)?.scan(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{grams, SnapshotMatrices};
    use crate::edmd::KoopmanRoute;
    use crate::random::{random_matrix, random_normal};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ev(k: &ComplexMatrix) -> ResolventEvaluator {
        ResolventEvaluator::from_operator(k, ResolventMode::Koopman).unwrap()
    }

    fn km(k: ComplexMatrix) -> KoopmanMatrix {
        KoopmanMatrix {
            dict_size: k.rows(),
            k,
            source: KoopmanRoute::GramRoute,
        }
    }

    #[test]
    fn projection_examples() {
        let k = ComplexMatrix::from_real_diag(&[0.9, 0.5]);
        let p = contour_projection(&ev(&k), &Contour::circle(c(0.9, 0.0), 0.1)).unwrap();
        assert_eq!(p.multiplicity, 1);
        assert!((&p.p - &ComplexMatrix::from_real_diag(&[1.0, 0.0])).max_abs() < 1e-10);

        let p = contour_projection(&ev(&k), &Contour::circle(c(-0.5, 0.3), 0.2)).unwrap();
        assert_eq!(p.multiplicity, 0);
        assert!(p.p.max_abs() < 1e-12);

        let jordan = ComplexMatrix::from_real_row_major(2, 2, &[0.8, 1.0, 0.0, 0.8]).unwrap();
        let p = contour_projection(&ev(&jordan), &Contour::circle(c(0.8, 0.0), 0.1)).unwrap();
        assert_eq!(p.multiplicity, 2);
        assert!((p.trace_value - c(2.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn collision_is_reported() {
        let k = ComplexMatrix::from_real_diag(&[0.9, 0.5]);
        let r = contour_projection(&ev(&k), &Contour::circle(c(0.8, 0.0), 0.1));
        assert!(matches!(r, Err(Error::ContourCollision { .. })));
    }

    #[test]
    fn projection_properties() {
        let eigs: Vec<Complex64> = (0..10).map(|j| Complex64::from_polar(0.3 + 0.06 * j as f64, 0.9 * j as f64)).collect();
        let k = random_normal(&eigs, 21);
        let e = ev(&k);
        let c1 = Contour::circle(eigs[9], 0.12);
        let p = contour_projection(&e, &c1).unwrap();
        let pp = p.p.matmul(&p.p);
        assert!((&pp - &p.p).max_abs() <= 1e-6 * p.p.max_abs().max(1.0));
        let comm = &p.p.matmul(&k) - &k.matmul(&p.p);
        assert!(comm.max_abs() <= 1e-6 * k.max_abs());

        // Quadrature convergence.
        let p32 = contour_projection(&e, &c1.with_points(32)).unwrap();
        let p64 = contour_projection(&e, &c1.with_points(64)).unwrap();
        assert!((p32.trace_value - p64.trace_value).norm() <= 1e-10);

        // Additivity over disjoint contours.
        let a = Contour::circle(c(0.5, 0.0), 0.25);
        let b = Contour::circle(c(-0.5, 0.0), 0.25);
        let both = Contour::circle(c(0.0, 0.0), 0.95);
        let ma = contour_projection(&e, &a).unwrap().multiplicity;
        let mb = contour_projection(&e, &b).unwrap().multiplicity;
        let inside_both: usize = eigs.iter().filter(|l| a.encloses(**l) || b.encloses(**l)).count();
        assert_eq!(ma + mb, inside_both);
        assert_eq!(contour_projection(&e, &both).unwrap().multiplicity, 10);
    }

    #[test]
    fn mean_examples() {
        let k = ComplexMatrix::from_real_diag(&[0.9, 0.5]);
        let r = enclosed_mean(&ev(&k), &Contour::circle(c(0.7, 0.0), 0.25)).unwrap();
        assert_eq!(r.enclosed_eigs.len(), 2);
        assert!((r.mean.unwrap() - c(0.7, 0.0)).norm() < 1e-12);
        let r = enclosed_mean(&ev(&k), &Contour::circle(c(0.9, 0.0), 0.1)).unwrap();
        assert!((r.mean.unwrap() - c(0.9, 0.0)).norm() < 1e-12);
        let r = enclosed_mean(&ev(&k), &Contour::circle(c(0.0, 0.7), 0.1)).unwrap();
        assert!(r.mean.is_none());
    }

    #[test]
    fn eta_examples() {
        let k = random_normal(&[c(0.9, 0.0), c(0.2, 0.3), c(-0.4, 0.1)], 4);
        let cont = Contour::circle(c(0.9, 0.0), 0.2);
        let b = eta_residual(&km(k.clone()), &km(k.clone()), &cont).unwrap();
        assert!(b.eta < 1e-10);
        assert!(b.error < 1e-10);

        // Decoupled extra block: the shared eigenvalue sees no residual.
        let small = ComplexMatrix::from_real_diag(&[0.9, 0.1]);
        let big = ComplexMatrix::from_real_diag(&[0.9, 0.1, -0.5, 0.3]);
        let b = eta_residual(&km(big), &km(small), &cont).unwrap();
        assert!(b.eta < 1e-10);
        assert!(b.error < 1e-12);
    }

    #[test]
    fn trace_identity_on_nested_operators() {
        let k = random_matrix(12, 12, 5).scale_real(0.05);
        let mut kr = k.clone();
        kr[(0, 0)] += c(0.9, 0.0);
        let kn = kr.sub_block(0, 0, 8, 8);
        let cont = Contour::circle(c(0.9, 0.0), 0.25);
        let (lhs, rhs) = trace_identity(&km(kr), &km(kn), &cont).unwrap();
        assert!((lhs - rhs).norm() < 1e-8);
    }

    #[test]
    fn resdmd_closed_form() {
        let psi = random_matrix(40, 6, 17);
        let lambda = Complex64::from_polar(0.7, PI / 5.0);
        let snap = SnapshotMatrices::new(psi.clone(), psi.scale(lambda), vec![1.0 / 40.0; 40], 1.0).unwrap();
        let gr = grams(&snap);
        for s in 0..5 {
            let v = random_matrix(6, 1, 100 + s).col(0);
            let z = random_matrix(1, 1, 200 + s)[(0, 0)];
            let r = resdmd_residual(&gr, z, &v).unwrap();
            assert!((r - (z - lambda).norm()).abs() < 1e-10);
            assert!(resdmd_residual(&gr, lambda, &v).unwrap() < 1e-7);
        }
        let zs = vec![c(0.0, 0.0), c(1.0, 1.0), c(-0.3, 0.2)];
        let scan = resdmd_scan(&gr, &zs).unwrap();
        for (z, v) in zs.iter().zip(scan) {
            assert!((v - (z - lambda).norm()).abs() < 1e-8);
        }
        assert!(resdmd_residual(&gr, lambda, &[c(0.0, 0.0); 6]).is_err());
    }

    #[test]
    fn resdmd_scan_is_continuous_and_minimal() {
        let x = random_matrix(50, 5, 31);
        let y = random_matrix(50, 5, 32).scale_real(0.5);
        let snap = SnapshotMatrices::new(x, y, vec![1.0 / 50.0; 50], 1.0).unwrap();
        let gr = grams(&snap);
        let sc = ResDmdScanner::new(&gr).unwrap();
        assert!(sc.uses_cholesky());
        let zs: Vec<Complex64> = (0..200).map(|j| c(-1.0 + 0.01 * j as f64, 0.1)).collect();
        let vals = sc.scan(&zs).unwrap();
        for w in vals.windows(2) {
            // |r(z) − r(w)| ≤ |z − w| for a minimum of residuals each 1-Lipschitz in z.
            assert!((w[0] - w[1]).abs() <= 0.01 + 1e-9);
        }
        let (rmin, v) = sc.minimize(zs[50]).unwrap();
        assert!((resdmd_residual(&gr, zs[50], &v).unwrap() - rmin).abs() < 1e-8);
        for s in 0..5 {
            let w = random_matrix(5, 1, 300 + s).col(0);
            assert!(resdmd_residual(&gr, zs[50], &w).unwrap() >= rmin - 1e-10);
        }
    }

    #[test]
    fn rank_deficient_gram_falls_back() {
        let base = random_matrix(30, 2, 41);
        let x = ComplexMatrix::from_fn(30, 3, |i, j| base[(i, j % 2)]);
        let snap = SnapshotMatrices::new(x.clone(), x.scale_real(0.5), vec![1.0 / 30.0; 30], 1.0).unwrap();
        let sc = ResDmdScanner::new(&grams(&snap)).unwrap();
        assert!(!sc.uses_cholesky());
        let (r, _) = sc.minimize(c(0.2, 0.0)).unwrap();
        assert!((r - 0.3).abs() < 1e-8);
    }
}
