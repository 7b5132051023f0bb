//! Clustering of pseudoeigenfunctions: principal-angle similarity, spectral
//! embedding, fuzzy C-means, smoothed spectral measures and per-cluster
//! signal reconstruction.

use std::f64::consts::PI;
use std::io::Write;

use faer::{Mat, Side};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::SnapshotMatrices;
use crate::error::{Error, Result};
use crate::numerics::{orthonormal_basis, singular_values, svd, ComplexMatrix};
use crate::resolvent::Pseudoeigenfunction;
use crate::systems::{fmt17, rng_stream};

/// RNG stream used for cluster-center seeding.
pub const STREAM_CLUSTERING: u64 = 3;

#[derive(Clone, Debug)]
pub struct PseudoeigenFamily {
    pub members: Vec<Pseudoeigenfunction>,
    pub data_gram: ComplexMatrix,
}

impl PseudoeigenFamily {
    pub fn new(members: Vec<Pseudoeigenfunction>, data_gram: ComplexMatrix) -> Result<Self> {
        let n = data_gram.rows();
        if !data_gram.is_square() {
            return Err(Error::Shape("Gram matrix must be square".into()));
        }
        if let Some(m) = members.iter().find(|m| m.coeffs.len() != n) {
            return Err(Error::Shape(format!(
                "member at z = {} has {} coefficients, Gram is {n}x{n}",
                m.z,
                m.coeffs.len()
            )));
        }
        Ok(Self { members, data_gram })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dict_size(&self) -> usize {
        self.data_gram.rows()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleAggregation {
    /// Mean of `cos²θ` over all principal angles.
    MeanCos2,
    /// Cosine of the largest principal angle.
    MinCos,
}

/// `G`-inner-product geometry: `⟨u, v⟩_G = (Lᴴu)ᴴ(Lᴴv)` with `LLᴴ = G + δI`.
#[derive(Clone, Debug)]
pub struct GramWhitener {
    lh: ComplexMatrix,
}

impl GramWhitener {
    /// `δ = 1e-12 · max_i G_ii` keeps the factorization defined for
    /// rank-deficient Gram matrices.
    pub fn new(g: &ComplexMatrix) -> Result<Self> {
        let n = g.rows();
        let scale = g.diagonal().iter().map(|d| d.re).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let shifted = &g.hermitian_part() + &ComplexMatrix::identity(n).scale_real(1e-12 * scale);
        let llt = shifted
            .as_faer()
            .llt(Side::Lower)
            .map_err(|e| Error::Numeric(format!("Gram matrix is not positive semidefinite: {e:?}")))?;
        let l = ComplexMatrix::from_faer(llt.L().to_owned());
        Ok(Self { lh: l.adjoint() })
    }

    pub fn whiten(&self, block: &ComplexMatrix) -> ComplexMatrix {
        self.lh.matmul(block)
    }

    /// Orthonormal basis of the whitened span of `block`.
    pub fn basis(&self, block: &ComplexMatrix) -> Result<ComplexMatrix> {
        let w = self.whiten(block);
        if w.max_abs() == 0.0 {
            return Err(Error::Degenerate("subspace: zero block".into()));
        }
        let q = orthonormal_basis(&w, 1e-10)?;
        if q.cols() == 0 {
            return Err(Error::Degenerate("subspace: rank zero".into()));
        }
        Ok(q)
    }
}

/// Principal angles (ascending) between `span(u)` and `span(v)` under `G`.
pub fn principal_angles(u: &ComplexMatrix, v: &ComplexMatrix, g: &ComplexMatrix) -> Result<Vec<f64>> {
    if u.rows() != g.rows() || v.rows() != g.rows() {
        return Err(Error::Shape("blocks and Gram matrix disagree".into()));
    }
    let w = GramWhitener::new(g)?;
    angles_between(&w.basis(u)?, &w.basis(v)?)
}

fn angles_between(qu: &ComplexMatrix, qv: &ComplexMatrix) -> Result<Vec<f64>> {
    let k = qu.cols().min(qv.cols());
    let s = singular_values(&qu.adjoint().matmul(qv))?;
    let mut angles: Vec<f64> = s.iter().take(k).map(|c| c.clamp(0.0, 1.0).acos()).collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

fn aggregate(qu: &ComplexMatrix, qv: &ComplexMatrix, how: AngleAggregation) -> Result<f64> {
    let angles = angles_between(qu, qv)?;
    let v = match how {
        AngleAggregation::MeanCos2 => angles.iter().map(|a| a.cos().powi(2)).sum::<f64>() / angles.len() as f64,
        AngleAggregation::MinCos => angles.last().map(|a| a.cos()).unwrap_or(0.0),
    };
    Ok(v.clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub s: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// How member subspaces are formed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubspaceOptions {
    /// Number of consecutive grid members spanning each subspace.
    pub width: usize,
    /// Adds `conj(v)` to each span, identifying the `z`/`z̄` pair produced by
    /// a real operator.
    pub conjugate_closure: bool,
    pub aggregation: AngleAggregation,
}

impl Default for SubspaceOptions {
    fn default() -> Self {
        Self {
            width: 1,
            conjugate_closure: true,
            aggregation: AngleAggregation::MeanCos2,
        }
    }
}

fn member_block(fam: &PseudoeigenFamily, i: usize, opts: &SubspaceOptions) -> ComplexMatrix {
    let n = fam.len();
    let mut cols: Vec<Vec<Complex64>> = Vec::new();
    for off in 0..opts.width.max(1) {
        let c = &fam.members[(i + off) % n].coeffs;
        cols.push(c.clone());
        if opts.conjugate_closure {
            cols.push(c.iter().map(|x| x.conj()).collect());
        }
    }
    ComplexMatrix::from_fn(fam.dict_size(), cols.len(), |r, j| cols[j][r])
}

/// Pairwise subspace similarity of a family.
pub fn similarity(fam: &PseudoeigenFamily, opts: &SubspaceOptions) -> Result<SimilarityMatrix> {
    if opts.width == 0 {
        return Err(Error::param("subspace_width", "must be at least 1"));
    }
    let n = fam.len();
    let w = GramWhitener::new(&fam.data_gram)?;
    let bases = (0..n)
        .into_par_iter()
        .map(|i| w.basis(&member_block(fam, i, opts)))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let vals = pairs
        .par_iter()
        .map(|&(i, j)| aggregate(&bases[i], &bases[j], opts.aggregation))
        .collect::<Result<Vec<_>>>()?;
    let mut s = vec![vec![0.0; n]; n];
    for (i, row) in s.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for (&(i, j), v) in pairs.iter().zip(vals) {
        s[i][j] = v;
        s[j][i] = v;
    }
    Ok(SimilarityMatrix { s })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub coords: Vec<Vec<f64>>,
    /// Laplacian eigenvalues of the returned columns.
    pub eigenvalues: Vec<f64>,
    pub components: usize,
    pub isolated: Vec<usize>,
}

/// Connected components (edges where `s > tol`), labeled by smallest member.
fn components(s: &[Vec<f64>], tol: f64) -> Vec<usize> {
    let n = s.len();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        label[start] = next;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if label[j] == usize::MAX && s[i][j] > tol {
                    label[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    label
}

/// Spectral embedding with the symmetric normalized Laplacian.
///
/// For a disconnected graph the null space of the Laplacian is spanned by
/// the per-component vectors `D^{1/2}·1_C`, which are used directly (ordered
/// by smallest member index) so the embedding does not depend on the
/// eigensolver's choice of basis.
pub fn spectral_embed(sim: &SimilarityMatrix, k_embed: usize) -> Result<Embedding> {
    let n = sim.len();
    if k_embed == 0 {
        return Err(Error::param("k_embed", "must be at least 1"));
    }
    if k_embed > n {
        return Err(Error::param("k_embed", format!("exceeds the {n} members")));
    }
    let tol = 1e-12;
    let deg: Vec<f64> = sim.s.iter().map(|r| r.iter().sum::<f64>()).collect();
    let isolated: Vec<usize> = (0..n)
        .filter(|&i| (0..n).all(|j| j == i || sim.s[i][j] <= tol))
        .collect();
    let dinv: Vec<f64> = deg.iter().map(|d| if *d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let lap = Mat::<f64>::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - dinv[i] * sim.s[i][j] * dinv[j]
    });
    let e = lap
        .self_adjoint_eigen(Side::Lower)
        .map_err(|err| Error::Numeric(format!("Laplacian eigensolve failed: {err:?}")))?;
    let evals: Vec<f64> = e.S().column_vector().iter().copied().collect();
    let u = e.U();

    let comp = components(&sim.s, tol);
    let n_comp = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut col_evals = Vec::new();
    let first_nonnull = if n_comp > 1 {
        for c in 0..n_comp.min(k_embed) {
            let mut v: Vec<f64> = (0..n).map(|i| if comp[i] == c { deg[i].sqrt() } else { 0.0 }).collect();
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nrm > 0.0 {
                v.iter_mut().for_each(|x| *x /= nrm);
            }
            columns.push(v);
            col_evals.push(0.0);
        }
        n_comp
    } else {
        0
    };
    let mut idx = first_nonnull;
    while columns.len() < k_embed && idx < n {
        columns.push((0..n).map(|i| u[(i, idx)]).collect());
        col_evals.push(evals[idx]);
        idx += 1;
    }
    for col in columns.iter_mut() {
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() * (1.0 + 1e-12) {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let mut coords: Vec<Vec<f64>> = (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
    for row in coords.iter_mut() {
        let nrm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 0.0 {
            row.iter_mut().for_each(|x| *x /= nrm);
        }
    }
    Ok(Embedding {
        coords,
        eigenvalues: col_evals,
        components: n_comp,
        isolated,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzyClusters {
    pub membership: Vec<Vec<f64>>,
    pub centers: Vec<Vec<f64>>,
    pub fuzzifier: f64,
    pub labels: Vec<usize>,
    pub iterations: usize,
    pub objective_history: Vec<f64>,
    pub warnings: Vec<String>,
}

impl FuzzyClusters {
    pub fn clusters(&self) -> usize {
        self.centers.len()
    }

    /// Mean normalized membership entropy (0 = hard, 1 = uniform).
    pub fn mean_entropy(&self) -> f64 {
        let c = self.clusters() as f64;
        let total: f64 = self
            .membership
            .iter()
            .map(|row| -row.iter().filter(|u| **u > 0.0).map(|u| u * u.ln()).sum::<f64>() / c.ln())
            .sum();
        total / self.membership.len() as f64
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn memberships(points: &[Vec<f64>], centers: &[Vec<f64>], m: f64) -> Vec<Vec<f64>> {
    let c = centers.len();
    let p = 1.0 / (m - 1.0);
    points
        .iter()
        .map(|x| {
            let d: Vec<f64> = centers.iter().map(|ctr| sq_dist(x, ctr)).collect();
            if let Some(hit) = d.iter().position(|v| *v == 0.0) {
                let mut row = vec![0.0; c];
                row[hit] = 1.0;
                return row;
            }
            // u_j = 1 / Σ_k (d_j/d_k)^{1/(m−1)} on squared distances.
            let inv: Vec<f64> = d.iter().map(|v| v.powf(-p)).collect();
            let s: f64 = inv.iter().sum();
            inv.iter().map(|v| v / s).collect()
        })
        .collect()
}

fn objective(points: &[Vec<f64>], centers: &[Vec<f64>], u: &[Vec<f64>], m: f64) -> f64 {
    points
        .iter()
        .zip(u)
        .map(|(x, row)| {
            centers
                .iter()
                .zip(row)
                .map(|(ctr, uij)| uij.powf(m) * sq_dist(x, ctr))
                .sum::<f64>()
        })
        .sum()
}

/// k-means++ seeding: first center uniform, then proportional to squared
/// distance to the nearest chosen center.
fn seed_centers(points: &[Vec<f64>], c: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_stream(seed, STREAM_CLUSTERING);
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    while centers.len() < c {
        let d: Vec<f64> = points
            .iter()
            .map(|x| centers.iter().map(|ctr| sq_dist(x, ctr)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, v) in d.iter().enumerate() {
                acc += v;
                if acc > r {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[pick].clone());
    }
    centers
}

/// Fuzzy C-means with alternating membership/center updates.
pub fn fuzzy_cmeans(points: &[Vec<f64>], c: usize, fuzzifier: f64, seed: u64) -> Result<FuzzyClusters> {
    if c < 2 {
        return Err(Error::param("clusters", "need at least 2"));
    }
    if !(fuzzifier > 1.0 && fuzzifier.is_finite()) {
        return Err(Error::param("fuzzifier", "must exceed 1"));
    }
    if points.len() < c {
        return Err(Error::param("clusters", format!("{c} clusters for {} points", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim || p.iter().any(|x| !x.is_finite())) {
        return Err(Error::Shape("embedding rows must be finite and equally long".into()));
    }
    let m = fuzzifier;
    let mut centers = seed_centers(points, c, seed);
    let mut u = memberships(points, &centers, m);
    let mut history = vec![objective(points, &centers, &u, m)];
    let mut iterations = 0;
    for _ in 0..300 {
        iterations += 1;
        // Center update for fixed memberships.
        for (j, ctr) in centers.iter_mut().enumerate() {
            let w: Vec<f64> = u.iter().map(|row| row[j].powf(m)).collect();
            let total: f64 = w.iter().sum();
            if total > 0.0 {
                for (d, cd) in ctr.iter_mut().enumerate() {
                    *cd = points.iter().zip(&w).map(|(p, wi)| wi * p[d]).sum::<f64>() / total;
                }
            }
        }
        history.push(objective(points, &centers, &u, m));
        let next = memberships(points, &centers, m);
        let change = u
            .iter()
            .zip(&next)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        u = next;
        history.push(objective(points, &centers, &u, m));
        if change < 1e-6 {
            break;
        }
    }
    let labels = u
        .iter()
        .map(|row| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    let warnings = (0..c)
        .filter(|&j| u.iter().all(|row| row[j] < 1e-6))
        .map(|j| format!("cluster {j} is empty (all memberships below 1e-6)"))
        .collect();
    Ok(FuzzyClusters {
        membership: u,
        centers,
        fuzzifier,
        labels,
        iterations,
        objective_history: history,
        warnings,
    })
}

/// Poisson-smoothed moment surrogate of the spectral measure of one
/// observable. Not the resolvent-based measure of the rigorous method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasure {
    pub angles: Vec<f64>,
    pub density: Vec<f64>,
    pub smoothing: f64,
    pub moment_count: usize,
    /// Largest moment index used when growth forced truncation.
    pub truncated_at: Option<usize>,
}

impl SpectralMeasure {
    pub fn mass(&self) -> f64 {
        let d = 2.0 * PI / self.angles.len() as f64;
        self.density.iter().sum::<f64>() * d
    }

    /// Angle of the largest density on `[0, π]`.
    pub fn peak_angle(&self) -> f64 {
        let mut best = None::<(f64, f64)>;
        for (a, d) in self.angles.iter().zip(&self.density) {
            if *a >= 0.0 && best.is_none_or(|(_, bd)| *d > bd) {
                best = Some((*a, *d));
            }
        }
        best.map(|(a, _)| a).unwrap_or(0.0)
    }

    pub fn zeros_like(other: &SpectralMeasure) -> Self {
        Self {
            angles: other.angles.clone(),
            density: vec![0.0; other.angles.len()],
            smoothing: other.smoothing,
            moment_count: other.moment_count,
            truncated_at: None,
        }
    }
}

pub fn angle_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| -PI + 2.0 * PI * i as f64 / n as f64).collect()
}

/// Growth factor beyond which moments are considered to overflow.
const MOMENT_GROWTH_LIMIT: f64 = 1e8;

/// `density(θ) = (1/2π)·Re Σ_{|j|≤J} (1−ε)^{|j|} c_j e^{−ijθ}` with
/// `c_j = vᴴ G K^j v`, clamped at zero.
pub fn spectral_measure(
    coeffs: &[Complex64],
    k: &ComplexMatrix,
    g: &ComplexMatrix,
    epsilon: f64,
    moment_count: usize,
    n_angles: usize,
) -> Result<SpectralMeasure> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::param("epsilon", "must lie in (0, 1)"));
    }
    if moment_count == 0 {
        return Err(Error::param("moment_count", "must be at least 1"));
    }
    if coeffs.len() != k.rows() || !k.is_square() || g.shape() != k.shape() {
        return Err(Error::Shape("coefficients, operator and Gram disagree".into()));
    }
    let gv_h: Vec<Complex64> = g.adjoint().matvec(coeffs).iter().map(|x| x.conj()).collect();
    // Row vector vᴴG.
    let vhg: Vec<Complex64> = gv_h.iter().map(|x| x.conj()).collect::<Vec<_>>();
    let row = |w: &[Complex64]| -> Complex64 {
        // (Gᴴv)ᴴ w = vᴴ G w
        vhg.iter().zip(w).map(|(a, b)| a.conj() * b).sum()
    };
    let mut moments = vec![row(coeffs)];
    let c0 = moments[0].norm();
    let mut w = coeffs.to_vec();
    let mut truncated_at = None;
    for j in 1..=moment_count {
        w = k.matvec(&w);
        let cj = row(&w);
        if !(cj.re.is_finite() && cj.im.is_finite()) || cj.norm() > MOMENT_GROWTH_LIMIT * c0.max(f64::MIN_POSITIVE) {
            truncated_at = Some(j - 1);
            break;
        }
        moments.push(cj);
    }
    let angles = angle_grid(n_angles);
    let density = angles
        .iter()
        .map(|&t| {
            let mut s = moments[0].re;
            for (j, cj) in moments.iter().enumerate().skip(1) {
                let damp = (1.0 - epsilon).powi(j as i32);
                s += 2.0 * damp * (cj * Complex64::from_polar(1.0, -(j as f64) * t)).re;
            }
            (s / (2.0 * PI)).max(0.0)
        })
        .collect();
    Ok(SpectralMeasure {
        angles,
        density,
        smoothing: epsilon,
        moment_count,
        truncated_at,
    })
}

/// Membership-weighted sum of member measures (members normalized to unit
/// `G`-norm), one measure per cluster.
pub fn cluster_measures(
    fam: &PseudoeigenFamily,
    k: &ComplexMatrix,
    clusters: &FuzzyClusters,
    epsilon: f64,
    moment_count: usize,
    n_angles: usize,
) -> Result<Vec<SpectralMeasure>> {
    let g = &fam.data_gram;
    let per_member = fam
        .members
        .par_iter()
        .map(|m| {
            let nrm2 = crate::numerics::vec_dot(&m.coeffs, &g.matvec(&m.coeffs)).re;
            let v: Vec<Complex64> = if nrm2 > 0.0 {
                m.coeffs.iter().map(|x| x / nrm2.sqrt()).collect()
            } else {
                m.coeffs.iter().map(|_| Complex64::new(0.0, 0.0)).collect()
            };
            spectral_measure(&v, k, g, epsilon, moment_count, n_angles)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(clusters.clusters());
    for j in 0..clusters.clusters() {
        let mut acc = SpectralMeasure::zeros_like(&per_member[0]);
        for (i, m) in per_member.iter().enumerate() {
            let u = clusters.membership[i][j];
            for (a, d) in acc.density.iter_mut().zip(&m.density) {
                *a += u * d;
            }
            if let Some(t) = m.truncated_at {
                acc.truncated_at = Some(acc.truncated_at.map_or(t, |x: usize| x.min(t)));
            }
        }
        out.push(acc);
    }
    Ok(out)
}

/// Per-cluster components of a least-squares fit of the signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub total: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub ridge: bool,
}

impl Reconstruction {
    /// `t,total,c0,c1,...`.
    pub fn write_csv<W: Write>(&self, mut w: W, dt: f64) -> std::io::Result<()> {
        let mut header = vec!["t".to_string(), "total".to_string()];
        header.extend((0..self.components.len()).map(|j| format!("c{j}")));
        writeln!(w, "{}", header.join(","))?;
        for m in 0..self.total.len() {
            let mut line = vec![fmt17(m as f64 * dt), fmt17(self.total[m])];
            line.extend(self.components.iter().map(|c| fmt17(c[m])));
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Ridge parameter relative to the mean diagonal of the normal matrix.
pub const RIDGE: f64 = 1e-10;

/// Fits the signal jointly against the real and imaginary parts of every
/// member evaluated on the data rows, then sums fitted parts per hard label.
pub fn reconstruct(
    signal: &[f64],
    snap: &SnapshotMatrices,
    clusters: &FuzzyClusters,
    fam: &PseudoeigenFamily,
) -> Result<Reconstruction> {
    let m = snap.len();
    if signal.len() != m {
        return Err(Error::Shape(format!("signal has {} samples, snapshots {m} rows", signal.len())));
    }
    if clusters.labels.len() != fam.len() {
        return Err(Error::Shape("cluster labels do not match the family".into()));
    }
    let coeffs = ComplexMatrix::from_fn(fam.dict_size(), fam.len(), |i, j| fam.members[j].coeffs[i]);
    let evals = snap.psi_x.matmul(&coeffs);
    let p = 2 * fam.len();
    let design = ComplexMatrix::from_real_fn(m, p, |i, j| {
        let v = evals[(i, j / 2)];
        if j % 2 == 0 {
            v.re
        } else {
            v.im
        }
    });
    let sw = snap.sqrt_weights();
    let a = design.scale_rows(&sw);
    let b = ComplexMatrix::from_real_fn(m, 1, |i, _| signal[i] * sw[i]);
    let f = svd(&a)?;
    let full_rank = f.rank() == p.min(m);
    let x = if full_rank {
        crate::numerics::pinv(&a, crate::numerics::DEFAULT_RANK_TOL)?.matmul(&b)
    } else {
        let ah = a.adjoint();
        let normal = ah.matmul(&a);
        let mean_diag = normal.trace().re / p as f64;
        let reg = &normal + &ComplexMatrix::identity(p).scale_real(RIDGE * mean_diag.max(f64::MIN_POSITIVE));
        crate::numerics::solve(&reg, &ah.matmul(&b))?
    };
    let c = clusters.clusters();
    let mut components = vec![vec![0.0; m]; c];
    let mut total = vec![0.0; m];
    for j in 0..p {
        let label = clusters.labels[j / 2];
        let coef = x[(j, 0)].re;
        for i in 0..m {
            let v = design[(i, j)].re * coef;
            components[label][i] += v;
            total[i] += v;
        }
    }
    Ok(Reconstruction {
        total,
        components,
        ridge: !full_rank,
    })
}

/// JSON cluster report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub z: Vec<[f64; 2]>,
    pub memberships: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub embedding: Vec<Vec<f64>>,
    pub mean_entropy: f64,
    pub peak_angles: Vec<f64>,
    pub warnings: Vec<String>,
    pub measure_kind: String,
}

/// `theta,density,cluster` rows for every cluster measure.
pub fn write_measures_csv<W: Write>(mut w: W, measures: &[SpectralMeasure]) -> std::io::Result<()> {
    writeln!(w, "theta,density,cluster")?;
    for (j, m) in measures.iter().enumerate() {
        for (a, d) in m.angles.iter().zip(&m.density) {
            writeln!(w, "{},{},{j}", fmt17(*a), fmt17(*d))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_matrix;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn e(n: usize, i: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(n, 1, |r, _| if r == i { c(1.0, 0.0) } else { c(0.0, 0.0) })
    }

    fn member(coeffs: Vec<Complex64>) -> Pseudoeigenfunction {
        Pseudoeigenfunction {
            z: c(1.0, 0.0),
            coeffs,
            amplification: 1.0,
        }
    }

    #[test]
    fn principal_angle_examples() {
        let g = ComplexMatrix::identity(3);
        let a = principal_angles(&e(3, 0), &e(3, 0).scale(c(0.0, 2.0)), &g).unwrap();
        assert!(a[0].abs() < 1e-7);
        let a = principal_angles(&e(3, 0), &e(3, 1), &g).unwrap();
        assert!((a[0] - PI / 2.0).abs() < 1e-12);
        let v = (&e(3, 0) + &e(3, 1)).scale_real(1.0 / 2f64.sqrt());
        let a = principal_angles(&e(3, 0), &v, &g).unwrap();
        assert!((a[0] - PI / 4.0).abs() < 1e-7);
        assert!(principal_angles(&ComplexMatrix::zeros(3, 1), &e(3, 0), &g).is_err());
    }

    #[test]
    fn similarity_examples_and_invariance() {
        let g = ComplexMatrix::identity(4);
        let opts = SubspaceOptions {
            conjugate_closure: false,
            ..SubspaceOptions::default()
        };
        let fam = PseudoeigenFamily::new(
            vec![member(e(4, 0).col(0)), member(e(4, 0).col(0)), member(e(4, 2).col(0))],
            g.clone(),
        )
        .unwrap();
        let s = similarity(&fam, &opts).unwrap();
        assert!((s.s[0][1] - 1.0).abs() < 1e-12);
        assert!(s.s[0][2].abs() < 1e-12);

        let x = random_matrix(30, 6, 3);
        let gram = x.adjoint().matmul(&x);
        let vs = random_matrix(6, 5, 4);
        let members: Vec<_> = (0..5).map(|j| member(vs.col(j))).collect();
        let fam = PseudoeigenFamily::new(members.clone(), gram.clone()).unwrap();
        let s1 = similarity(&fam, &SubspaceOptions::default()).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((s1.s[i][j] - s1.s[j][i]).abs() < 1e-12);
            }
        }
        let mut scaled = members;
        scaled[2].coeffs.iter_mut().for_each(|x| *x *= c(-3.0, 0.7));
        let s2 = similarity(&PseudoeigenFamily::new(scaled, gram).unwrap(), &SubspaceOptions::default()).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((s1.s[i][j] - s2.s[i][j]).abs() < 1e-10);
            }
        }
    }

    fn block_similarity(sizes: &[usize], within: f64, across: f64) -> SimilarityMatrix {
        let n: usize = sizes.iter().sum();
        let mut label = Vec::new();
        for (b, s) in sizes.iter().enumerate() {
            label.extend(std::iter::repeat_n(b, *s));
        }
        let s = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            1.0
                        } else if label[i] == label[j] {
                            within
                        } else {
                            across
                        }
                    })
                    .collect()
            })
            .collect();
        SimilarityMatrix { s }
    }

    #[test]
    fn embedding_examples() {
        let sim = block_similarity(&[4, 3], 0.9, 0.0);
        let emb = spectral_embed(&sim, 2).unwrap();
        assert_eq!(emb.components, 2);
        for i in 1..4 {
            assert!(sq_dist(&emb.coords[0], &emb.coords[i]) < 1e-20);
        }
        for i in 4..7 {
            assert!(sq_dist(&emb.coords[4], &emb.coords[i]) < 1e-20);
        }
        let dot: f64 = emb.coords[0].iter().zip(&emb.coords[4]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-12);

        let ones = block_similarity(&[5], 1.0, 1.0);
        let emb = spectral_embed(&ones, 1).unwrap();
        assert!(emb.coords.iter().all(|r| (r[0] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn embedding_is_permutation_equivariant() {
        let sim = block_similarity(&[3, 3], 0.8, 0.1);
        let perm = [4, 0, 5, 2, 1, 3];
        let permuted = SimilarityMatrix {
            s: (0..6).map(|i| (0..6).map(|j| sim.s[perm[i]][perm[j]]).collect()).collect(),
        };
        let a = spectral_embed(&sim, 2).unwrap();
        let b = spectral_embed(&permuted, 2).unwrap();
        // Column signs may flip on ties; pairwise geometry may not.
        for i in 0..6 {
            for j in 0..6 {
                let da = sq_dist(&a.coords[perm[i]], &a.coords[perm[j]]);
                let db = sq_dist(&b.coords[i], &b.coords[j]);
                assert!((da - db).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cmeans_examples() {
        let mut pts = Vec::new();
        for i in 0..10 {
            let t = i as f64 * 0.01;
            pts.push(vec![t, -t]);
            pts.push(vec![10.0 + t, 10.0 + t]);
        }
        let fc = fuzzy_cmeans(&pts, 2, 2.0, 5).unwrap();
        for i in (0..20).step_by(2) {
            assert_eq!(fc.labels[i], fc.labels[0]);
            assert_eq!(fc.labels[i + 1], fc.labels[1]);
        }
        assert_ne!(fc.labels[0], fc.labels[1]);
        for row in &fc.membership {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|u| (0.0..=1.0).contains(u)));
        }
        for w in fc.objective_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
        }
        let again = fuzzy_cmeans(&pts, 2, 2.0, 5).unwrap();
        assert_eq!(fc.membership, again.membership);

        let u = memberships(&[vec![1.0, 2.0]], &[vec![0.0, 0.0], vec![1.0, 2.0]], 2.0);
        assert_eq!(u[0], vec![0.0, 1.0]);
    }

    #[test]
    fn measure_examples() {
        let n = 3;
        let g = ComplexMatrix::identity(n);
        let v = e(n, 0).col(0);
        let m = spectral_measure(&v, &ComplexMatrix::identity(n), &g, 0.05, 200, 2048).unwrap();
        assert!((m.mass() - 1.0).abs() < 0.02);
        assert!(m.peak_angle().abs() < 1e-2);
        // Poisson kernel (1 − r²)/(2π(1 − 2r cos θ + r²)) with r = 1 − ε.
        let r: f64 = 0.95;
        let i0 = m.angles.iter().position(|a| a.abs() < 1e-12).unwrap();
        let poisson = (1.0 - r * r) / (2.0 * PI * (1.0 - r).powi(2));
        assert!((m.density[i0] - poisson).abs() < 1e-3 * poisson);

        let zero = spectral_measure(&[c(0.0, 0.0); 3], &g, &g, 0.1, 10, 64).unwrap();
        assert!(zero.density.iter().all(|d| *d == 0.0));

        let phi = 0.7;
        let k = ComplexMatrix::from_diag(&[Complex64::from_polar(1.0, phi), c(0.5, 0.0), c(0.1, 0.0)]);
        let m = spectral_measure(&v, &k, &g, 0.05, 100, 4096).unwrap();
        assert!((m.peak_angle() - phi).abs() < 2e-3);

        let grow = ComplexMatrix::from_real_diag(&[3.0, 0.0, 0.0]);
        let m = spectral_measure(&v, &grow, &g, 0.1, 50, 64).unwrap();
        assert_eq!(m.truncated_at, Some(16));
    }

    #[test]
    fn measure_mass_for_random_operator() {
        let x = random_matrix(6, 6, 9);
        let k = x.scale_real(0.9 / crate::numerics::spectral_norm(&x).unwrap());
        let g = ComplexMatrix::identity(6);
        let v = random_matrix(6, 1, 10).col(0);
        let c0 = crate::numerics::vec_norm(&v).powi(2);
        let m = spectral_measure(&v, &k, &g, 0.05, 60, 2048).unwrap();
        assert!((m.mass() - c0).abs() <= 0.02 * c0);
    }

    #[test]
    fn reconstruction_examples() {
        let x = random_matrix(40, 5, 12);
        let snap = SnapshotMatrices::new(x.clone(), x.clone(), vec![1.0 / 40.0; 40], 0.1).unwrap();
        let vs = random_matrix(5, 3, 13);
        let fam = PseudoeigenFamily::new((0..3).map(|j| member(vs.col(j))).collect(), ComplexMatrix::identity(5)).unwrap();
        let target: Vec<f64> = x.matvec(&vs.col(1)).iter().map(|v| v.re).collect();
        let clusters = FuzzyClusters {
            membership: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]],
            centers: vec![vec![0.0], vec![1.0]],
            fuzzifier: 2.0,
            labels: vec![0, 1, 0],
            iterations: 0,
            objective_history: vec![],
            warnings: vec![],
        };
        let rec = reconstruct(&target, &snap, &clusters, &fam).unwrap();
        let energy = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        assert!(energy(&rec.components[1]) >= 0.99 * energy(&target));
        for i in 0..40 {
            let s: f64 = rec.components.iter().map(|c| c[i]).sum();
            assert!((s - rec.total[i]).abs() < 1e-12);
        }

        let one = FuzzyClusters {
            labels: vec![0, 0, 0],
            ..clusters
        };
        let noisy: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let rec = reconstruct(&noisy, &snap, &one, &fam).unwrap();
        assert_eq!(rec.components[0], rec.total);
    }
}
