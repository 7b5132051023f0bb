//! Observable dictionaries and the snapshot/Gram matrices built from them.

mod container;
mod hermite;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;
use crate::systems::{fmt17, Trajectory};

pub use container::{read_matrix_container, write_matrix_container, MATRIX_MAGIC, SNAPSHOT_MAGIC};
pub use hermite::{gauss_hermite_rule, hermite_values, MAX_RULE_ORDER};

/// Upper bound on the number of tensor-product quadrature rows.
pub const MAX_QUADRATURE_ROWS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    FourierHermite,
    HyperbolicHermite,
    TimeDelay,
}

/// Description of a dictionary.
///
/// For `fourier_hermite` the candidate set is `fourier_range × 0..=hermite_max_order`;
/// when `size` is set, the `size` candidates with the smallest score
/// `max(|n|/n_ref, k/k_ref)` are kept (see [`fourier_hermite_indices`]).
/// For `hyperbolic_hermite`, `center`/`scale` map a state `x` to the
/// Hermite argument `(x − center)/scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub fourier_range: [i64; 2],
    pub hermite_max_order: usize,
    pub velocity_scale: f64,
    pub size: Option<usize>,
    pub dimension: usize,
    pub hyperbolic_budget: usize,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub delay_width: usize,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self {
            kind: BasisKind::FourierHermite,
            fourier_range: [-10, 10],
            hermite_max_order: 20,
            velocity_scale: std::f64::consts::FRAC_1_SQRT_2,
            size: None,
            dimension: 3,
            hyperbolic_budget: 16,
            center: Vec::new(),
            scale: Vec::new(),
            delay_width: 1,
        }
    }
}

impl BasisSpec {
    pub fn fourier_hermite(n_max: i64, k_max: usize) -> Self {
        Self {
            kind: BasisKind::FourierHermite,
            fourier_range: [-n_max, n_max],
            hermite_max_order: k_max,
            ..Self::default()
        }
    }

    pub fn hyperbolic(dimension: usize, budget: usize) -> Self {
        Self {
            kind: BasisKind::HyperbolicHermite,
            dimension,
            hyperbolic_budget: budget,
            ..Self::default()
        }
    }

    pub fn time_delay(width: usize) -> Self {
        Self {
            kind: BasisKind::TimeDelay,
            delay_width: width,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            BasisKind::FourierHermite => {
                if self.fourier_range[0] > self.fourier_range[1] {
                    return Err(Error::param("fourier_range", "n_min must not exceed n_max"));
                }
                if !(self.velocity_scale.is_finite() && self.velocity_scale > 0.0) {
                    return Err(Error::param("velocity_scale", "must be positive"));
                }
                if self.size == Some(0) {
                    return Err(Error::param("size", "must be positive"));
                }
            }
            BasisKind::HyperbolicHermite => {
                if self.dimension == 0 {
                    return Err(Error::param("dimension", "must be at least 1"));
                }
                if self.hyperbolic_budget == 0 {
                    return Err(Error::param("hyperbolic_budget", "must be at least 1"));
                }
                for (name, v) in [("center", &self.center), ("scale", &self.scale)] {
                    if !v.is_empty() && v.len() != self.dimension {
                        return Err(Error::param(name, "length must equal dimension"));
                    }
                }
                if self.scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return Err(Error::param("scale", "entries must be positive"));
                }
                if self.center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::param("center", "entries must be finite"));
                }
            }
            BasisKind::TimeDelay => {
                if self.delay_width == 0 {
                    return Err(Error::param("delay_width", "must be at least 1"));
                }
            }
        }
        Ok(())
    }
}

/// One integer tuple per basis function.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiIndexSet {
    pub indices: Vec<Vec<i64>>,
    pub dimension: usize,
}

impl MultiIndexSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// All `(n_1..n_d)` with `n_j ≥ 0` and `∏(n_j + 1) ≤ budget`, sorted
/// lexicographically.
pub fn hyperbolic_cross_indices(dimension: usize, budget: usize) -> MultiIndexSet {
    fn extend(prefix: &mut Vec<i64>, left: usize, budget: usize, out: &mut Vec<Vec<i64>>) {
        if left == 0 {
            out.push(prefix.clone());
            return;
        }
        let mut n = 0i64;
        while (n as usize + 1) <= budget {
            prefix.push(n);
            extend(prefix, left - 1, budget / (n as usize + 1), out);
            prefix.pop();
            n += 1;
        }
    }
    let mut indices = Vec::new();
    if dimension > 0 && budget > 0 {
        extend(&mut Vec::with_capacity(dimension), dimension, budget, &mut indices);
    }
    MultiIndexSet { indices, dimension }
}

/// Smallest budget whose hyperbolic cross has exactly `target` members.
pub fn calibrate_hyperbolic_budget(dimension: usize, target: usize) -> Result<usize> {
    if dimension == 0 || target == 0 {
        return Err(Error::param("target", "dimension and target must be positive"));
    }
    let mut budget = 1;
    loop {
        let count = hyperbolic_cross_indices(dimension, budget).len();
        if count == target {
            return Ok(budget);
        }
        if count > target {
            return Err(Error::Inconsistent(format!(
                "no hyperbolic-cross budget gives {target} indices in dimension {dimension} \
                 (budget {budget} gives {count})"
            )));
        }
        budget += 1;
    }
}

/// Fourier×Hermite index set `(n, k)` in lexicographic order.
///
/// Without `size` this is the full rectangle. With `size`, candidates are
/// ranked by `max(|n|/n_ref, k/k_ref)` where `n_ref = 10` and `k_ref = 20`,
/// ties broken by `(|n|, k, n)`, and the first `size` are kept. Rank 441
/// therefore reproduces `|n| ≤ 10, k ≤ 20` exactly.
pub fn fourier_hermite_indices(spec: &BasisSpec) -> Result<MultiIndexSet> {
    let [lo, hi] = spec.fourier_range;
    let kmax = spec.hermite_max_order as i64;
    let mut cand: Vec<(i64, i64)> = (lo..=hi)
        .flat_map(|n| (0..=kmax).map(move |k| (n, k)))
        .collect();
    if let Some(size) = spec.size {
        if size > cand.len() {
            return Err(Error::param(
                "size",
                format!("{size} exceeds the {} available candidates", cand.len()),
            ));
        }
        // Integer form of max(|n|/10, k/20).
        let score = |&(n, k): &(i64, i64)| (n.abs() * 20).max(k * 10);
        cand.sort_by_key(|c| (score(c), c.0.abs(), c.1, c.0));
        cand.truncate(size);
        cand.sort();
    }
    Ok(MultiIndexSet {
        indices: cand.into_iter().map(|(n, k)| vec![n, k]).collect(),
        dimension: 2,
    })
}

/// A dictionary ready for pointwise evaluation.
#[derive(Clone, Debug)]
pub struct Dictionary {
    spec: BasisSpec,
    set: MultiIndexSet,
    max_order: usize,
}

impl Dictionary {
    pub fn new(spec: &BasisSpec) -> Result<Self> {
        spec.validate()?;
        let set = match spec.kind {
            BasisKind::FourierHermite => fourier_hermite_indices(spec)?,
            BasisKind::HyperbolicHermite => {
                hyperbolic_cross_indices(spec.dimension, spec.hyperbolic_budget)
            }
            BasisKind::TimeDelay => {
                return Err(Error::Unsupported(
                    "time-delay dictionaries are built by time_delay_embed".into(),
                ))
            }
        };
        let max_order = match spec.kind {
            BasisKind::FourierHermite => set.indices.iter().map(|t| t[1]).max().unwrap_or(0),
            _ => set.indices.iter().flatten().copied().max().unwrap_or(0),
        } as usize;
        Ok(Self {
            spec: spec.clone(),
            set,
            max_order,
        })
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn indices(&self) -> &MultiIndexSet {
        &self.set
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn state_dim(&self) -> usize {
        match self.spec.kind {
            BasisKind::FourierHermite => 2,
            _ => self.spec.dimension,
        }
    }

    /// Maps a state to Hermite coordinates (identity unless centered/scaled).
    pub fn normalize(&self, state: &[f64]) -> Vec<f64> {
        state
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let c = self.spec.center.get(j).copied().unwrap_or(0.0);
                let s = self.spec.scale.get(j).copied().unwrap_or(1.0);
                (x - c) / s
            })
            .collect()
    }

    /// Inverse of [`Dictionary::normalize`].
    pub fn denormalize(&self, xi: &[f64]) -> Vec<f64> {
        xi.iter()
            .enumerate()
            .map(|(j, &x)| {
                let c = self.spec.center.get(j).copied().unwrap_or(0.0);
                let s = self.spec.scale.get(j).copied().unwrap_or(1.0);
                c + s * x
            })
            .collect()
    }

    pub fn eval(&self, state: &[f64]) -> Result<Vec<Complex64>> {
        if state.len() != self.state_dim() {
            return Err(Error::Shape(format!(
                "dictionary expects {}-dimensional states, got {}",
                self.state_dim(),
                state.len()
            )));
        }
        Ok(match self.spec.kind {
            BasisKind::FourierHermite => self.eval_fourier_hermite(state[0], state[1]),
            _ => self.eval_hermite_normalized(&self.normalize(state)),
        })
    }

    fn eval_fourier_hermite(&self, theta: f64, omega: f64) -> Vec<Complex64> {
        let h = hermite_values(omega * self.spec.velocity_scale, self.max_order);
        self.set
            .indices
            .iter()
            .map(|t| Complex64::from_polar(1.0, t[0] as f64 * theta) * h[t[1] as usize])
            .collect()
    }

    /// Tensor Hermite products at already-normalized coordinates.
    fn eval_hermite_normalized(&self, xi: &[f64]) -> Vec<Complex64> {
        let tables: Vec<Vec<f64>> = xi.iter().map(|&x| hermite_values(x, self.max_order)).collect();
        self.set
            .indices
            .iter()
            .map(|t| {
                let v: f64 = t.iter().zip(&tables).map(|(&n, h)| h[n as usize]).product();
                Complex64::new(v, 0.0)
            })
            .collect()
    }

    fn eval_rows(&self, states: &[&[f64]]) -> Result<ComplexMatrix> {
        let rows: Vec<Vec<Complex64>> = states
            .par_iter()
            .map(|s| self.eval(s))
            .collect::<Result<_>>()?;
        Ok(ComplexMatrix::from_fn(rows.len(), self.len(), |i, j| rows[i][j]))
    }
}

/// Convenience wrapper over [`Dictionary`] for a single pendulum state.
pub fn eval_fourier_hermite(spec: &BasisSpec, theta: f64, omega: f64) -> Result<Vec<Complex64>> {
    if spec.kind != BasisKind::FourierHermite {
        return Err(Error::param("kind", "expected fourier_hermite"));
    }
    Dictionary::new(spec)?.eval(&[theta, omega])
}

/// Weighted dictionary evaluations on snapshot pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotMatrices {
    pub psi_x: ComplexMatrix,
    pub psi_y: ComplexMatrix,
    pub weights: Vec<f64>,
    pub dt: f64,
}

impl SnapshotMatrices {
    pub fn new(psi_x: ComplexMatrix, psi_y: ComplexMatrix, weights: Vec<f64>, dt: f64) -> Result<Self> {
        if psi_x.shape() != psi_y.shape() {
            return Err(Error::Shape(format!(
                "psi_x is {:?} but psi_y is {:?}",
                psi_x.shape(),
                psi_y.shape()
            )));
        }
        if psi_x.is_empty() {
            return Err(Error::Shape("empty snapshot matrices".into()));
        }
        if weights.len() != psi_x.rows() {
            return Err(Error::Shape(format!(
                "{} weights for {} snapshots",
                weights.len(),
                psi_x.rows()
            )));
        }
        psi_x.ensure_finite("psi_x")?;
        psi_y.ensure_finite("psi_y")?;
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::param("weights", "must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::param("weights", format!("sum to {total}, expected 1")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        Ok(Self {
            psi_x,
            psi_y,
            weights,
            dt,
        })
    }

    /// Number of snapshot pairs `M`.
    pub fn len(&self) -> usize {
        self.psi_x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.psi_x.rows() == 0
    }

    /// Dictionary size `N`.
    pub fn dict_size(&self) -> usize {
        self.psi_x.cols()
    }

    /// Finite-difference time derivative `(Ψ_Y − Ψ_X)/Δt`.
    pub fn psi_x_dot(&self) -> ComplexMatrix {
        (&self.psi_y - &self.psi_x).scale_real(1.0 / self.dt)
    }

    /// Copy whose `psi_y` is replaced by [`SnapshotMatrices::psi_x_dot`].
    pub fn to_generator(&self) -> Self {
        Self {
            psi_x: self.psi_x.clone(),
            psi_y: self.psi_x_dot(),
            weights: self.weights.clone(),
            dt: self.dt,
        }
    }

    pub fn sqrt_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.sqrt()).collect()
    }

    pub fn write_binary<W: std::io::Write>(&self, w: W) -> Result<()> {
        container::write_snapshot_container(w, self)
    }

    pub fn read_binary<R: std::io::Read>(r: R) -> Result<Self> {
        container::read_snapshot_container(r)
    }

    /// One row per snapshot: weight, then `re,im` pairs of psi_x and psi_y.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.dict_size();
        let mut header = vec!["weight".to_string()];
        for part in ["x", "y"] {
            for j in 0..n {
                header.push(format!("psi_{part}_{j}_re"));
                header.push(format!("psi_{part}_{j}_im"));
            }
        }
        writeln!(w, "{}", header.join(","))?;
        for m in 0..self.len() {
            let mut line = vec![fmt17(self.weights[m])];
            for mat in [&self.psi_x, &self.psi_y] {
                for j in 0..n {
                    line.push(fmt17(mat[(m, j)].re));
                    line.push(fmt17(mat[(m, j)].im));
                }
            }
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

fn uniform_weights(m: usize) -> Vec<f64> {
    vec![1.0 / m as f64; m]
}

/// Hankel snapshot pairs from a scalar signal.
pub fn time_delay_embed(signal: &[f64], width: usize, dt: f64) -> Result<SnapshotMatrices> {
    if width == 0 {
        return Err(Error::param("width", "must be at least 1"));
    }
    if signal.len() < width + 2 {
        return Err(Error::Shape(format!(
            "signal of length {} too short for delay width {width}",
            signal.len()
        )));
    }
    let m = signal.len() - width;
    let psi_x = ComplexMatrix::from_real_fn(m, width, |i, j| signal[i + j]);
    let psi_y = ComplexMatrix::from_real_fn(m, width, |i, j| signal[i + j + 1]);
    SnapshotMatrices::new(psi_x, psi_y, uniform_weights(m), dt)
}

/// Dictionary evaluations on consecutive trajectory states.
///
/// A `time_delay` spec embeds the first state component.
pub fn build_snapshots(traj: &Trajectory, spec: &BasisSpec) -> Result<SnapshotMatrices> {
    if traj.len() < 2 {
        return Err(Error::Shape("trajectory needs at least 2 states".into()));
    }
    if spec.kind == BasisKind::TimeDelay {
        spec.validate()?;
        return time_delay_embed(&traj.component(0), spec.delay_width, traj.dt);
    }
    let dict = Dictionary::new(spec)?;
    let refs: Vec<&[f64]> = traj.states.iter().map(|s| s.as_slice()).collect();
    let all = dict.eval_rows(&refs)?;
    let m = traj.len() - 1;
    let n = dict.len();
    let psi_x = all.sub_block(0, 0, m, n);
    let psi_y = all.sub_block(1, 0, m, n);
    SnapshotMatrices::new(psi_x, psi_y, uniform_weights(m), traj.dt)
}

/// Tensor-product Gauss–Hermite nodes in Hermite coordinates with weights
/// normalized to sum to one.
pub fn tensor_rule(dimension: usize, order: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let (x, w) = gauss_hermite_rule(order)?;
    let rows = (order as u128).checked_pow(dimension as u32).unwrap_or(u128::MAX);
    if rows > MAX_QUADRATURE_ROWS as u128 {
        return Err(Error::param(
            "rule_order",
            format!("{order}^{dimension} quadrature nodes exceed the {MAX_QUADRATURE_ROWS}-row limit"),
        ));
    }
    let total: f64 = w.iter().sum();
    let mut nodes = vec![Vec::new()];
    let mut weights = vec![1.0];
    for _ in 0..dimension {
        let mut next_nodes = Vec::with_capacity(nodes.len() * order);
        let mut next_weights = Vec::with_capacity(nodes.len() * order);
        for (p, pw) in nodes.iter().zip(&weights) {
            for (xi, wi) in x.iter().zip(&w) {
                let mut q: Vec<f64> = p.clone();
                q.push(*xi);
                next_nodes.push(q);
                next_weights.push(pw * wi / total);
            }
        }
        nodes = next_nodes;
        weights = next_weights;
    }
    Ok((nodes, weights))
}

/// Snapshot pairs on a tensor Gauss–Hermite grid.
///
/// Nodes are placed in Hermite coordinates and mapped to states through the
/// spec's `center`/`scale`; `psi_y` evaluates the dictionary at the
/// flow-mapped state.
pub fn quadrature_snapshots<F>(spec: &BasisSpec, rule_order: usize, dt: f64, flowmap: F) -> Result<SnapshotMatrices>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    if spec.kind != BasisKind::HyperbolicHermite {
        return Err(Error::param("kind", "quadrature snapshots need hyperbolic_hermite"));
    }
    let dict = Dictionary::new(spec)?;
    let (nodes, weights) = tensor_rule(spec.dimension, rule_order)?;
    let rows: Vec<(Vec<Complex64>, Vec<Complex64>)> = nodes
        .par_iter()
        .map(|xi| {
            let state = dict.denormalize(xi);
            let image = flowmap(&state);
            let x = dict.eval_hermite_normalized(xi);
            let y = dict.eval(&image)?;
            Ok((x, y))
        })
        .collect::<Result<_>>()?;
    let n = dict.len();
    let psi_x = ComplexMatrix::from_fn(rows.len(), n, |i, j| rows[i].0[j]);
    let psi_y = ComplexMatrix::from_fn(rows.len(), n, |i, j| rows[i].1[j]);
    SnapshotMatrices::new(psi_x, psi_y, weights, dt)
}

/// Weighted Gram matrices of a snapshot set.
#[derive(Clone, Debug, PartialEq)]
pub struct GramSet {
    pub g: ComplexMatrix,
    pub a1: ComplexMatrix,
    pub a2: ComplexMatrix,
}

impl GramSet {
    pub fn dict_size(&self) -> usize {
        self.g.rows()
    }
}

/// `g = Ψ_Xᴴ W Ψ_X`, `a1 = Ψ_Xᴴ W Ψ_Y`, `a2 = Ψ_Yᴴ W Ψ_Y`.
pub fn grams(snap: &SnapshotMatrices) -> GramSet {
    let sw = snap.sqrt_weights();
    let x = snap.psi_x.scale_rows(&sw);
    let y = snap.psi_y.scale_rows(&sw);
    let xh = x.adjoint();
    GramSet {
        g: xh.matmul(&x).hermitian_part(),
        a1: xh.matmul(&y),
        a2: y.adjoint().matmul(&y).hermitian_part(),
    }
}

/// Grams of the generator pair `(Ψ_X, Ψ'_X)`.
pub fn generator_grams(snap: &SnapshotMatrices) -> GramSet {
    grams(&snap.to_generator())
}
