//! Normalized Hermite polynomials and Gauss–Hermite quadrature.
//!
//! The polynomials are the physicists' family rescaled to be orthonormal
//! under the probability weight `e^{−x²}/√π`:
//!
//! ```text
//! h_0 = 1,  h_1 = √2·x,  h_{k+1} = √(2/(k+1))·x·h_k − √(k/(k+1))·h_{k−1}
//! ```

use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Largest supported quadrature order.
pub const MAX_RULE_ORDER: usize = 64;

/// Values `h_0(x) ..= h_max_order(x)`.
pub fn hermite_values(x: f64, max_order: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max_order + 1);
    out.push(1.0);
    if max_order == 0 {
        return out;
    }
    out.push(std::f64::consts::SQRT_2 * x);
    for k in 1..max_order {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
        out.push(next);
    }
    out
}

/// Gauss–Hermite rule for the weight `e^{−x²}` on the real line.
///
/// Nodes come from the Jacobi matrix eigenvalues, are polished by Newton
/// steps on `h_order`, and weights use the Christoffel form
/// `√π / Σ_k h_k(x_i)²`.
pub fn gauss_hermite_rule(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 {
        return Err(Error::param("order", "must be at least 1"));
    }
    if order > MAX_RULE_ORDER {
        return Err(Error::Unsupported(format!(
            "Gauss-Hermite order {order} exceeds {MAX_RULE_ORDER}"
        )));
    }
    let n = order;
    let jacobi = Mat::<f64>::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = jacobi
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numeric(format!("Jacobi eigensolve failed: {e:?}")))?;
    let mut nodes: Vec<f64> = eig;
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let h = hermite_values(*x, n);
            // h_n' = √(2n)·h_{n−1}
            let deriv = (2.0 * n as f64).sqrt() * h[n - 1];
            if deriv == 0.0 {
                break;
            }
            let step = h[n] / deriv;
            *x -= step;
            if step.abs() < 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
    }
    // Exact symmetry of the rule.
    for i in 0..n / 2 {
        let a = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[i] = -a;
        nodes[n - 1 - i] = a;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let h = hermite_values(x, n - 1);
            sqrt_pi / h.iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    for i in 0..n / 2 {
        let w = 0.5 * (weights[i] + weights[n - 1 - i]);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Ok((nodes, weights))
}
