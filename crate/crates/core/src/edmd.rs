//! Galerkin approximations of the Koopman operator and its generator.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dictionary::{write_matrix_container, GramSet, SnapshotMatrices};
use crate::error::{Error, Result};
use crate::numerics::{pinv, ComplexMatrix, DEFAULT_RANK_TOL};
use crate::systems::fmt17;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KoopmanRoute {
    PseudoinverseRoute,
    GramRoute,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KoopmanMatrix {
    pub k: ComplexMatrix,
    pub source: KoopmanRoute,
    pub dict_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorMatrix {
    pub a: ComplexMatrix,
    pub dt: f64,
}

/// `K = pinv(√W Ψ_X)·(√W Ψ_Y)`.
pub fn koopman_from_snapshots(snap: &SnapshotMatrices) -> Result<KoopmanMatrix> {
    let sw = snap.sqrt_weights();
    let x = snap.psi_x.scale_rows(&sw);
    let y = snap.psi_y.scale_rows(&sw);
    let k = pinv(&x, DEFAULT_RANK_TOL)?.matmul(&y);
    k.ensure_finite("Koopman matrix")?;
    Ok(KoopmanMatrix {
        dict_size: k.rows(),
        k,
        source: KoopmanRoute::PseudoinverseRoute,
    })
}

/// `K = pinv(G)·A`.
pub fn koopman_from_grams(gr: &GramSet) -> Result<KoopmanMatrix> {
    let k = pinv(&gr.g, DEFAULT_RANK_TOL)?.matmul(&gr.a1);
    k.ensure_finite("Koopman matrix")?;
    Ok(KoopmanMatrix {
        dict_size: k.rows(),
        k,
        source: KoopmanRoute::GramRoute,
    })
}

pub fn koopman(snap: &SnapshotMatrices, route: KoopmanRoute) -> Result<KoopmanMatrix> {
    match route {
        KoopmanRoute::PseudoinverseRoute => koopman_from_snapshots(snap),
        KoopmanRoute::GramRoute => koopman_from_grams(&crate::dictionary::grams(snap)),
    }
}

/// `A = pinv(√W Ψ_X)·(√W (Ψ_Y − Ψ_X)/Δt)`.
pub fn generator_from_snapshots(snap: &SnapshotMatrices) -> Result<GeneratorMatrix> {
    if !(snap.dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    let sw = snap.sqrt_weights();
    let x = snap.psi_x.scale_rows(&sw);
    let xdot = snap.psi_x_dot().scale_rows(&sw);
    let a = pinv(&x, DEFAULT_RANK_TOL)?.matmul(&xdot);
    a.ensure_finite("generator matrix")?;
    Ok(GeneratorMatrix { a, dt: snap.dt })
}

/// `A = (K − I)/Δt`, the generator sharing `K`'s projection.
pub fn generator_from_koopman(k: &KoopmanMatrix, dt: f64) -> Result<GeneratorMatrix> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    let n = k.k.rows();
    let a = (&k.k - &ComplexMatrix::identity(n)).scale_real(1.0 / dt);
    Ok(GeneratorMatrix { a, dt })
}

/// Writes a matrix in the `RDMDMAT1` container.
pub fn export_binary<W: Write>(w: W, m: &ComplexMatrix, dt: f64) -> Result<()> {
    write_matrix_container(w, m, dt)
}

/// Writes one line per row with `re,im` column pairs.
pub fn export_csv<W: Write>(mut w: W, m: &ComplexMatrix) -> std::io::Result<()> {
    let header: Vec<String> = (0..m.cols())
        .flat_map(|j| [format!("c{j}_re"), format!("c{j}_im")])
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..m.rows() {
        let line: Vec<String> = m
            .row(i)
            .iter()
            .flat_map(|v| [fmt17(v.re), fmt17(v.im)])
            .collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}
