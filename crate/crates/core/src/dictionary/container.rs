//! Little-endian binary containers for snapshot sets and matrices.
//!
//! Layout: 9-byte magic, `u64` rows, `u64` cols, `f64` dt, then each
//! complex entry as two `f64` (re, im) in row-major order. Snapshot
//! containers hold psi_x then psi_y followed by the `f64` weights.

use std::io::{Read, Write};

use num_complex::Complex64;

use super::SnapshotMatrices;
use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;

pub const SNAPSHOT_MAGIC: &[u8; 9] = b"RDMDSNAP1";
pub const MATRIX_MAGIC: &[u8; 8] = b"RDMDMAT1";

/// Refuse headers that would allocate absurd amounts of memory.
const MAX_ENTRIES: u64 = 1 << 32;

fn write_header<W: Write>(w: &mut W, magic: &[u8], rows: usize, cols: usize, dt: f64) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&(rows as u64).to_le_bytes())?;
    w.write_all(&(cols as u64).to_le_bytes())?;
    w.write_all(&dt.to_le_bytes())?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R, magic: &[u8]) -> Result<(usize, usize, f64)> {
    let mut got = vec![0u8; magic.len()];
    r.read_exact(&mut got)?;
    if got != magic {
        return Err(Error::Shape(format!(
            "bad container magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    let rows = read_u64(r)?;
    let cols = read_u64(r)?;
    let dt = read_f64(r)?;
    if rows.saturating_mul(cols) > MAX_ENTRIES {
        return Err(Error::Shape(format!("container header {rows}x{cols} is too large")));
    }
    Ok((rows as usize, cols as usize, dt))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn write_entries<W: Write>(w: &mut W, m: &ComplexMatrix) -> Result<()> {
    for v in m.entries() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

fn read_entries<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<ComplexMatrix> {
    let mut entries = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let re = read_f64(r)?;
        let im = read_f64(r)?;
        entries.push(Complex64::new(re, im));
    }
    ComplexMatrix::from_row_major(rows, cols, &entries)
}

pub(super) fn write_snapshot_container<W: Write>(mut w: W, snap: &SnapshotMatrices) -> Result<()> {
    write_header(&mut w, SNAPSHOT_MAGIC, snap.len(), snap.dict_size(), snap.dt)?;
    write_entries(&mut w, &snap.psi_x)?;
    write_entries(&mut w, &snap.psi_y)?;
    for wt in &snap.weights {
        w.write_all(&wt.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub(super) fn read_snapshot_container<R: Read>(mut r: R) -> Result<SnapshotMatrices> {
    let (m, n, dt) = read_header(&mut r, SNAPSHOT_MAGIC)?;
    let psi_x = read_entries(&mut r, m, n)?;
    let psi_y = read_entries(&mut r, m, n)?;
    let weights = (0..m).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
    SnapshotMatrices::new(psi_x, psi_y, weights, dt)
}

/// Writes a matrix with an attached time step (0 when not applicable).
pub fn write_matrix_container<W: Write>(mut w: W, m: &ComplexMatrix, dt: f64) -> Result<()> {
    write_header(&mut w, MATRIX_MAGIC, m.rows(), m.cols(), dt)?;
    write_entries(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn read_matrix_container<R: Read>(mut r: R) -> Result<(ComplexMatrix, f64)> {
    let (rows, cols, dt) = read_header(&mut r, MATRIX_MAGIC)?;
    Ok((read_entries(&mut r, rows, cols)?, dt))
}
