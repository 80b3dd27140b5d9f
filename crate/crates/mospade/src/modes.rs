//! Orthonormal imaging-mode collections — points on the Stiefel manifold of
//! quadrature-weighted mode matrices — including the pixelated
//! direct-imaging baseline.
//!
//! Orthonormality is always defined under the grid inner product:
//! `Φ·diag(w)·Φᵀ = I`. Mode sign is not meaningful (all downstream
//! quantities use squared overlaps), so comparisons are made on subspaces
//! or magnitudes, never on signed entries.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::Grid;

pub const ORTHONORMALITY_TOL: f64 = 1e-8;
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    matrix: DMatrix<f64>,
    grid: Grid,
    label: String,
}

impl ModeSet {
    /// Wrap a J×G matrix that is already orthonormal under the grid inner
    /// product; rejects matrices violating the feasibility contract.
    pub fn new(matrix: DMatrix<f64>, grid: &Grid, label: impl Into<String>) -> Result<ModeSet> {
        if matrix.ncols() != grid.len() {
            return Err(Error::dim(grid.len(), matrix.ncols(), "mode samples"));
        }
        if matrix.nrows() > grid.len() {
            return Err(Error::invalid("more modes than grid points"));
        }
        let ms = ModeSet {
            matrix,
            grid: grid.clone(),
            label: label.into(),
        };
        let res = ms.validate();
        if res > ORTHONORMALITY_TOL {
            return Err(Error::invalid(format!(
                "mode matrix is not orthonormal (residual {res:.3e})"
            )));
        }
        Ok(ms)
    }

    /// Build from raw row vectors, checking orthonormality.
    pub fn from_rows(rows: Vec<DVector<f64>>, grid: &Grid, label: impl Into<String>) -> Result<ModeSet> {
        if rows.is_empty() {
            return Err(Error::invalid("mode set must contain at least one mode"));
        }
        let g = grid.len();
        let mut m = DMatrix::zeros(rows.len(), g);
        for (j, r) in rows.iter().enumerate() {
            if r.len() != g {
                return Err(Error::dim(g, r.len(), "mode samples"));
            }
            m.row_mut(j).copy_from(&r.transpose());
        }
        // normalize rows so callers can pass unnormalized-but-orthogonal fields
        for j in 0..m.nrows() {
            let norm = (m.row(j).dot(&m.row(j)) * grid.weight()).sqrt();
            if norm <= 0.0 {
                return Err(Error::invalid("zero mode row"));
            }
            m.row_mut(j).scale_mut(1.0 / norm);
        }
        ModeSet::new(m, grid, label)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn num_modes(&self) -> usize {
        self.matrix.nrows()
    }

    /// Weighted representation `X = Φ·diag(√w)` with plainly orthonormal rows.
    pub fn weighted(&self) -> DMatrix<f64> {
        &self.matrix * self.grid.weight().sqrt()
    }

    /// Rebuild from the weighted representation.
    pub fn from_weighted(x: DMatrix<f64>, grid: &Grid, label: impl Into<String>) -> Result<ModeSet> {
        ModeSet::new(x / grid.weight().sqrt(), grid, label)
    }

    /// Orthonormality residual ‖Φ·diag(w)·Φᵀ − I‖_F.
    pub fn validate(&self) -> f64 {
        let x = self.weighted();
        let gram = &x * x.transpose();
        let j = gram.nrows();
        (gram - DMatrix::identity(j, j)).norm()
    }
}

/// J contiguous non-overlapping top-hat modes tiling `span` on a 1D grid,
/// each normalized to unit grid-norm; models ideal pixelated direct imaging.
pub fn pixel_basis(grid: &Grid, j: usize, span: (f64, f64)) -> Result<ModeSet> {
    if j == 0 {
        return Err(Error::invalid("bin count must be ≥ 1"));
    }
    let (lo, hi) = span;
    if !(hi > lo) {
        return Err(Error::invalid("span must be a nonempty interval"));
    }
    let bin = (hi - lo) / j as f64;
    let mut m = DMatrix::zeros(j, grid.len());
    let mut occupied = vec![false; j];
    for (i, p) in grid.points().iter().enumerate() {
        let x = p[0];
        if x < lo || x >= hi {
            continue;
        }
        let b = (((x - lo) / bin) as usize).min(j - 1);
        m[(b, i)] = 1.0;
        occupied[b] = true;
    }
    if occupied.iter().any(|&o| !o) {
        return Err(Error::invalid(
            "bin count exceeds available grid points in span",
        ));
    }
    for b in 0..j {
        let norm = (m.row(b).dot(&m.row(b)) * grid.weight()).sqrt();
        m.row_mut(b).scale_mut(1.0 / norm);
    }
    ModeSet::new(m, grid, "direct")
}

/// n×n square pixel bins tiling a centered square span on a 2D grid.
pub fn pixel_basis_2d(grid: &Grid, bins_per_axis: usize, half_span: f64) -> Result<ModeSet> {
    if bins_per_axis == 0 {
        return Err(Error::invalid("bin count must be ≥ 1"));
    }
    if half_span <= 0.0 || half_span > grid.extent() {
        return Err(Error::invalid("span outside grid extent"));
    }
    let j = bins_per_axis * bins_per_axis;
    let bin = 2.0 * half_span / bins_per_axis as f64;
    let mut m = DMatrix::zeros(j, grid.len());
    let mut occupied = vec![false; j];
    for (i, p) in grid.points().iter().enumerate() {
        if p[0] < -half_span || p[0] >= half_span || p[1] < -half_span || p[1] >= half_span {
            continue;
        }
        let bx = (((p[0] + half_span) / bin) as usize).min(bins_per_axis - 1);
        let by = (((p[1] + half_span) / bin) as usize).min(bins_per_axis - 1);
        let b = by * bins_per_axis + bx;
        m[(b, i)] = 1.0;
        occupied[b] = true;
    }
    if occupied.iter().any(|&o| !o) {
        return Err(Error::invalid(
            "bin count exceeds available grid points in span",
        ));
    }
    for b in 0..j {
        let norm = (m.row(b).dot(&m.row(b)) * grid.weight()).sqrt();
        m.row_mut(b).scale_mut(1.0 / norm);
    }
    ModeSet::new(m, grid, "direct")
}

/// Orthonormal factor of the weighted polar factorization; row span
/// preserved. Errors on rank deficiency.
pub fn orthonormalize(raw: &[DVector<f64>], grid: &Grid, label: &str) -> Result<ModeSet> {
    if raw.is_empty() {
        return Err(Error::invalid("no rows to orthonormalize"));
    }
    let g = grid.len();
    let mut x = DMatrix::zeros(raw.len(), g);
    for (j, r) in raw.iter().enumerate() {
        if r.len() != g {
            return Err(Error::dim(g, r.len(), "raw mode samples"));
        }
        x.row_mut(j).copy_from(&(r.transpose() * grid.weight().sqrt()));
    }
    let x = orthonormalize_weighted(&x)?;
    ModeSet::from_weighted(x, grid, label)
}

/// Polar orthonormalization of a row matrix in weighted coordinates.
pub fn orthonormalize_weighted(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = x.clone().svd(true, true);
    let smallest = svd.singular_values.iter().cloned().fold(f64::MAX, f64::min);
    let scale = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smallest < RANK_TOL * scale.max(1.0) {
        return Err(Error::RankDeficient { smallest });
    }
    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    Ok(u * vt)
}

/// Random orthonormal mode set, deterministic for a given rng state.
pub fn random_modes(grid: &Grid, j: usize, rng: &mut impl Rng, label: &str) -> Result<ModeSet> {
    let raw: Vec<DVector<f64>> = (0..j)
        .map(|_| DVector::from_fn(grid.len(), |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    orthonormalize(&raw, grid, label)
}
