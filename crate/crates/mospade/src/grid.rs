//! Uniform discretization of the 1D/2D object and image planes.
//!
//! All spatial quantities are expressed in units of the PSF width σ. A grid
//! carries midpoint-rule quadrature weights (`h` in 1D, `h²` in 2D); every
//! inner product in the crate is taken against these weights, so mode norms
//! are independent of the grid resolution.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// A 2-component spatial coordinate. 1D grids use only the first component.
pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridDim {
    One,
    Two,
}

impl GridDim {
    pub fn as_usize(self) -> usize {
        match self {
            GridDim::One => 1,
            GridDim::Two => 2,
        }
    }
}

/// Uniform sampling of `[-extent, +extent]` per axis.
///
/// 2D point ordering is row-major with x fastest, so a mode matrix sampled
/// on this grid has a portable layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: GridDim,
    extent: f64,
    spacing: f64,
    axis: Vec<f64>,
    points: Vec<Point>,
    weight: f64,
}

impl Grid {
    pub fn new(dim: GridDim, extent: f64, spacing: f64) -> Result<Grid> {
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::invalid(format!("extent must be > 0, got {extent}")));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::invalid(format!(
                "spacing must be > 0, got {spacing}"
            )));
        }
        if spacing > extent {
            return Err(Error::invalid(format!(
                "spacing {spacing} exceeds extent {extent}"
            )));
        }
        // floor with a tolerance so that exact divisors are not lost to round-off
        let n_axis = ((2.0 * extent / spacing) + 1e-9).floor() as usize + 1;
        if n_axis < 2 {
            return Err(Error::invalid("grid must have at least 2 points per axis"));
        }
        let axis: Vec<f64> = (0..n_axis).map(|i| -extent + i as f64 * spacing).collect();
        let points = match dim {
            GridDim::One => axis.iter().map(|&x| [x, 0.0]).collect(),
            GridDim::Two => {
                let mut pts = Vec::with_capacity(n_axis * n_axis);
                for &y in &axis {
                    for &x in &axis {
                        pts.push([x, y]);
                    }
                }
                pts
            }
        };
        let weight = match dim {
            GridDim::One => spacing,
            GridDim::Two => spacing * spacing,
        };
        Ok(Grid {
            dim,
            extent,
            spacing,
            axis,
            points,
            weight,
        })
    }

    pub fn dim(&self) -> GridDim {
        self.dim
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Number of sample points (per-axis count squared in 2D).
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points_per_axis(&self) -> usize {
        self.axis.len()
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Quadrature weight per sample.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Same extent at half the spacing; used for convergence checks.
    pub fn refine(&self) -> Result<Grid> {
        Grid::new(self.dim, self.extent, self.spacing / 2.0)
    }

    /// Sample a function on every grid point.
    pub fn sample(&self, f: impl Fn(Point) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.points.len(), self.points.iter().map(|&p| f(p)))
    }

    /// Quadrature-weighted inner product of two sampled functions.
    pub fn inner_product(&self, f: &DVector<f64>, g: &DVector<f64>) -> Result<f64> {
        if f.len() != self.points.len() {
            return Err(Error::dim(self.points.len(), f.len(), "inner_product lhs"));
        }
        if g.len() != self.points.len() {
            return Err(Error::dim(self.points.len(), g.len(), "inner_product rhs"));
        }
        Ok(f.dot(g) * self.weight)
    }

    pub fn norm(&self, f: &DVector<f64>) -> Result<f64> {
        Ok(self.inner_product(f, f)?.sqrt())
    }
}
