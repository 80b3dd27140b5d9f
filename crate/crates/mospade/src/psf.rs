//! Gaussian field point-spread functions and the overlap/response kernels
//! that link source coordinates to imaging-mode detection amplitudes.
//!
//! The 1D field PSF is `ψ_R(x) = (2πσ²)^(−1/4) exp[−(x−R)²/(4σ²)]`; the 2D
//! PSF is the separable product of two 1D factors. Both are unit-normalized
//! as fields, so `∫|ψ_R|² = 1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridDim, Point};
use crate::modes::ModeSet;
use crate::source::SourceQuadrature;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsfKind {
    Gaussian1d,
    Gaussian2d,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psf {
    pub kind: PsfKind,
    pub sigma: f64,
}

impl Psf {
    pub fn new(kind: PsfKind, sigma: f64) -> Result<Psf> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
        }
        Ok(Psf { kind, sigma })
    }

    pub fn gaussian_1d(sigma: f64) -> Result<Psf> {
        Psf::new(PsfKind::Gaussian1d, sigma)
    }

    pub fn gaussian_2d(sigma: f64) -> Result<Psf> {
        Psf::new(PsfKind::Gaussian2d, sigma)
    }

    pub fn dim(&self) -> GridDim {
        match self.kind {
            PsfKind::Gaussian1d => GridDim::One,
            PsfKind::Gaussian2d => GridDim::Two,
        }
    }

    fn factor(&self, r: f64, x: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        (2.0 * std::f64::consts::PI * s2).powf(-0.25) * (-(x - r).powi(2) / (4.0 * s2)).exp()
    }

    /// Field amplitude at image point `x` from a point source at `R`.
    pub fn amplitude(&self, r: Point, x: Point) -> f64 {
        match self.kind {
            PsfKind::Gaussian1d => self.factor(r[0], x[0]),
            PsfKind::Gaussian2d => self.factor(r[0], x[0]) * self.factor(r[1], x[1]),
        }
    }

    /// PSF sampled over the grid, centered at `r`.
    pub fn sample(&self, r: Point, grid: &Grid) -> DVector<f64> {
        grid.sample(|x| self.amplitude(r, x))
    }

    /// Image-plane grid extending 6σ beyond the source region so PSF tails
    /// from edge sources are captured to < 1e−9 truncation.
    pub fn image_grid(&self, source_extent: f64, spacing: f64) -> Result<Grid> {
        Grid::new(self.dim(), source_extent + 6.0 * self.sigma, spacing)
    }

    /// Matrix of PSF samples, one column per source point: `Ψ[i, s] = ψ_{R_s}(x_i)`.
    pub fn sample_matrix(&self, sources: &[Point], grid: &Grid) -> DMatrix<f64> {
        let g = grid.len();
        let mut psi = DMatrix::zeros(g, sources.len());
        match self.kind {
            PsfKind::Gaussian2d => {
                // separable product, cached 1D factors per axis
                let axis = grid.axis();
                let n = axis.len();
                for (s, &r) in sources.iter().enumerate() {
                    let fx: Vec<f64> = axis.iter().map(|&x| self.factor(r[0], x)).collect();
                    let fy: Vec<f64> = axis.iter().map(|&y| self.factor(r[1], y)).collect();
                    let mut col = psi.column_mut(s);
                    for iy in 0..n {
                        for ix in 0..n {
                            col[iy * n + ix] = fx[ix] * fy[iy];
                        }
                    }
                }
            }
            PsfKind::Gaussian1d => {
                for (s, &r) in sources.iter().enumerate() {
                    psi.set_column(s, &self.sample(r, grid));
                }
            }
        }
        psi
    }
}

/// Overlap amplitudes `O[j, s] = ⟨φ_j | ψ_{R_s}⟩` between imaging modes and
/// the PSFs of a set of source points.
#[derive(Debug, Clone)]
pub struct OverlapKernel {
    pub values: DMatrix<f64>,
    pub mode_label: String,
}

/// Overlap kernel over an explicit list of source points.
pub fn overlap_kernel(modes: &ModeSet, sources: &[Point], psf: &Psf) -> Result<OverlapKernel> {
    if psf.dim() != modes.grid().dim() {
        return Err(Error::invalid("psf dimensionality does not match mode grid"));
    }
    let psi = psf.sample_matrix(sources, modes.grid());
    // O = Φ·diag(w)·Ψ
    let values = modes.matrix() * psi * modes.grid().weight();
    Ok(OverlapKernel {
        values,
        mode_label: modes.label().to_string(),
    })
}

/// Response matrix `M[j, k] = ∂P_j/∂c_k = Σ_s f_k-weight · O[j,s]²` over a
/// source-basis quadrature. All entries are non-negative.
pub fn response_matrix(kernel: &OverlapKernel, quad: &SourceQuadrature) -> Result<DMatrix<f64>> {
    let (j, s) = kernel.values.shape();
    if s != quad.len() {
        return Err(Error::dim(quad.len(), s, "overlap kernel source points"));
    }
    let mut m = DMatrix::zeros(j, quad.num_modes);
    for (si, (&k, &w)) in quad.mode_of.iter().zip(&quad.weights).enumerate() {
        for ji in 0..j {
            let o = kernel.values[(ji, si)];
            m[(ji, k)] += w * o * o;
        }
    }
    Ok(m)
}
