//! Quantum Fisher information via symmetric logarithmic derivatives and the
//! QCRB benchmark, plus the weak-commutativity diagnostic.
//!
//! The single-photon density operator of the incoherent source is assembled
//! on the weighted image grid: `ρ = Σ_k c_k ρ_k` with
//! `ρ_k = ∫dR f_k(R) |ψ_R⟩⟨ψ_R|`, so `tr(ρ_k)` equals the mode integral and
//! unit source flux gives `tr(ρ) = 1`. All operators live in the weighted
//! basis `u = √w·f`, where grid inner products are plain dot products.
//!
//! The SLD sum runs over eigenvalue pairs with `λ_q + λ_p > cutoff`; pairs
//! with one large and one negligible eigenvalue carry pure-state-like
//! information and must be kept, or the information matrix loses positive
//! definiteness for strongly overlapping sources. The QCRB is a benchmark
//! only — no attaining collective measurement is constructed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fisher::invert_spd;
use crate::grid::Grid;
use crate::psf::Psf;
use crate::source::SourceModel;

pub const DEFAULT_EIGENVALUE_CUTOFF_REL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct DensityState {
    grid: Grid,
    /// Eigenvalues of ρ, descending.
    eigvals: DVector<f64>,
    /// Matching eigenvectors as columns.
    eigvecs: DMatrix<f64>,
    /// Low-rank factors of ∂ρ/∂c_k = B_k·B_kᵀ in the weighted basis.
    drho_factors: Vec<DMatrix<f64>>,
    trace: f64,
}

impl DensityState {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigvecs
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigvals
    }

    pub fn num_params(&self) -> usize {
        self.drho_factors.len()
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    /// Dense ρ in the weighted basis (test/diagnostic use).
    pub fn rho_dense(&self) -> DMatrix<f64> {
        let g = self.eigvecs.nrows();
        let mut rho = DMatrix::zeros(g, g);
        for q in 0..self.eigvals.len() {
            let col = self.eigvecs.column(q);
            rho.syger(self.eigvals[q], &col, &col, 1.0);
        }
        rho.fill_upper_triangle_with_lower_triangle();
        rho
    }

    /// Dense ∂ρ/∂c_k in the weighted basis.
    pub fn drho_dense(&self, k: usize) -> DMatrix<f64> {
        let b = &self.drho_factors[k];
        b * b.transpose()
    }

    #[cfg(test)]
    fn retained(&self, cutoff: f64) -> Vec<usize> {
        (0..self.eigvals.len())
            .filter(|&q| 2.0 * self.eigvals[q] > cutoff)
            .collect()
    }
}

/// Assemble the density state of a unit-flux source model by quadrature over
/// its source-basis supports.
pub fn density_matrix(model: &SourceModel, psf: &Psf, image_grid: &Grid) -> Result<DensityState> {
    if psf.dim() != image_grid.dim() {
        return Err(Error::invalid("psf dimensionality does not match grid"));
    }
    let quad = model.basis.quadrature(crate::fisher::quad_spacing(image_grid));
    let psi = psf.sample_matrix(&quad.points, image_grid);
    let sw = image_grid.weight().sqrt();
    let g = image_grid.len();
    let k = model.num_modes();

    // columns of B_k: √(q_w)·√w·ψ_{R_s} for nodes s in mode k
    let mut columns: Vec<Vec<DVector<f64>>> = vec![Vec::new(); k];
    for (s, (&kk, &qw)) in quad.mode_of.iter().zip(&quad.weights).enumerate() {
        let col: DVector<f64> = psi.column(s) * (sw * qw.sqrt());
        columns[kk].push(col);
    }
    let drho_factors: Vec<DMatrix<f64>> = columns
        .into_iter()
        .map(|cols| {
            let mut b = DMatrix::zeros(g, cols.len());
            for (i, c) in cols.iter().enumerate() {
                b.set_column(i, c);
            }
            b
        })
        .collect();

    let mut rho = DMatrix::zeros(g, g);
    for (kk, b) in drho_factors.iter().enumerate() {
        let scaled = b * model.c[kk].sqrt();
        rho += &scaled * scaled.transpose();
    }
    let trace = rho.trace();
    if (trace - 1.0).abs() > TRACE_TOL {
        return Err(Error::QuadratureResolution(format!(
            "density trace {trace} deviates from 1 beyond {TRACE_TOL}; refine the grid"
        )));
    }

    let eig = rho.symmetric_eigen();
    // sort descending
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigvals = DVector::from_iterator(g, order.iter().map(|&q| eig.eigenvalues[q]));
    let mut eigvecs = DMatrix::zeros(g, g);
    for (i, &q) in order.iter().enumerate() {
        eigvecs.set_column(i, &eig.eigenvectors.column(q));
    }
    if eigvals[g - 1] < -1e-12 {
        return Err(Error::Numerical(format!(
            "density matrix has negative eigenvalue {}",
            eigvals[g - 1]
        )));
    }

    Ok(DensityState {
        grid: image_grid.clone(),
        eigvals,
        eigvecs,
        drho_factors,
        trace,
    })
}

/// Default absolute eigenvalue cutoff for a state.
pub fn default_cutoff(state: &DensityState) -> f64 {
    DEFAULT_EIGENVALUE_CUTOFF_REL * state.eigvals[0]
}

/// Symmetric logarithmic derivative for parameter `k`, as a dense symmetric
/// matrix in the weighted grid basis.
pub fn sld(state: &DensityState, k: usize, cutoff: f64) -> DMatrix<f64> {
    let l_eig = sld_in_eigenbasis(state, k, cutoff);
    &state.eigvecs * l_eig * state.eigvecs.transpose()
}

#[cfg(test)]
fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), cols.len());
    for (i, &c) in cols.iter().enumerate() {
        out.set_column(i, &m.column(c));
    }
    out
}

/// L̃_k[q,p] = 2·⟨e_q|∂ρ_k|e_p⟩/(λ_q+λ_p) over pairs with λ_q+λ_p > cutoff.
fn sld_in_eigenbasis(state: &DensityState, k: usize, cutoff: f64) -> DMatrix<f64> {
    let f = state.eigvecs.transpose() * &state.drho_factors[k]; // G×rank_k
    let d = &f * f.transpose();
    let g = state.eigvals.len();
    DMatrix::from_fn(g, g, |q, p| {
        let denom = state.eigvals[q] + state.eigvals[p];
        if denom > cutoff {
            2.0 * d[(q, p)] / denom
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone)]
pub struct QfiReport {
    pub k_matrix: DMatrix<f64>,
    pub qcrb_diag: DVector<f64>,
    pub qcrb_mean: f64,
    /// max over parameter pairs of |tr(ρ[L_i, L_j])|.
    pub weak_comm_residual: f64,
}

/// Assemble the quantum Fisher information `K_kl = Re tr(L_k·L_l·ρ)` with
/// all SLDs sharing `cutoff`; also returns the weak-commutativity residual
/// `max |tr(ρ[L_k, L_l])|`.
pub fn qfi_matrix(state: &DensityState, cutoff: f64) -> Result<(DMatrix<f64>, f64)> {
    if 2.0 * state.eigvals[0] <= cutoff {
        return Err(Error::invalid("eigenvalue cutoff removed the full spectrum"));
    }
    let kp = state.num_params();
    let slds: Vec<DMatrix<f64>> = (0..kp)
        .map(|k| sld_in_eigenbasis(state, k, cutoff))
        .collect();
    let lambda = &state.eigvals;
    let r = state.eigvals.len();

    let mut k_matrix = DMatrix::zeros(kp, kp);
    let mut weak = 0.0f64;
    for a in 0..kp {
        for b in a..kp {
            let la = &slds[a];
            let lb = &slds[b];
            // tr(L_a L_b ρ) = Σ_{q,p} λ_q L_a[q,p] L_b[q,p] for symmetric SLDs
            let mut acc = 0.0;
            let mut acc_t = 0.0;
            for q in 0..r {
                let lq = lambda[q];
                let mut row = 0.0;
                let mut row_t = 0.0;
                for p in 0..r {
                    row += la[(q, p)] * lb[(q, p)];
                    row_t += la[(q, p)] * lb[(p, q)];
                }
                acc += lq * row;
                acc_t += lq * row_t;
            }
            k_matrix[(a, b)] = acc;
            k_matrix[(b, a)] = acc;
            // tr(ρ[L_a, L_b]) = Σ λ_q [(L_a L_b)_qq − (L_b L_a)_qq]
            weak = weak.max((acc - acc_t).abs());
        }
    }
    Ok((k_matrix, weak))
}

/// QCRB report from the quantum Fisher information, inverted without ridge.
pub fn qfi_and_qcrb(
    state: &DensityState,
    cutoff: f64,
    weight: Option<&DMatrix<f64>>,
) -> Result<QfiReport> {
    let (k_matrix, weak) = qfi_matrix(state, cutoff)?;
    let kp = k_matrix.nrows();
    let (inv, _) = invert_spd(&k_matrix, 0.0)?;
    let qcrb_diag = inv.diagonal();
    let qcrb_mean = match weight {
        None => qcrb_diag.mean(),
        Some(w) => (w * &inv).trace() / kp as f64,
    };
    Ok(QfiReport {
        k_matrix,
        qcrb_diag,
        qcrb_mean,
        weak_comm_residual: weak,
    })
}
