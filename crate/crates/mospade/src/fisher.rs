//! Classical Fisher information, Cramér–Rao bounds, the scalar design
//! objective and its analytic gradient with respect to the mode matrix.
//!
//! Per detected photon, `I_kl = Σ_j M[j,k]·M[j,l]/P_j` with `P = M·c` and
//! `M[j,k] = ∂P_j/∂c_k` the response matrix. The design objective is
//! `L(Φ) = tr(W·Ĩ⁻¹)` with `Ĩ` the (optionally ridge-regularized) Fisher
//! matrix. Photon counts are modeled as independent Poisson variables with
//! means `N·P_j`, so light not captured by the modes (`Σ_j P_j < 1`) is
//! handled without renormalization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::modes::{self, ModeSet};
use crate::psf::{overlap_kernel, response_matrix, Psf};
use crate::source::{SourceModel, SourceQuadrature};

pub const DEFAULT_PROB_FLOOR: f64 = 1e-12;
pub const DEFAULT_RIDGE: f64 = 1e-9;
const CONDITION_LIMIT: f64 = 1e15;

#[derive(Debug, Clone)]
pub struct ObjectiveConfig {
    /// Symmetric PSD weighting matrix; `None` means identity.
    pub weight: Option<DMatrix<f64>>,
    /// Absolute floor for detection probabilities inside 1/P terms.
    pub prob_floor: f64,
    /// Tikhonov term relative to tr(I)/K, applied before inversion.
    pub ridge: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            weight: None,
            prob_floor: DEFAULT_PROB_FLOOR,
            ridge: 0.0,
        }
    }
}

impl ObjectiveConfig {
    /// Configuration used inside the optimizer: small ridge for smoothness.
    pub fn for_optimizer() -> Self {
        ObjectiveConfig {
            weight: None,
            prob_floor: DEFAULT_PROB_FLOOR,
            ridge: DEFAULT_RIDGE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FisherReport {
    pub p: DVector<f64>,
    pub m: DMatrix<f64>,
    pub info: DMatrix<f64>,
    pub crb_diag: DVector<f64>,
    pub crb_mean: f64,
    pub condition: f64,
}

/// P = M·c.
pub fn detection_probs(m: &DMatrix<f64>, c: &DVector<f64>) -> Result<DVector<f64>> {
    if m.ncols() != c.len() {
        return Err(Error::dim(m.ncols(), c.len(), "detection_probs coefficients"));
    }
    Ok(m * c)
}

/// Per-photon Fisher matrix `I_kl = Σ_j M_jk·M_jl / max(P_j, ε_P)`.
/// Modes with structurally zero response contribute nothing.
pub fn fisher_matrix(m: &DMatrix<f64>, c: &DVector<f64>, config: &ObjectiveConfig) -> Result<DMatrix<f64>> {
    let p = detection_probs(m, c)?;
    let k = m.ncols();
    let mut info = DMatrix::zeros(k, k);
    for j in 0..m.nrows() {
        let row = m.row(j);
        if row.iter().all(|&v| v == 0.0) {
            continue;
        }
        let invp = 1.0 / p[j].max(config.prob_floor);
        for a in 0..k {
            let ra = row[a] * invp;
            if ra == 0.0 {
                continue;
            }
            for b in a..k {
                info[(a, b)] += ra * row[b];
            }
        }
    }
    // mirror the upper triangle
    for a in 0..k {
        for b in 0..a {
            info[(a, b)] = info[(b, a)];
        }
    }
    Ok(info)
}

/// Symmetric-eigendecomposition inverse with ridge; errors when the matrix
/// is numerically singular beyond the ridge rescue.
pub fn crb(info: &DMatrix<f64>, config: &ObjectiveConfig) -> Result<(DVector<f64>, f64)> {
    let (inv, _cond) = invert_spd(info, config.ridge)?;
    let diag = inv.diagonal();
    let mean = diag.mean();
    Ok((diag, mean))
}

/// Inverse of a symmetric PSD matrix via eigendecomposition, with a relative
/// ridge `ridge·tr(A)/K`. Returns the inverse and the condition number of
/// the regularized matrix.
pub fn invert_spd(a: &DMatrix<f64>, ridge: f64) -> Result<(DMatrix<f64>, f64)> {
    let k = a.nrows();
    let reg = if ridge > 0.0 {
        a + DMatrix::identity(k, k) * (ridge * a.trace() / k as f64)
    } else {
        a.clone()
    };
    let eig = reg.symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(min > 0.0) || condition > CONDITION_LIMIT {
        return Err(Error::Singular { condition });
    }
    let mut inv = DMatrix::zeros(k, k);
    for q in 0..k {
        let col = eig.eigenvectors.column(q);
        let scale = 1.0 / eig.eigenvalues[q];
        inv.syger(scale, &col, &col, 1.0);
    }
    // syger fills the lower triangle; symmetrize
    inv.fill_upper_triangle_with_lower_triangle();
    Ok((inv, condition))
}

/// Full classical report for a mode set against a source model.
pub fn fisher_report(
    modes: &ModeSet,
    model: &SourceModel,
    psf: &Psf,
    config: &ObjectiveConfig,
) -> Result<FisherReport> {
    let quad = model.basis.quadrature(quad_spacing(modes.grid()));
    let kernel = overlap_kernel(modes, &quad.points, psf)?;
    let m = response_matrix(&kernel, &quad)?;
    fisher_report_from_response(m, model, config)
}

pub fn fisher_report_from_response(
    m: DMatrix<f64>,
    model: &SourceModel,
    config: &ObjectiveConfig,
) -> Result<FisherReport> {
    let p = detection_probs(&m, &model.c)?;
    let info = fisher_matrix(&m, &model.c, config)?;
    let (inv, condition) = invert_spd(&info, config.ridge)?;
    let crb_diag = match &config.weight {
        None => inv.diagonal(),
        Some(_) => inv.diagonal(),
    };
    let crb_mean = crb_diag.mean();
    Ok(FisherReport {
        p,
        m,
        info,
        crb_diag,
        crb_mean,
        condition,
    })
}

/// Response matrix for ideal fine-pixel direct imaging, one row per grid
/// point, computed without materializing the G×G mode matrix:
/// `M[i,k] = w·Σ_s q_w[s]·ψ_{R_s}(x_i)²`.
pub fn direct_response_matrix(grid: &Grid, psf: &Psf, quad: &SourceQuadrature) -> DMatrix<f64> {
    let psi = psf.sample_matrix(&quad.points, grid);
    let g = grid.len();
    let w = grid.weight();
    let mut m = DMatrix::zeros(g, quad.num_modes);
    for (s, (&k, &qw)) in quad.mode_of.iter().zip(&quad.weights).enumerate() {
        let col = psi.column(s);
        for i in 0..g {
            m[(i, k)] += w * qw * col[i] * col[i];
        }
    }
    m
}

/// Default source-quadrature spacing tied to the image-grid resolution.
pub fn quad_spacing(grid: &Grid) -> f64 {
    grid.spacing()
}

/// Mode set spanning the top eigenvectors of the source-averaged image
/// correlation `Σ_s q_w[s]·c_{k(s)}·ψ_s ψ_sᵀ`. These capture the occupied
/// image subspace and make a much stronger optimizer seed than pixel bins.
pub fn source_adapted_modes(
    model: &SourceModel,
    psf: &Psf,
    grid: &Grid,
    j: usize,
) -> Result<ModeSet> {
    let quad = model.basis.quadrature(quad_spacing(grid));
    let mut a = psf.sample_matrix(&quad.points, grid);
    let sw = grid.weight().sqrt();
    // floor the coefficients so dark source bins still influence the span
    let floor = 1e-3 * model.c.mean().max(f64::MIN_POSITIVE);
    for s in 0..a.ncols() {
        let amp = (quad.weights[s] * model.c[quad.mode_of[s]].max(floor)).sqrt();
        for g in 0..a.nrows() {
            a[(g, s)] *= sw * amp;
        }
    }
    let svd = a.svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::Numerical("svd of image correlation failed".into()))?;
    let take = j.min(u.ncols());
    let mut x = DMatrix::zeros(j, grid.len());
    for r in 0..take {
        x.row_mut(r).copy_from(&u.column(r).transpose());
    }
    if j > take {
        // fewer correlation directions than modes (e.g. delta sources give
        // one column per point): extend the span with coordinate-modulated
        // copies of the leading directions, then re-orthonormalize
        for e in 0..j - take {
            let src = u.column(e % take);
            let power = 1 + e / take;
            for g in 0..grid.len() {
                x[(take + e, g)] = src[g] * grid.points()[g][0].powi(power as i32);
            }
        }
        x = modes::orthonormalize_weighted(&x)?;
    }
    ModeSet::from_weighted(x, grid, "adapted")
}

/// Precomputed workspace for repeated objective/gradient evaluations over
/// varying mode matrices. Holds the PSF sample matrix so the optimizer and
/// the adaptive loop reuse it across Fisher evaluations.
pub struct ModeObjective {
    /// diag(w)·Ψ, G×S.
    psi_w: DMatrix<f64>,
    quad: SourceQuadrature,
    c: DVector<f64>,
    weight: Option<DMatrix<f64>>,
    prob_floor: f64,
    ridge: f64,
    /// Fixed PSD information accumulated from earlier measurement phases,
    /// plus the multiplier on the current-phase Fisher matrix.
    base: Option<DMatrix<f64>>,
    scale: f64,
}

impl ModeObjective {
    pub fn new(
        grid: &Grid,
        psf: &Psf,
        model: &SourceModel,
        config: &ObjectiveConfig,
    ) -> Result<ModeObjective> {
        let quad = model.basis.quadrature(quad_spacing(grid));
        Self::with_quadrature(grid, psf, quad, model.c.clone(), config)
    }

    pub fn with_quadrature(
        grid: &Grid,
        psf: &Psf,
        quad: SourceQuadrature,
        c: DVector<f64>,
        config: &ObjectiveConfig,
    ) -> Result<ModeObjective> {
        if c.len() != quad.num_modes {
            return Err(Error::dim(quad.num_modes, c.len(), "objective coefficients"));
        }
        let psi = psf.sample_matrix(&quad.points, grid);
        Ok(ModeObjective {
            psi_w: psi * grid.weight(),
            quad,
            c,
            weight: config.weight.clone(),
            prob_floor: config.prob_floor,
            ridge: config.ridge,
            base: None,
            scale: 1.0,
        })
    }

    /// Add a fixed information term: the evaluated objective becomes
    /// `tr(W·[base + scale·I(c;Φ)]⁻¹)` (adaptive Fisher accumulation).
    pub fn with_base(mut self, base: DMatrix<f64>, scale: f64) -> Self {
        self.base = Some(base);
        self.scale = scale;
        self
    }

    pub fn num_params(&self) -> usize {
        self.quad.num_modes
    }

    /// Objective value and exact Euclidean gradient with respect to the raw
    /// (unweighted) mode matrix Φ (J×G).
    pub fn eval(&self, phi: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        if phi.ncols() != self.psi_w.nrows() {
            return Err(Error::dim(self.psi_w.nrows(), phi.ncols(), "mode matrix columns"));
        }
        let j = phi.nrows();
        let k = self.quad.num_modes;
        let s_count = self.quad.len();

        // O = Φ·diag(w)·Ψ (J×S)
        let o = phi * &self.psi_w;

        // M[j,k] = Σ_s q_w[s]·O[j,s]²
        let mut m = DMatrix::zeros(j, k);
        for (s, (&kk, &qw)) in self.quad.mode_of.iter().zip(&self.quad.weights).enumerate() {
            for ji in 0..j {
                let v = o[(ji, s)];
                m[(ji, kk)] += qw * v * v;
            }
        }

        let p = &m * &self.c;
        let invp: Vec<f64> = p.iter().map(|&pj| 1.0 / pj.max(self.prob_floor)).collect();
        let active: Vec<bool> = p.iter().map(|&pj| pj > self.prob_floor).collect();

        let mut info = DMatrix::zeros(k, k);
        for ji in 0..j {
            let row = m.row(ji);
            for a in 0..k {
                let ra = row[a] * invp[ji];
                if ra == 0.0 {
                    continue;
                }
                for b in a..k {
                    info[(a, b)] += ra * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }

        let mut total = info.clone() * self.scale;
        if let Some(base) = &self.base {
            total += base;
        }

        // weight matrix W; all-zero W short-circuits to L = 0, G = 0
        if let Some(w) = &self.weight {
            if w.iter().all(|&v| v == 0.0) {
                return Ok((0.0, DMatrix::zeros(j, phi.ncols())));
            }
        }

        let ktot = total.nrows();
        let reg = if self.ridge > 0.0 {
            &total + DMatrix::identity(ktot, ktot) * (self.ridge * total.trace() / ktot as f64)
        } else {
            total.clone()
        };
        let chol = reg
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular { condition: f64::INFINITY })?;
        let inv = chol.inverse();

        let (l_value, s_mat) = match &self.weight {
            None => (inv.trace(), &inv * &inv),
            Some(w) => ((w * &inv).trace(), &inv * w * &inv),
        };
        // dĨ = scale·dI + (ridge/K)·scale·tr(dI)·Id
        let s_eff = if self.ridge > 0.0 {
            &s_mat + DMatrix::identity(k, k) * (self.ridge * s_mat.trace() / ktot as f64)
        } else {
            s_mat.clone()
        };

        // ∂L/∂M_jk = −scale·[2(M·S')_jk·invp_j − act_j·(M·S'·Mᵀ)_jj·invp_j²·c_k]
        let msp = &m * &s_eff; // J×K
        let mut gm = DMatrix::zeros(j, k);
        for ji in 0..j {
            let mrow = msp.row(ji).dot(&m.row(ji));
            for kk in 0..k {
                let mut g = 2.0 * msp[(ji, kk)] * invp[ji];
                if active[ji] {
                    g -= mrow * invp[ji] * invp[ji] * self.c[kk];
                }
                gm[(ji, kk)] = -self.scale * g;
            }
        }

        // T[j,s] = q_w[s]·GM[j, mode(s)]·O[j,s]; G_Φ = 2·T·(diag(w)Ψ)ᵀ
        let mut t = DMatrix::zeros(j, s_count);
        for (s, (&kk, &qw)) in self.quad.mode_of.iter().zip(&self.quad.weights).enumerate() {
            for ji in 0..j {
                t[(ji, s)] = qw * gm[(ji, kk)] * o[(ji, s)];
            }
        }
        let grad = 2.0 * t * self.psi_w.transpose();
        Ok((l_value, grad))
    }

    /// Objective value only.
    pub fn value(&self, phi: &DMatrix<f64>) -> Result<f64> {
        // value path shares eval; the gradient cost is dominated by the same
        // matrix products, so no separate fast path is kept
        Ok(self.eval(phi)?.0)
    }
}

/// Objective and gradient for a `ModeSet` (spec-level entry point).
pub fn objective_and_gradient(
    modes: &ModeSet,
    model: &SourceModel,
    psf: &Psf,
    config: &ObjectiveConfig,
) -> Result<(f64, DMatrix<f64>)> {
    let obj = ModeObjective::new(modes.grid(), psf, model, config)?;
    obj.eval(modes.matrix())
}
