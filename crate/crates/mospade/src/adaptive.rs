//! The no-prior-knowledge adaptive measurement loop: alternate source
//! estimation and mode re-optimization, accumulating Fisher information
//! across measurement bases weighted by their photon budgets.
//!
//! The ground truth is used only to generate photon counts. Everything the
//! optimizer sees derives from `(records, c_est)`, so two ground truths
//! producing identical counts produce identical mode sequences.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimator::{nnls, stack_design};
use crate::fisher::{self, direct_response_matrix, fisher_matrix, invert_spd, ModeObjective, ObjectiveConfig};
use crate::grid::{Grid, GridDim};
use crate::modes::{self, ModeSet};
use crate::psf::{overlap_kernel, response_matrix, Psf};
use crate::sim::{sample_counts, trial_seed, MeasurementRecord};
use crate::source::{SourceModel, SourceQuadrature};
use crate::stiefel::{minimize_modes, OptimizerOptions};

/// Floor applied to zero coordinates of the estimate before Fisher
/// evaluation, relative to the largest coordinate.
pub const ESTIMATE_FLOOR_REL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum ModePolicy {
    Direct,
    Optimize { modes: usize },
}

#[derive(Debug, Clone)]
pub struct Phase {
    pub budget: f64,
    pub policy: ModePolicy,
}

#[derive(Debug, Clone)]
pub struct AdaptiveSchedule {
    pub phases: Vec<Phase>,
    pub seed: u64,
    /// Apply Poisson-variance row weighting to the stacked NNLS solves.
    /// Recommended for low-contrast 2D targets where count scales differ by
    /// orders of magnitude between the direct and modal records.
    pub weighted_nnls: bool,
}

impl AdaptiveSchedule {
    /// Default schedule: equal budgets, phase 0 direct, `adaptive_phases`
    /// optimized phases with `j_adapt` modes each.
    pub fn equal_split(total_budget: f64, j_adapt: usize, adaptive_phases: usize, seed: u64) -> AdaptiveSchedule {
        let n = adaptive_phases + 1;
        let budget = total_budget / n as f64;
        let mut phases = vec![Phase { budget, policy: ModePolicy::Direct }];
        for _ in 0..adaptive_phases {
            phases.push(Phase {
                budget,
                policy: ModePolicy::Optimize { modes: j_adapt },
            });
        }
        AdaptiveSchedule { phases, seed, weighted_nnls: false }
    }

    pub fn with_weighted_nnls(mut self) -> AdaptiveSchedule {
        self.weighted_nnls = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::invalid("schedule needs at least one phase"));
        }
        if self.phases[0].policy != ModePolicy::Direct {
            return Err(Error::invalid("phase 0 must use the direct imaging basis"));
        }
        if self.phases.iter().any(|p| !(p.budget > 0.0)) {
            return Err(Error::invalid("phase budgets must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PhaseOutcome {
    pub record: MeasurementRecord,
    /// Response matrix of the basis actually measured in this phase.
    pub response: DMatrix<f64>,
    /// Dense mode set for optimized phases; `None` for direct imaging.
    pub modes: Option<ModeSet>,
    /// Estimate after incorporating this phase's data.
    pub c_est: DVector<f64>,
    pub optimizer_failed: bool,
}

#[derive(Debug, Clone)]
pub struct AdaptiveResult {
    pub phases: Vec<PhaseOutcome>,
    pub final_c: DVector<f64>,
    /// Estimated CRB of the accumulated information at the final estimate,
    /// per total photon; `None` when the accumulated matrix is singular.
    pub est_crb_diag: Option<DVector<f64>>,
    pub est_crb_mean: Option<f64>,
}

/// Eq.-style accumulation `Σ_m N_m·I(c_est; Φ_m)` over measurement records.
pub fn accumulate_fisher(
    records: &[MeasurementRecord],
    responses: &[DMatrix<f64>],
    c_est: &DVector<f64>,
    config: &ObjectiveConfig,
) -> Result<DMatrix<f64>> {
    if records.len() != responses.len() {
        return Err(Error::dim(records.len(), responses.len(), "records vs responses"));
    }
    if c_est.iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("Fisher information undefined at an all-zero estimate"));
    }
    let k = responses
        .first()
        .map(|m| m.ncols())
        .ok_or_else(|| Error::invalid("no records"))?;
    let mut acc = DMatrix::zeros(k, k);
    for (rec, m) in records.iter().zip(responses) {
        acc += fisher_matrix(m, c_est, config)? * rec.budget;
    }
    Ok(acc)
}

/// Floor dark coordinates and renormalize to unit flux for Fisher
/// evaluation; an all-zero estimate becomes the uniform prior.
pub fn regularize_estimate(c: &DVector<f64>, mode_integral: f64) -> DVector<f64> {
    let max = c.max();
    let mut out = if max <= 0.0 {
        DVector::from_element(c.len(), 1.0)
    } else {
        c.map(|v| v.max(ESTIMATE_FLOOR_REL * max))
    };
    let flux = out.sum() * mode_integral;
    out /= flux;
    out
}

/// Initial mode set for the first optimized phase: pixel bins over the
/// source span, padded with random rows when the requested count does not
/// tile (e.g. non-square counts in 2D).
fn adaptive_init(
    grid: &Grid,
    j: usize,
    source_extent: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ModeSet> {
    let ext = source_extent.min(grid.extent());
    match grid.dim() {
        GridDim::One => match modes::pixel_basis(grid, j, (-ext, ext)) {
            Ok(ms) => Ok(ms),
            Err(_) => modes::random_modes(grid, j, rng, "init"),
        },
        GridDim::Two => {
            let n = (j as f64).sqrt().floor() as usize;
            if n * n == j {
                if let Ok(ms) = modes::pixel_basis_2d(grid, n, ext) {
                    return Ok(ms);
                }
            } else if n >= 1 {
                if let Ok(base) = modes::pixel_basis_2d(grid, n, ext) {
                    let mut rows: Vec<DVector<f64>> = (0..base.num_modes())
                        .map(|r| base.matrix().row(r).transpose())
                        .collect();
                    use rand::Rng;
                    for _ in 0..j - n * n {
                        rows.push(DVector::from_fn(grid.len(), |_, _| rng.gen_range(-1.0..1.0)));
                    }
                    if let Ok(ms) = modes::orthonormalize(&rows, grid, "init") {
                        return Ok(ms);
                    }
                }
            }
            modes::random_modes(grid, j, rng, "init")
        }
    }
}

/// Execute the adaptive schedule against a ground-truth model.
pub fn run_adaptive(
    truth: &SourceModel,
    schedule: &AdaptiveSchedule,
    psf: &Psf,
    image_grid: &Grid,
    opt_opts: &OptimizerOptions,
    config: &ObjectiveConfig,
) -> Result<AdaptiveResult> {
    schedule.validate()?;
    let quad: SourceQuadrature = truth.basis.quadrature(fisher::quad_spacing(image_grid));
    let mode_integral = truth.basis.mode_integral();
    let source_extent = truth.basis.support_extent();
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(schedule.seed, u64::MAX));

    let mut outcomes: Vec<PhaseOutcome> = Vec::new();
    let mut records: Vec<MeasurementRecord> = Vec::new();
    let mut responses: Vec<DMatrix<f64>> = Vec::new();
    // modes for the phase about to be measured; None = direct imaging
    let mut current: Option<ModeSet> = None;
    let mut last_optimized: Option<ModeSet> = None;
    let mut c_est = DVector::zeros(truth.num_modes());

    for (i, phase) in schedule.phases.iter().enumerate() {
        let (response, label) = match &current {
            None => (
                direct_response_matrix(image_grid, psf, &quad),
                "direct".to_string(),
            ),
            Some(ms) => (
                response_matrix(&overlap_kernel(ms, &quad.points, psf)?, &quad)?,
                ms.label().to_string(),
            ),
        };
        let p_true = fisher::detection_probs(&response, &truth.c)?;
        let counts = sample_counts(p_true.as_slice(), phase.budget, trial_seed(schedule.seed, i as u64))?;
        let record = MeasurementRecord {
            mode_label: label,
            counts,
            budget: phase.budget,
            seed: trial_seed(schedule.seed, i as u64),
        };
        records.push(record.clone());
        responses.push(response.clone());

        let mut system = stack_design(&records, &responses)?;
        if schedule.weighted_nnls {
            system = system.poisson_weighted();
        }
        c_est = nnls(&system)?.c;

        let mut optimizer_failed = false;
        let mut next_modes: Option<ModeSet> = None;
        if let Some(next) = schedule.phases.get(i + 1) {
            match &next.policy {
                ModePolicy::Direct => {}
                ModePolicy::Optimize { modes: j_adapt } => {
                    let c_fisher = regularize_estimate(&c_est, mode_integral);
                    let i_fixed = accumulate_fisher(&records, &responses, &c_fisher, config)?;
                    let objective = ModeObjective::with_quadrature(
                        image_grid,
                        psf,
                        quad.clone(),
                        c_fisher.clone(),
                        config,
                    )?
                    .with_base(i_fixed, next.budget);
                    let init = match &last_optimized {
                        Some(ms) if ms.num_modes() == *j_adapt => ms.clone(),
                        // adapt the starting basis to the current estimate,
                        // not the ground truth; pixel fallback when the
                        // estimate's correlation is rank deficient
                        _ => SourceModel::new(truth.basis.clone(), c_fisher.clone())
                            .and_then(|est| {
                                fisher::source_adapted_modes(&est, psf, image_grid, *j_adapt)
                            })
                            .or_else(|_| {
                                adaptive_init(image_grid, *j_adapt, source_extent, &mut rng)
                            })?,
                    };
                    match minimize_modes(&objective, &init, image_grid, opt_opts) {
                        Ok((ms, _)) => {
                            let ms = ModeSet::new(
                                ms.matrix().clone(),
                                image_grid,
                                format!("optimized-iter-{}", i + 1),
                            )?;
                            last_optimized = Some(ms.clone());
                            next_modes = Some(ms);
                        }
                        Err(_) => {
                            optimizer_failed = true;
                            next_modes = last_optimized.clone().or(Some(init));
                        }
                    }
                }
            }
        }

        outcomes.push(PhaseOutcome {
            record,
            response,
            modes: current.clone(),
            c_est: c_est.clone(),
            optimizer_failed,
        });
        current = match schedule.phases.get(i + 1).map(|p| &p.policy) {
            Some(ModePolicy::Direct) | None => None,
            Some(ModePolicy::Optimize { .. }) => next_modes,
        };
    }

    // estimated CRB from the full accumulated information at the final estimate
    let c_fisher = regularize_estimate(&c_est, mode_integral);
    let (est_crb_diag, est_crb_mean) =
        match accumulate_fisher(&records, &responses, &c_fisher, config)
            .and_then(|acc| invert_spd(&acc, 0.0))
        {
            Ok((inv, _)) => {
                let d = inv.diagonal();
                let m = d.mean();
                (Some(d), Some(m))
            }
            Err(_) => (None, None),
        };

    Ok(AdaptiveResult {
        phases: outcomes,
        final_c: c_est,
        est_crb_diag,
        est_crb_mean,
    })
}
