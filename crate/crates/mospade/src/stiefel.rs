//! Minimization of smooth objectives over matrices with orthonormal rows —
//! gradient projection with Barzilai–Borwein steps, a nonmonotone Armijo
//! line search, and QR retraction.
//!
//! The core routines operate on the weighted representation
//! `X = Φ·diag(√w)`, for which the feasible set is the standard Stiefel
//! manifold `X·Xᵀ = I`. `ModeSet`-level wrappers convert at the boundary.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fisher::ModeObjective;
use crate::grid::Grid;
use crate::modes::{self, ModeSet};

#[derive(Debug, Clone)]
pub struct OptimizerOptions {
    pub max_iters: usize,
    /// Convergence on relative Riemannian gradient norm: ‖T‖ ≤ tol·(1+|L|).
    pub grad_tol: f64,
    /// Nonmonotone line-search window length.
    pub window: usize,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    pub step_min: f64,
    pub step_max: f64,
    /// Extra random-restart count; the returned solution is the lowest L,
    /// tie-broken by seed order.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            max_iters: 500,
            grad_tol: 1e-6,
            window: 5,
            armijo: 1e-4,
            step_min: 1e-10,
            step_max: 1e10,
            restarts: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIters,
    LineSearchFailure,
}

#[derive(Debug, Clone)]
pub struct IterRecord {
    pub value: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub ortho_residual: f64,
}

#[derive(Debug, Clone)]
pub struct OptimTrace {
    pub iters: Vec<IterRecord>,
    pub termination: Termination,
}

/// Project an ambient gradient onto the tangent space at X (X·Xᵀ = I):
/// `T = G − sym(G·Xᵀ)·X`.
pub fn project_tangent(x: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.shape() != g.shape() {
        return Err(Error::dim(x.len(), g.len(), "tangent projection shapes"));
    }
    let gxt = g * x.transpose();
    let sym = (&gxt + gxt.transpose()) * 0.5;
    Ok(g - sym * x)
}

/// QR retraction: orthonormal factor of `X + step·direction`, with the sign
/// convention that makes `step = 0` the identity.
pub fn retract(x: &DMatrix<f64>, direction: &DMatrix<f64>, step: f64) -> Result<DMatrix<f64>> {
    if step == 0.0 {
        return Ok(x.clone());
    }
    if x.shape() != direction.shape() {
        return Err(Error::dim(x.len(), direction.len(), "retraction shapes"));
    }
    let moved = x + direction * step;
    let qr = moved.transpose().qr();
    let mut q = qr.q();
    let r = qr.r();
    let scale = r.diagonal().iter().cloned().fold(0.0f64, |a, v| a.max(v.abs()));
    for j in 0..q.ncols() {
        let d = r[(j, j)];
        if d.abs() < 1e-13 * scale.max(1.0) {
            return Err(Error::RankDeficient { smallest: d.abs() });
        }
        if d < 0.0 {
            q.column_mut(j).scale_mut(-1.0);
        }
    }
    Ok(q.transpose())
}

/// Minimize `f` over matrices with orthonormal rows starting from `x0`.
/// Deterministic for identical inputs.
pub fn minimize<F>(f: F, x0: &DMatrix<f64>, opts: &OptimizerOptions) -> Result<(DMatrix<f64>, OptimTrace)>
where
    F: Fn(&DMatrix<f64>) -> Result<(f64, DMatrix<f64>)>,
{
    let mut x = x0.clone();
    let (mut value, grad) = f(&x)?;
    let mut tangent = project_tangent(&x, &grad)?;
    let mut grad_norm = tangent.norm();

    let mut trace = OptimTrace {
        iters: Vec::new(),
        termination: Termination::MaxIters,
    };
    let mut history = vec![value];
    let mut best = (x.clone(), value);
    let mut step = 1.0 / grad_norm.max(1.0);
    let mut prev: Option<(DMatrix<f64>, DMatrix<f64>)> = None; // (x, tangent)

    for iter in 0..opts.max_iters {
        let residual = ortho_residual(&x);
        trace.iters.push(IterRecord {
            value,
            grad_norm,
            step,
            ortho_residual: residual,
        });
        if grad_norm <= opts.grad_tol * (1.0 + value.abs()) {
            trace.termination = Termination::Converged;
            return Ok((best.0, trace));
        }

        // Barzilai–Borwein trial step from the previous accepted move
        if let Some((xp, tp)) = &prev {
            let s = &x - xp;
            let y = &tangent - tp;
            let ss = s.dot(&s);
            let sy = s.dot(&y);
            let yy = y.dot(&y);
            let bb = if iter % 2 == 0 {
                if sy.abs() > 0.0 { ss / sy } else { step }
            } else if yy > 0.0 {
                sy / yy
            } else {
                step
            };
            step = bb.abs().clamp(opts.step_min, opts.step_max);
        }

        let f_ref = history
            .iter()
            .rev()
            .take(opts.window)
            .cloned()
            .fold(f64::MIN, f64::max);
        let decrease_scale = grad_norm * grad_norm;

        let mut t = step;
        let mut accepted = None;
        for _ in 0..40 {
            let candidate = match retract(&x, &(-&tangent), t) {
                Ok(c) => c,
                Err(Error::RankDeficient { .. }) => {
                    t *= 0.5;
                    continue;
                }
                Err(e) => return Err(e),
            };
            match f(&candidate) {
                Ok((fv, fg)) if fv <= f_ref - opts.armijo * t * decrease_scale => {
                    accepted = Some((candidate, fv, fg, t));
                    break;
                }
                Ok(_) => {
                    t *= 0.5;
                }
                Err(Error::Singular { .. }) | Err(Error::RankDeficient { .. }) => {
                    // treat as a failed step
                    t *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }

        match accepted {
            Some((xn, fv, fg, t_used)) => {
                prev = Some((x.clone(), tangent.clone()));
                x = xn;
                value = fv;
                tangent = project_tangent(&x, &fg)?;
                grad_norm = tangent.norm();
                step = t_used;
                history.push(value);
                if value < best.1 {
                    best = (x.clone(), value);
                }
            }
            None => {
                trace.termination = Termination::LineSearchFailure;
                return Ok((best.0, trace));
            }
        }
    }
    trace.termination = Termination::MaxIters;
    Ok((best.0, trace))
}

fn ortho_residual(x: &DMatrix<f64>) -> f64 {
    let j = x.nrows();
    (x * x.transpose() - DMatrix::identity(j, j)).norm()
}

/// Tangent projection for a `ModeSet` and a raw-Φ Euclidean gradient,
/// returned in raw-Φ coordinates.
pub fn project_tangent_modes(modes: &ModeSet, grad_phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sw = modes.grid().weight().sqrt();
    let x = modes.weighted();
    // gradient transforms contravariantly: G_X = G_Φ/√w
    let gx = grad_phi / sw;
    Ok(project_tangent(&x, &gx)? / sw)
}

/// Retraction for a `ModeSet` with a raw-Φ tangent direction.
pub fn retract_modes(modes: &ModeSet, direction: &DMatrix<f64>, step: f64) -> Result<ModeSet> {
    let sw = modes.grid().weight().sqrt();
    let x = modes.weighted();
    let d = direction * sw;
    let xn = retract(&x, &d, step)?;
    ModeSet::from_weighted(xn, modes.grid(), modes.label())
}

/// Minimize a `ModeObjective` over mode sets, with optional random restarts.
pub fn minimize_modes(
    objective: &ModeObjective,
    init: &ModeSet,
    grid: &Grid,
    opts: &OptimizerOptions,
) -> Result<(ModeSet, OptimTrace)> {
    let sw = grid.weight().sqrt();
    let f = |x: &DMatrix<f64>| -> Result<(f64, DMatrix<f64>)> {
        let phi = x / sw;
        let (l, g_phi) = objective.eval(&phi)?;
        // chain rule back to weighted coordinates
        Ok((l, g_phi / sw))
    };

    let mut starts: Vec<(String, DMatrix<f64>)> = vec![("init".into(), init.weighted())];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for r in 0..opts.restarts {
        let ms = modes::random_modes(grid, init.num_modes(), &mut rng, "restart")?;
        starts.push((format!("restart-{r}"), ms.weighted()));
    }

    let mut best: Option<(f64, DMatrix<f64>, OptimTrace)> = None;
    for (_, x0) in starts {
        let (x, trace) = minimize(&f, &x0, opts)?;
        let l = trace
            .iters
            .last()
            .map(|r| r.value)
            .unwrap_or(f64::INFINITY);
        let l = f(&x).map(|(v, _)| v).unwrap_or(l);
        let better = match &best {
            None => true,
            Some((lb, _, _)) => l < *lb,
        };
        if better {
            best = Some((l, x, trace));
        }
    }
    let (_, x, trace) = best.expect("at least one start");
    let ms = ModeSet::from_weighted(x, grid, "optimized")?;
    Ok((ms, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_stiefel(j: usize, g: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let raw = DMatrix::from_fn(j, g, |_, _| rng.gen_range(-1.0..1.0));
        modes::orthonormalize_weighted(&raw).unwrap()
    }

    #[test]
    fn tangent_projection_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_stiefel(3, 8, &mut rng);

        // radial direction projects to ~0
        let t = project_tangent(&x, &x).unwrap();
        assert!(t.norm() < 1e-12);

        // random G: decomposition orthogonality ⟨T, G−T⟩ = 0
        let g = DMatrix::from_fn(3, 8, |_, _| rng.gen_range(-1.0..1.0));
        let t = project_tangent(&x, &g).unwrap();
        assert!(t.dot(&(&g - &t)).abs() < 1e-10);

        // idempotence: projecting a tangent returns it unchanged
        let t2 = project_tangent(&x, &t).unwrap();
        assert!((&t2 - &t).norm() < 1e-12);

        // tangency: sym(X·Tᵀ) = 0
        let xt = &x * t.transpose();
        assert!((&xt + xt.transpose()).norm() < 1e-10);
    }

    #[test]
    fn retraction_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_stiefel(2, 6, &mut rng);
        let g = DMatrix::from_fn(2, 6, |_, _| rng.gen_range(-1.0..1.0));
        let t = project_tangent(&x, &g).unwrap();

        // step 0 is the identity
        assert_eq!(retract(&x, &t, 0.0).unwrap(), x);

        // feasibility
        let r = retract(&x, &t, 0.7).unwrap();
        assert!(ortho_residual(&r) < 1e-10);

        // first-order consistency: ‖R(t) − (X + tT)‖ = O(t²)
        let err = |tt: f64| (retract(&x, &t, tt).unwrap() - (&x + &t * tt)).norm();
        let e3 = err(1e-3);
        let e4 = err(1e-4);
        let ratio = e3 / e4;
        assert!(
            (50.0..200.0).contains(&ratio),
            "O(t²) ratio test failed: {ratio}"
        );
    }

    #[test]
    fn rayleigh_quotient_oracle() {
        // minimize tr(X·A·Xᵀ) over 2 orthonormal rows in 6 dims → sum of the
        // two smallest eigenvalues, subspace matching the eigenvectors
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
        let a = &b + b.transpose();
        let eig = a.clone().symmetric_eigen();
        let mut vals: Vec<(f64, usize)> =
            eig.eigenvalues.iter().cloned().zip(0..6).collect();
        vals.sort_by(|p, q| p.0.total_cmp(&q.0));
        let target = vals[0].0 + vals[1].0;

        let f = |x: &DMatrix<f64>| -> Result<(f64, DMatrix<f64>)> {
            Ok(((x * &a * x.transpose()).trace(), 2.0 * x * &a))
        };
        let x0 = random_stiefel(2, 6, &mut rng);
        let opts = OptimizerOptions {
            max_iters: 2000,
            grad_tol: 1e-10,
            ..OptimizerOptions::default()
        };
        let (x, trace) = minimize(f, &x0, &opts).unwrap();
        let achieved = (&x * &a * x.transpose()).trace();
        assert_relative_eq!(achieved, target, epsilon = 1e-8);
        assert_eq!(trace.termination, Termination::Converged);

        // subspace angle to the true eigenvectors < 1e−6
        let v0 = eig.eigenvectors.column(vals[0].1);
        let v1 = eig.eigenvectors.column(vals[1].1);
        for v in [v0, v1] {
            let proj = &x * v;
            assert_relative_eq!(proj.norm(), 1.0, epsilon = 1e-6);
        }

        // feasibility at every iterate
        for rec in &trace.iters {
            assert!(rec.ortho_residual < 1e-8);
        }
    }

    #[test]
    fn stationary_start_terminates_immediately() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
        let a = &b + b.transpose();
        let eig = a.clone().symmetric_eigen();
        let mut vals: Vec<(f64, usize)> =
            eig.eigenvalues.iter().cloned().zip(0..6).collect();
        vals.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut x0 = DMatrix::zeros(2, 6);
        x0.row_mut(0)
            .copy_from(&eig.eigenvectors.column(vals[0].1).transpose());
        x0.row_mut(1)
            .copy_from(&eig.eigenvectors.column(vals[1].1).transpose());

        let f = |x: &DMatrix<f64>| -> Result<(f64, DMatrix<f64>)> {
            Ok(((x * &a * x.transpose()).trace(), 2.0 * x * &a))
        };
        let opts = OptimizerOptions::default();
        let (x, trace) = minimize(f, &x0, &opts).unwrap();
        assert!(trace.iters.len() <= 2);
        assert_eq!(trace.termination, Termination::Converged);
        // unchanged up to rotation within the eigenspace: objective identical
        let l0 = (&x0 * &a * x0.transpose()).trace();
        let l1 = (&x * &a * x.transpose()).trace();
        assert_relative_eq!(l0, l1, epsilon = 1e-12);
    }

    #[test]
    fn deterministic_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let b = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
        let a = &b + b.transpose();
        let f = |x: &DMatrix<f64>| -> Result<(f64, DMatrix<f64>)> {
            Ok(((x * &a * x.transpose()).trace(), 2.0 * x * &a))
        };
        let x0 = random_stiefel(2, 5, &mut rng);
        let opts = OptimizerOptions::default();
        let (x1, t1) = minimize(&f, &x0, &opts).unwrap();
        let (x2, t2) = minimize(&f, &x0, &opts).unwrap();
        assert_eq!(x1, x2);
        assert_eq!(t1.iters.len(), t2.iters.len());
        for (a, b) in t1.iters.iter().zip(&t2.iters) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn nonmonotone_descent_condition_recorded() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let b = DMatrix::from_fn(8, 8, |_, _| rng.gen_range(-1.0..1.0));
        let a = &b + b.transpose();
        let f = |x: &DMatrix<f64>| -> Result<(f64, DMatrix<f64>)> {
            Ok(((x * &a * x.transpose()).trace(), 2.0 * x * &a))
        };
        let x0 = random_stiefel(3, 8, &mut rng);
        let opts = OptimizerOptions::default();
        let (_, trace) = minimize(&f, &x0, &opts).unwrap();
        // every accepted value satisfies the window-max reference condition
        let values: Vec<f64> = trace.iters.iter().map(|r| r.value).collect();
        for i in 1..values.len() {
            let lo = i.saturating_sub(opts.window);
            let f_ref = values[lo..i].iter().cloned().fold(f64::MIN, f64::max);
            assert!(values[i] <= f_ref + 1e-12);
        }
    }
}
