//! Non-negative least-squares source reconstruction from one or more
//! measurement records taken in different mode bases.
//!
//! Records measured with different mode sets stack into a single design
//! system with rows `N_m·M^(m)[j,·]` against the raw counts, so all
//! previous measurement data enters each estimate. The solver is a
//! Lawson–Hanson active-set iteration; optimality is characterized by the
//! KKT conditions on the normal-equations gradient.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sim::MeasurementRecord;

/// Stacked design matrix and observation vector: `E[y] = A·c`.
#[derive(Debug, Clone)]
pub struct DesignSystem {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Optional per-row weights applied before solving; `None` keeps the
    /// plain unweighted fit (the default).
    pub row_scale: Option<DVector<f64>>,
}

impl DesignSystem {
    pub fn new(a: DMatrix<f64>, y: DVector<f64>) -> DesignSystem {
        DesignSystem { a, y, row_scale: None }
    }

    /// Poisson-variance row weighting `1/√max(y_i, 1)`, equalizing the noise
    /// scale across rows from measurements with very different count levels.
    pub fn poisson_weighted(mut self) -> DesignSystem {
        let scale = DVector::from_fn(self.y.len(), |i, _| 1.0 / self.y[i].max(1.0).sqrt());
        self.row_scale = Some(scale);
        self
    }

    /// The system with any row weights folded into `a` and `y`.
    fn scaled(&self) -> (DMatrix<f64>, DVector<f64>) {
        match &self.row_scale {
            None => (self.a.clone(), self.y.clone()),
            Some(s) => {
                let mut a = self.a.clone();
                let mut y = self.y.clone();
                for i in 0..y.len() {
                    y[i] *= s[i];
                    a.row_mut(i).scale_mut(s[i]);
                }
                (a, y)
            }
        }
    }
}

/// Stack records (in given order) against their response matrices.
pub fn stack_design(records: &[MeasurementRecord], responses: &[DMatrix<f64>]) -> Result<DesignSystem> {
    if records.is_empty() {
        return Err(Error::invalid("no measurement records to stack"));
    }
    if records.len() != responses.len() {
        return Err(Error::dim(records.len(), responses.len(), "records vs responses"));
    }
    let k = responses[0].ncols();
    let mut rows = 0;
    for (rec, m) in records.iter().zip(responses) {
        if m.ncols() != k {
            return Err(Error::dim(k, m.ncols(), "response matrix columns"));
        }
        if rec.counts.len() != m.nrows() {
            return Err(Error::dim(m.nrows(), rec.counts.len(), "record counts"));
        }
        rows += m.nrows();
    }
    let mut a = DMatrix::zeros(rows, k);
    let mut y = DVector::zeros(rows);
    let mut r0 = 0;
    for (rec, m) in records.iter().zip(responses) {
        let j = m.nrows();
        a.rows_mut(r0, j).copy_from(&(m * rec.budget));
        for (i, &n) in rec.counts.iter().enumerate() {
            y[r0 + i] = n as f64;
        }
        r0 += j;
    }
    Ok(DesignSystem { a, y, row_scale: None })
}

#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub c: DVector<f64>,
    /// False when the iteration limit was hit; `c` is then best feasible.
    pub converged: bool,
    pub iterations: usize,
}

/// argmin_{c ≥ 0} ‖A·c − y‖² by Lawson–Hanson active-set iteration.
pub fn nnls(system: &DesignSystem) -> Result<NnlsSolution> {
    let (a, y) = system.scaled();
    let (a, y) = (&a, &y);
    let n = a.ncols();
    if n == 0 {
        return Err(Error::invalid("empty design matrix"));
    }
    if a.iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("all-zero design matrix"));
    }
    if y.len() != a.nrows() {
        return Err(Error::dim(a.nrows(), y.len(), "observation vector"));
    }

    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let max_outer = 3 * n.max(10);
    let mut iterations = 0usize;

    // tolerance on the dual w = Aᵀ(y − Ax), relative to the problem scale
    let scale = (a.transpose() * y).abs().max().max(1e-300);
    let tol = 1e-10 * scale;

    for _ in 0..max_outer {
        iterations += 1;
        let w = a.transpose() * (y - a * &x);
        // most positive dual among active (bound) coordinates
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if !passive[i] && w[i] > tol {
                if best.map_or(true, |(_, bw)| w[i] > bw) {
                    best = Some((i, w[i]));
                }
            }
        }
        let Some((enter, _)) = best else {
            return Ok(NnlsSolution {
                c: x,
                converged: true,
                iterations,
            });
        };
        passive[enter] = true;

        // inner loop: solve the unconstrained LS on the passive set and walk
        // back along the segment when coordinates go negative
        loop {
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let z = solve_ls_subset(a, y, &idx);
            if z.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (pos, &i) in idx.iter().enumerate() {
                    x[i] = z[pos];
                }
                break;
            }
            // step to the first boundary crossing
            let mut alpha = f64::MAX;
            for (pos, &i) in idx.iter().enumerate() {
                if z[pos] <= 0.0 {
                    let t = x[i] / (x[i] - z[pos]);
                    alpha = alpha.min(t);
                }
            }
            for (pos, &i) in idx.iter().enumerate() {
                x[i] += alpha * (z[pos] - x[i]);
            }
            let xmax = x.abs().max();
            for &i in &idx {
                if x[i] <= 1e-12 * xmax.max(1e-300) {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if idx.iter().all(|&i| !passive[i]) {
                break;
            }
        }
    }
    Ok(NnlsSolution {
        c: x.map(|v| v.max(0.0)),
        converged: false,
        iterations,
    })
}

fn solve_ls_subset(a: &DMatrix<f64>, y: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    let mut sub = DMatrix::zeros(a.nrows(), idx.len());
    for (pos, &i) in idx.iter().enumerate() {
        sub.set_column(pos, &a.column(i));
    }
    let svd = sub.svd(true, true);
    svd.solve(y, 1e-12 * svd.singular_values.max()).expect("svd solve")
}
