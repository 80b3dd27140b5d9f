//! CSV emission with provenance headers, so every artifact records the
//! config hash, master seed, and artifact version that produced it.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fisher::FisherReport;
use crate::grid::Grid;
use crate::modes::ModeSet;
use crate::quantum::QfiReport;
use crate::sim::MeasurementRecord;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy)]
pub struct Provenance {
    pub config_hash: u64,
    pub seed: u64,
}

impl Provenance {
    pub fn header(&self) -> String {
        format!(
            "# config_hash={:016x} seed={} version={}\n",
            self.config_hash, self.seed, ARTIFACT_VERSION
        )
    }
}

pub fn write_csv(path: &Path, prov: &Provenance, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut out = prov.header();
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// One row per coefficient: index, crb_diag; crb_mean and condition ride in
/// an extra comment line.
pub fn fisher_csv(report: &FisherReport, prov: &Provenance) -> String {
    let mut s = prov.header();
    let _ = writeln!(s, "# crb_mean={:.12e} condition={:.6e}", report.crb_mean, report.condition);
    s.push_str("index,crb_diag\n");
    for (k, v) in report.crb_diag.iter().enumerate() {
        let _ = writeln!(s, "{k},{v:.12e}");
    }
    s
}

pub fn qfi_csv(report: &QfiReport, prov: &Provenance) -> String {
    let mut s = prov.header();
    let _ = writeln!(s, "# qcrb_mean={:.12e} weak_comm_residual={:.6e}", report.qcrb_mean, report.weak_comm_residual);
    s.push_str("index,qcrb_diag\n");
    for (k, v) in report.qcrb_diag.iter().enumerate() {
        let _ = writeln!(s, "{k},{v:.12e}");
    }
    s
}

/// First column the grid coordinate(s), one column per mode row.
pub fn modes_csv(modes: &ModeSet, prov: &Provenance) -> String {
    let mut s = prov.header();
    let _ = writeln!(s, "# label={}", modes.label());
    let two_d = modes.grid().points_per_axis() * modes.grid().points_per_axis() == modes.grid().len();
    let coord_cols = if modes.grid().len() == modes.grid().points_per_axis() { 1 } else { 2 };
    let _ = two_d;
    if coord_cols == 1 {
        s.push_str("x");
    } else {
        s.push_str("x,y");
    }
    for j in 0..modes.num_modes() {
        let _ = write!(s, ",mode_{j}");
    }
    s.push('\n');
    let m = modes.matrix();
    for (g, pt) in modes.grid().points().iter().enumerate() {
        if coord_cols == 1 {
            let _ = write!(s, "{:.9e}", pt[0]);
        } else {
            let _ = write!(s, "{:.9e},{:.9e}", pt[0], pt[1]);
        }
        for j in 0..modes.num_modes() {
            let _ = write!(s, ",{:.9e}", m[(j, g)]);
        }
        s.push('\n');
    }
    s
}

pub fn counts_csv(records: &[MeasurementRecord], prov: &Provenance) -> String {
    let mut s = prov.header();
    s.push_str("phase,mode_label,budget,mode_index,count\n");
    for (m, rec) in records.iter().enumerate() {
        for (j, &c) in rec.counts.iter().enumerate() {
            let _ = writeln!(s, "{m},{},{:.6e},{j},{c}", rec.mode_label, rec.budget);
        }
    }
    s
}

pub fn estimate_csv(c: &[f64], prov: &Provenance) -> String {
    let mut s = prov.header();
    s.push_str("index,c_hat\n");
    for (k, v) in c.iter().enumerate() {
        let _ = writeln!(s, "{k},{v:.12e}");
    }
    s
}

/// Ground-truth export: coordinate(s), value on the source grid.
pub fn profile_csv(coords: &[(f64, f64)], values: &[f64], prov: &Provenance) -> String {
    let mut s = prov.header();
    s.push_str("x,y,value\n");
    for ((x, y), v) in coords.iter().zip(values) {
        let _ = writeln!(s, "{x:.9e},{y:.9e},{v:.12e}");
    }
    s
}

/// Sampled image intensities on the grid (used for reconstruction maps).
pub fn image_csv(grid: &Grid, values: &DMatrix<f64>, prov: &Provenance) -> String {
    let mut s = prov.header();
    s.push_str("x,y,value\n");
    for (g, pt) in grid.points().iter().enumerate() {
        let _ = writeln!(s, "{:.9e},{:.9e},{:.12e}", pt[0], pt[1], values[(g, 0)]);
    }
    s
}
