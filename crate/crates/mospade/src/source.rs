//! Orthogonal source decomposition bases and scenario generators.
//!
//! A source distribution is expanded as `F(R) = Σ_k c_k f_k(R)` over mutually
//! orthogonal source modes: Dirac deltas at known point-source locations,
//! non-overlapping 1D rectangles of width `a`, or non-overlapping 2D square
//! bins. Coefficient vectors are normalized to unit total flux so the
//! per-photon Fisher information is well defined and the photon budget `N`
//! enters only as a multiplier.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::Point;

#[derive(Debug, Clone, PartialEq)]
pub enum SourceBasis {
    /// Dirac deltas at distinct locations; mode integral 1.
    DeltaArray { locations: Vec<Point> },
    /// Contiguous non-overlapping rectangles of width `width` centered at `centers`.
    Rect1d { centers: Vec<f64>, width: f64 },
    /// Non-overlapping square bins of side `width` centered at `centers`.
    Square2d { centers: Vec<Point>, width: f64 },
}

impl SourceBasis {
    /// Number of source modes K.
    pub fn len(&self) -> usize {
        match self {
            SourceBasis::DeltaArray { locations } => locations.len(),
            SourceBasis::Rect1d { centers, .. } => centers.len(),
            SourceBasis::Square2d { centers, .. } => centers.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// ∫ f_k(R) dR, identical for every mode of a basis.
    pub fn mode_integral(&self) -> f64 {
        match self {
            SourceBasis::DeltaArray { .. } => 1.0,
            SourceBasis::Rect1d { width, .. } => *width,
            SourceBasis::Square2d { width, .. } => width * width,
        }
    }

    /// Half-extent of the union of supports (largest |coordinate| reached).
    pub fn support_extent(&self) -> f64 {
        let half = match self {
            SourceBasis::Rect1d { width, .. } | SourceBasis::Square2d { width, .. } => width / 2.0,
            SourceBasis::DeltaArray { .. } => 0.0,
        };
        let mut ext: f64 = 0.0;
        match self {
            SourceBasis::DeltaArray { locations } => {
                for p in locations {
                    ext = ext.max(p[0].abs()).max(p[1].abs());
                }
            }
            SourceBasis::Rect1d { centers, .. } => {
                for &c in centers {
                    ext = ext.max(c.abs() + half);
                }
            }
            SourceBasis::Square2d { centers, .. } => {
                for p in centers {
                    ext = ext.max(p[0].abs() + half).max(p[1].abs() + half);
                }
            }
        }
        ext
    }

    /// Evaluate f_k at R. Delta modes return 0 away from their location and
    /// are never evaluated pointwise in quadratures (they get a single exact
    /// quadrature node instead).
    pub fn eval_mode(&self, k: usize, r: Point) -> f64 {
        match self {
            SourceBasis::DeltaArray { locations } => {
                if locations[k] == r {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            SourceBasis::Rect1d { centers, width } => {
                if (r[0] - centers[k]).abs() <= width / 2.0 {
                    1.0
                } else {
                    0.0
                }
            }
            SourceBasis::Square2d { centers, width } => {
                let c = centers[k];
                if (r[0] - c[0]).abs() <= width / 2.0 && (r[1] - c[1]).abs() <= width / 2.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Quadrature nodes over every mode support, flattened in mode order.
    ///
    /// Deltas get a single node of weight 1 at the exact location (no
    /// smearing). Rectangles and squares get midpoint sub-sampling with an
    /// even node count per axis so that splitting a mode in half reproduces
    /// the same nodes.
    pub fn quadrature(&self, target_spacing: f64) -> SourceQuadrature {
        let mut points = Vec::new();
        let mut mode_of = Vec::new();
        let mut weights = Vec::new();
        match self {
            SourceBasis::DeltaArray { locations } => {
                for (k, &p) in locations.iter().enumerate() {
                    points.push(p);
                    mode_of.push(k);
                    weights.push(1.0);
                }
            }
            SourceBasis::Rect1d { centers, width } => {
                let n = subdivisions(*width, target_spacing);
                let hw = width / n as f64;
                for (k, &c) in centers.iter().enumerate() {
                    for i in 0..n {
                        points.push([c - width / 2.0 + (i as f64 + 0.5) * hw, 0.0]);
                        mode_of.push(k);
                        weights.push(hw);
                    }
                }
            }
            SourceBasis::Square2d { centers, width } => {
                let n = subdivisions(*width, target_spacing);
                let hw = width / n as f64;
                for (k, &c) in centers.iter().enumerate() {
                    for iy in 0..n {
                        for ix in 0..n {
                            points.push([
                                c[0] - width / 2.0 + (ix as f64 + 0.5) * hw,
                                c[1] - width / 2.0 + (iy as f64 + 0.5) * hw,
                            ]);
                            mode_of.push(k);
                            weights.push(hw * hw);
                        }
                    }
                }
            }
        }
        SourceQuadrature {
            points,
            mode_of,
            weights,
            num_modes: self.len(),
        }
    }
}

fn subdivisions(width: f64, target_spacing: f64) -> usize {
    let n = (width / target_spacing).ceil() as usize;
    // round up to even so half-width splits share nodes
    let n = n.max(2);
    if n % 2 == 0 {
        n
    } else {
        n + 1
    }
}

/// Flattened quadrature over the supports of a source basis. Each node
/// belongs to exactly one mode (supports are disjoint) and carries the
/// product of quadrature weight and f_k value at the node.
#[derive(Debug, Clone)]
pub struct SourceQuadrature {
    pub points: Vec<Point>,
    pub mode_of: Vec<usize>,
    pub weights: Vec<f64>,
    pub num_modes: usize,
}

impl SourceQuadrature {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A source basis plus its unit-flux coefficient vector — the estimand.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceModel {
    pub basis: SourceBasis,
    pub c: DVector<f64>,
}

impl SourceModel {
    /// Normalize `c` to unit total flux: Σ_k c_k ∫f_k = 1.
    pub fn new(basis: SourceBasis, c: DVector<f64>) -> Result<SourceModel> {
        if c.len() != basis.len() {
            return Err(Error::dim(basis.len(), c.len(), "coefficient vector"));
        }
        if c.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::invalid("coefficients must be finite and ≥ 0"));
        }
        let flux: f64 = c.sum() * basis.mode_integral();
        if flux <= 0.0 {
            return Err(Error::invalid("all-zero coefficient vector"));
        }
        Ok(SourceModel {
            basis,
            c: c / flux,
        })
    }

    pub fn num_modes(&self) -> usize {
        self.basis.len()
    }

    /// Σ_k c_k f_k(R). Delta modes contribute only at their exact location.
    pub fn eval(&self, r: Point) -> f64 {
        match &self.basis {
            SourceBasis::DeltaArray { .. } => {
                let mut v = 0.0;
                for k in 0..self.c.len() {
                    let f = self.basis.eval_mode(k, r);
                    if f.is_infinite() {
                        return f64::INFINITY;
                    }
                    v += self.c[k] * f;
                }
                v
            }
            _ => (0..self.c.len())
                .map(|k| self.c[k] * self.basis.eval_mode(k, r))
                .sum(),
        }
    }
}

/// Equally spaced point sources centered on the origin (Fig.-2 style).
pub fn point_array(n: usize, dx: f64, amplitudes: &[f64]) -> Result<SourceModel> {
    if n == 0 {
        return Err(Error::invalid("point count must be ≥ 1"));
    }
    if dx <= 0.0 {
        return Err(Error::invalid("separation must be > 0"));
    }
    if amplitudes.len() != n {
        return Err(Error::dim(n, amplitudes.len(), "amplitudes"));
    }
    let locations: Vec<Point> = (0..n)
        .map(|i| [(i as f64 - (n as f64 - 1.0) / 2.0) * dx, 0.0])
        .collect();
    SourceModel::new(
        SourceBasis::DeltaArray { locations },
        DVector::from_column_slice(amplitudes),
    )
}

/// Contiguous rectangles of width `a` tiling `[-extent, +extent]`, centered;
/// any trailing remainder is dropped symmetrically.
pub fn rect_basis(extent: f64, a: f64) -> Result<SourceBasis> {
    if a <= 0.0 || extent <= 0.0 {
        return Err(Error::invalid("extent and width must be > 0"));
    }
    if a > 2.0 * extent {
        return Err(Error::invalid("rectangle width exceeds the source region"));
    }
    let k = ((2.0 * extent / a) + 1e-9).floor() as usize;
    let centers: Vec<f64> = (0..k)
        .map(|i| (i as f64 - (k as f64 - 1.0) / 2.0) * a)
        .collect();
    Ok(SourceBasis::Rect1d { centers, width: a })
}

/// n×n square bins of side `width` tiling a centered square region.
pub fn square_basis(n_per_axis: usize, width: f64) -> Result<SourceBasis> {
    if n_per_axis == 0 || width <= 0.0 {
        return Err(Error::invalid("bin count and width must be positive"));
    }
    let mut centers = Vec::with_capacity(n_per_axis * n_per_axis);
    for iy in 0..n_per_axis {
        for ix in 0..n_per_axis {
            centers.push([
                (ix as f64 - (n_per_axis as f64 - 1.0) / 2.0) * width,
                (iy as f64 - (n_per_axis as f64 - 1.0) / 2.0) * width,
            ]);
        }
    }
    Ok(SourceBasis::Square2d { centers, width })
}

/// Project a continuous 1D brightness profile onto a rect basis: each
/// coefficient is the mean of the profile over its rectangle.
pub fn project_profile_1d(basis: &SourceBasis, profile: impl Fn(f64) -> f64) -> Result<SourceModel> {
    let (centers, width) = match basis {
        SourceBasis::Rect1d { centers, width } => (centers, *width),
        _ => return Err(Error::invalid("project_profile_1d requires a rect basis")),
    };
    let sub = 16usize;
    let h = width / sub as f64;
    let c = DVector::from_iterator(
        centers.len(),
        centers.iter().map(|&ck| {
            (0..sub)
                .map(|i| profile(ck - width / 2.0 + (i as f64 + 0.5) * h))
                .sum::<f64>()
                / sub as f64
        }),
    );
    SourceModel::new(basis.clone(), c)
}

/// Uniform top-hat of width 16σ (Fig.-3a style profile).
pub fn uniform_profile(x: f64) -> f64 {
    if x.abs() <= 8.0 {
        1.0
    } else {
        0.0
    }
}

/// Pair of raised-cosine humps at ±4σ with half-width 4σ (Fig.-3b style).
pub fn hump_pair_profile(x: f64) -> f64 {
    let hump = |center: f64, w: f64, amp: f64| {
        let u = (x - center) / w;
        if u.abs() < 1.0 {
            amp * 0.5 * (1.0 + (std::f64::consts::PI * u).cos())
        } else {
            0.0
        }
    };
    hump(-4.0, 4.0, 1.0) + hump(4.0, 4.0, 0.8)
}

/// Asymmetric double Gaussian (Fig.-3c style).
pub fn double_gaussian_profile(x: f64) -> f64 {
    let g = |center: f64, s: f64, amp: f64| amp * (-(x - center).powi(2) / (2.0 * s * s)).exp();
    g(-3.0, 2.0, 1.0) + g(3.0, 3.0, 0.6)
}

/// Rescale bin values around their mean so the Michelson contrast
/// (max−min)/(max+min) exactly equals `target`.
fn set_michelson_contrast(values: &mut DVector<f64>, target: f64) -> Result<()> {
    let max = values.max();
    let min = values.min();
    let mean = values.mean();
    if target <= 0.0 || target >= 1.0 {
        return Err(Error::invalid("contrast must lie in (0, 1)"));
    }
    let spread = (max - min) / 2.0;
    if spread <= 0.0 {
        return Err(Error::invalid(
            "flat pattern cannot be scaled to a nonzero contrast",
        ));
    }
    // values' = mean + s(values − mean) keeps the mean; the contrast of the
    // rescaled values is s·spread / (mean + s(mid − mean)), solved for s
    let mid = (max + min) / 2.0;
    let s = target * mean / (spread - target * (mid - mean));
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::invalid("requested contrast not reachable"));
    }
    for v in values.iter_mut() {
        *v = mean + s * (*v - mean);
    }
    Ok(())
}

/// Chirped 2D source: `1 + cos(2π(f0 + βx)x)` along x, constant along y,
/// rasterized onto square bins atop a uniform background, rescaled to the
/// requested Michelson contrast.
pub fn chirp_2d(
    bins_per_axis: usize,
    bin_width: f64,
    contrast: f64,
    f0: f64,
    beta: f64,
) -> Result<SourceModel> {
    let basis = square_basis(bins_per_axis, bin_width)?;
    let centers = match &basis {
        SourceBasis::Square2d { centers, .. } => centers.clone(),
        _ => unreachable!(),
    };
    let raw = |x: f64| 1.0 + (2.0 * std::f64::consts::PI * (f0 + beta * x) * x).cos();
    let mut values = bin_average_2d(&centers, bin_width, |p| raw(p[0]));
    if contrast == 0.0 {
        values.fill(1.0);
    } else {
        set_michelson_contrast(&mut values, contrast)?;
    }
    SourceModel::new(basis, values)
}

/// Siemens star: binary spoke pattern rasterized onto square bins atop a
/// uniform background, rescaled to the requested Michelson contrast.
pub fn siemens_2d(
    bins_per_axis: usize,
    bin_width: f64,
    contrast: f64,
    spokes: usize,
) -> Result<SourceModel> {
    if spokes == 0 {
        return Err(Error::invalid("spoke count must be ≥ 1"));
    }
    let basis = square_basis(bins_per_axis, bin_width)?;
    let centers = match &basis {
        SourceBasis::Square2d { centers, .. } => centers.clone(),
        _ => unreachable!(),
    };
    let raw = |p: Point| {
        let theta = p[1].atan2(p[0]);
        if (spokes as f64 * theta).cos() > 0.0 {
            2.0
        } else {
            1.0
        }
    };
    let mut values = bin_average_2d(&centers, bin_width, raw);
    if contrast == 0.0 {
        values.fill(1.0);
    } else {
        set_michelson_contrast(&mut values, contrast)?;
    }
    SourceModel::new(basis, values)
}

fn bin_average_2d(
    centers: &[Point],
    width: f64,
    f: impl Fn(Point) -> f64,
) -> DVector<f64> {
    let sub = 5usize;
    let h = width / sub as f64;
    DVector::from_iterator(
        centers.len(),
        centers.iter().map(|&c| {
            let mut acc = 0.0;
            for iy in 0..sub {
                for ix in 0..sub {
                    acc += f([
                        c[0] - width / 2.0 + (ix as f64 + 0.5) * h,
                        c[1] - width / 2.0 + (iy as f64 + 0.5) * h,
                    ]);
                }
            }
            acc / (sub * sub) as f64
        }),
    )
}

/// Named ground-truth scenarios used by the experiment pipelines.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    FivePoints { dx: f64 },
    Uniform1d { extent: f64, a: f64 },
    Smooth1dA { extent: f64, a: f64 },
    Smooth1dB { extent: f64, a: f64 },
    Chirp2d { bins: usize, bin_width: f64, contrast: f64 },
    Siemens2d { bins: usize, bin_width: f64, contrast: f64, spokes: usize },
}

impl Scenario {
    pub fn build(&self) -> Result<SourceModel> {
        match *self {
            Scenario::FivePoints { dx } => point_array(5, dx, &[1.0; 5]),
            Scenario::Uniform1d { extent, a } => {
                project_profile_1d(&rect_basis(extent, a)?, uniform_profile)
            }
            Scenario::Smooth1dA { extent, a } => {
                project_profile_1d(&rect_basis(extent, a)?, hump_pair_profile)
            }
            Scenario::Smooth1dB { extent, a } => {
                project_profile_1d(&rect_basis(extent, a)?, double_gaussian_profile)
            }
            Scenario::Chirp2d {
                bins,
                bin_width,
                contrast,
            } => chirp_2d(bins, bin_width, contrast, 0.05, 0.02),
            Scenario::Siemens2d {
                bins,
                bin_width,
                contrast,
                spokes,
            } => siemens_2d(bins, bin_width, contrast, spokes),
        }
    }
}
