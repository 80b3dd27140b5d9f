//! Seeded stochastic photon-count generation.
//!
//! Counts are drawn as independent Poisson variables with means `N·P_j`
//! (not multinomial conditioned on the total), matching the per-photon
//! Fisher convention. The PRNG is ChaCha8 and the Poisson transform is
//! fixed and documented: multiplicative inversion for mean < 10 and
//! Hörmann's PTRS transformed rejection for mean ≥ 10, so identical
//! `(P, N, seed)` inputs give identical counts across runs and platforms.
//! Per-trial seeds derive from the master seed via SplitMix64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::modes::ModeSet;

#[derive(Debug, Clone)]
pub struct MeasurementRecord {
    /// Provenance tag of the mode set used.
    pub mode_label: String,
    pub counts: Vec<u64>,
    /// Mean photon number for this phase.
    pub budget: f64,
    pub seed: u64,
}

impl MeasurementRecord {
    pub fn new(modes: &ModeSet, counts: Vec<u64>, budget: f64, seed: u64) -> MeasurementRecord {
        MeasurementRecord {
            mode_label: modes.label().to_string(),
            counts,
            budget,
            seed,
        }
    }
}

/// Draw `n_j ~ Poisson(N·P_j)` independently; deterministic for a seed.
pub fn sample_counts(p: &[f64], n: f64, seed: u64) -> Result<Vec<u64>> {
    if p.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::invalid("probabilities must be finite and ≥ 0"));
    }
    if !(n >= 0.0) || !n.is_finite() {
        return Err(Error::invalid("photon budget must be finite and ≥ 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(p.iter().map(|&pj| poisson(&mut rng, n * pj)).collect())
}

/// Poisson sampler: inversion below mean 10, PTRS above.
pub fn poisson(rng: &mut impl Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean < 10.0 {
        poisson_inversion(rng, mean)
    } else {
        poisson_ptrs(rng, mean)
    }
}

fn poisson_inversion(rng: &mut impl Rng, mean: f64) -> u64 {
    let l = (-mean).exp();
    let mut k = 0u64;
    let mut p = 1.0;
    loop {
        p *= rng.gen::<f64>();
        if p <= l {
            return k;
        }
        k += 1;
    }
}

/// Hörmann's PTRS transformed-rejection sampler (mean ≥ 10).
fn poisson_ptrs(rng: &mut impl Rng, mean: f64) -> u64 {
    let log_mean = mean.ln();
    let b = 0.931 + 2.53 * mean.sqrt();
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.gen::<f64>() - 0.5;
        let v = rng.gen::<f64>();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if (v * inv_alpha / (a / (us * us) + b)).ln() <= k * log_mean - mean - ln_factorial(k) {
            return k as u64;
        }
    }
}

fn ln_factorial(k: f64) -> f64 {
    // Stirling series is ample for k ≥ 10 (the PTRS regime); fall back to a
    // direct product below that
    if k < 10.0 {
        let mut acc = 0.0f64;
        let mut i = 2.0;
        while i <= k {
            acc += i.ln();
            i += 1.0;
        }
        return acc;
    }
    let x = k + 1.0;
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
        - 1.0 / (360.0 * x * x * x)
}

/// Per-trial seed derivation: SplitMix64 over master ⊕ index.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
