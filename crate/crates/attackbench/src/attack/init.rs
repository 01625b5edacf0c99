//! Perturbation initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::{lp_norm, Norm};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitKind {
    /// Start at the clean sample.
    Zero,
    /// Uniform draw from the p-ball of the given radius, intersected with
    /// the box.
    Random { radius: f64 },
    /// Start from a supplied point (expected to be an in-box sample of
    /// another class, e.g. a target-class exemplar).
    Adv {
        #[serde(default)]
        start: Option<Vec<f64>>,
    },
}

/// Produces the initial perturbation for the sample `x`. The result always
/// keeps `x + delta` inside the unit box.
pub fn initialize(kind: &InitKind, x: &[f64], norm: Norm, seed: u64) -> Result<Vec<f64>> {
    match kind {
        InitKind::Zero => Ok(vec![0.0; x.len()]),
        InitKind::Random { radius } => {
            if *radius < 0.0 || !radius.is_finite() {
                return Err(Error::Config(format!(
                    "random init radius must be finite and >= 0, got {radius}"
                )));
            }
            if *radius == 0.0 {
                return Ok(vec![0.0; x.len()]);
            }
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let delta = sample_in_ball(&mut rng, x.len(), norm, *radius);
            Ok(clip_to_box(x, &delta))
        }
        InitKind::Adv { start } => {
            let start = start.as_ref().ok_or_else(|| {
                Error::Init("adv init requires a starting point and none was supplied".into())
            })?;
            if start.len() != x.len() {
                return Err(Error::Init(format!(
                    "adv start has {} coordinates, sample has {}",
                    start.len(),
                    x.len()
                )));
            }
            if start.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Init("adv start leaves the unit box".into()));
            }
            Ok(start.iter().zip(x).map(|(s, xi)| s - xi).collect())
        }
    }
}

fn clip_to_box(x: &[f64], delta: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(delta)
        .map(|(xi, di)| (xi + di).clamp(0.0, 1.0) - xi)
        .collect()
}

fn sample_in_ball(rng: &mut ChaCha20Rng, dim: usize, norm: Norm, radius: f64) -> Vec<f64> {
    match norm {
        Norm::LInf => (0..dim).map(|_| rng.gen_range(-radius..=radius)).collect(),
        Norm::L2 => {
            // Gaussian direction, radius scaled by u^(1/d) for uniformity.
            let dir: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
            let n = lp_norm(&dir, Norm::L2);
            if n == 0.0 {
                return vec![0.0; dim];
            }
            let r = radius * rng.gen_range(0.0..1.0f64).powf(1.0 / dim as f64);
            dir.into_iter().map(|v| v * r / n).collect()
        }
        Norm::L1 => {
            // Exponential magnitudes with random signs give a uniform
            // direction on the cross-polytope surface.
            let raw: Vec<f64> = (0..dim)
                .map(|_| {
                    let e: f64 = -rng.gen_range(f64::MIN_POSITIVE..1.0f64).ln();
                    if rng.gen::<bool>() {
                        e
                    } else {
                        -e
                    }
                })
                .collect();
            let n = lp_norm(&raw, Norm::L1);
            if n == 0.0 {
                return vec![0.0; dim];
            }
            let r = radius * rng.gen_range(0.0..1.0f64).powf(1.0 / dim as f64);
            raw.into_iter().map(|v| v * r / n).collect()
        }
        Norm::L0 => {
            // Flip up to floor(radius) random coordinates to random values.
            let k = (radius.floor() as usize).min(dim);
            let mut idx: Vec<usize> = (0..dim).collect();
            for i in 0..k {
                let j = rng.gen_range(i..dim);
                idx.swap(i, j);
            }
            let mut delta = vec![0.0; dim];
            for &i in idx.iter().take(k) {
                delta[i] = rng.gen_range(-1.0..=1.0);
            }
            delta
        }
    }
}

fn gaussian(rng: &mut ChaCha20Rng) -> f64 {
    // Box-Muller; inputs bounded away from zero so the log is finite.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
