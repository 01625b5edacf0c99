//! Feasible-set projections.
//!
//! Feasibility is the intersection of the image box `[0, 1]^d` (always) and,
//! for fixed-budget attacks, the p-ball of radius eps around the sample. The
//! projection is a single pass: Euclidean projection onto the ball, then the
//! box clip. There is no alternating refinement; the box clip never grows any
//! coordinate of the perturbation, so the ball constraint survives it.

use crate::metrics::{lp_norm, Norm};

/// Euclidean projection of `delta` onto the centered p-ball of radius `eps`.
/// For p = 0 "ball" means support size: the floor(eps) largest-magnitude
/// coordinates survive, ties toward the lower index.
pub fn project_ball(delta: &[f64], p: Norm, eps: f64) -> Vec<f64> {
    match p {
        Norm::L2 => {
            let n = lp_norm(delta, Norm::L2);
            if n <= eps {
                delta.to_vec()
            } else {
                delta.iter().map(|v| v * eps / n).collect()
            }
        }
        Norm::LInf => delta.iter().map(|v| v.clamp(-eps, eps)).collect(),
        Norm::L1 => {
            if lp_norm(delta, Norm::L1) <= eps {
                return delta.to_vec();
            }
            // Sort-based simplex projection of the magnitudes: find the
            // shrinkage threshold theta with sum(max(|v| - theta, 0)) = eps.
            let mut mags: Vec<f64> = delta.iter().map(|v| v.abs()).collect();
            mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let mut cumsum = 0.0;
            let mut theta = 0.0;
            for (j, &m) in mags.iter().enumerate() {
                cumsum += m;
                let candidate = (cumsum - eps) / (j + 1) as f64;
                if m - candidate > 0.0 {
                    theta = candidate;
                } else {
                    break;
                }
            }
            delta
                .iter()
                .map(|v| v.signum() * (v.abs() - theta).max(0.0))
                .collect()
        }
        Norm::L0 => {
            let keep = (eps.max(0.0).floor() as usize).min(delta.len());
            let nonzero = delta.iter().filter(|v| **v != 0.0).count();
            if nonzero <= keep {
                return delta.to_vec();
            }
            let mut order: Vec<usize> = (0..delta.len()).collect();
            order.sort_by(|&a, &b| {
                delta[b]
                    .abs()
                    .partial_cmp(&delta[a].abs())
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let mut out = vec![0.0; delta.len()];
            for &i in order.iter().take(keep) {
                out[i] = delta[i];
            }
            out
        }
    }
}

/// Clamps `x + delta` into the unit box and returns the adjusted
/// perturbation.
pub fn box_clip(x: &[f64], delta: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(delta)
        .map(|(xi, di)| (xi + di).clamp(0.0, 1.0) - xi)
        .collect()
}

/// Full feasibility projection: optional p-ball of radius `eps`, then the
/// box. Minimum-norm attacks pass `None` and get the box clip alone.
pub fn project_feasible(x: &[f64], delta: &[f64], p: Norm, eps: Option<f64>) -> Vec<f64> {
    match eps {
        Some(eps) => box_clip(x, &project_ball(delta, p, eps)),
        None => box_clip(x, delta),
    }
}
