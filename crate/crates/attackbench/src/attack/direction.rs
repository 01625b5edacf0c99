//! Gradient-to-direction transforms.
//!
//! The transform folds the current step size into the returned update, so the
//! optimizer applies it as-is.

use serde::{Deserialize, Serialize};

use crate::metrics::{lp_norm, Norm};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionKind {
    /// Raw gradient scaled by the step size.
    Grad,
    /// Gradient rescaled to unit p-norm, then scaled by the step size.
    Norm,
    /// Steepest-descent step of the p-norm ball: the in-ball direction that
    /// maximizes inner product with the gradient.
    Proj,
}

/// Turns a raw gradient into the step `g'`. Returns the step and a stall
/// flag: a zero gradient under `Norm`/`Proj` has no direction, so the step is
/// the zero vector and the flag is set.
pub fn transform_direction(
    kind: DirectionKind,
    g: &[f64],
    alpha: f64,
    p: Norm,
) -> Result<(Vec<f64>, bool)> {
    match kind {
        DirectionKind::Grad => Ok((g.iter().map(|v| alpha * v).collect(), false)),
        DirectionKind::Norm => {
            // The 0-"norm" of a gradient (its nonzero count) carries no step
            // length information; fall back to l2 scaling there.
            let scale_norm = if p == Norm::L0 { Norm::L2 } else { p };
            let n = lp_norm(g, scale_norm);
            if n == 0.0 {
                return Ok((vec![0.0; g.len()], true));
            }
            Ok((g.iter().map(|v| alpha * v / n).collect(), false))
        }
        DirectionKind::Proj => match p {
            // For l2 the ball maximizer is the normalized gradient; this must
            // agree with Norm exactly, so share the code path.
            Norm::L2 => transform_direction(DirectionKind::Norm, g, alpha, Norm::L2),
            Norm::LInf => {
                let step: Vec<f64> = g.iter().map(|v| alpha * sign(*v)).collect();
                let stalled = g.iter().all(|v| *v == 0.0);
                Ok((step, stalled))
            }
            Norm::L1 => {
                // All mass on the single largest-|g| coordinate, ties toward
                // the lowest index.
                let mut best = 0usize;
                for (i, v) in g.iter().enumerate().skip(1) {
                    if v.abs() > g[best].abs() {
                        best = i;
                    }
                }
                let mut step = vec![0.0; g.len()];
                if g[best] == 0.0 {
                    return Ok((step, true));
                }
                step[best] = alpha * sign(g[best]);
                Ok((step, false))
            }
            Norm::L0 => Err(Error::Config(
                "proj direction is defined for p in {1, 2, inf} only".into(),
            )),
        },
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
