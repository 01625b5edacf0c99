//! Step-size schedules.
//!
//! `schedule` is a pure function of the step index and the loss history so
//! far, so a run can be replayed exactly; the plateau scheduler re-derives
//! its state from the history each call.

use serde::{Deserialize, Serialize};

/// Minimum loss decrease that counts as progress for [`SchedulerKind::Rop`].
const ROP_IMPROVEMENT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulerKind {
    /// Constant step size.
    Fixed,
    /// Step size multiplied by gamma each step.
    Lin { gamma: f64 },
    /// Cosine annealing from the initial step size down to `alpha_final`.
    Cos { alpha_final: f64 },
    /// Step size multiplied by gamma each step.
    Exp { gamma: f64 },
    /// Reduce on plateau: multiply by `factor` after `patience` consecutive
    /// steps without loss improvement.
    Rop { patience: usize, factor: f64 },
}

/// Step size for step `k` of `total` given the losses of steps `0..k`.
pub fn schedule(
    kind: &SchedulerKind,
    alpha0: f64,
    k: usize,
    total: usize,
    loss_history: &[f64],
) -> f64 {
    match kind {
        SchedulerKind::Fixed => alpha0,
        SchedulerKind::Lin { gamma } | SchedulerKind::Exp { gamma } => {
            alpha0 * gamma.powi(k as i32)
        }
        SchedulerKind::Cos { alpha_final } => {
            let t = if total == 0 { 0.0 } else { k as f64 / total as f64 };
            alpha_final + 0.5 * (alpha0 - alpha_final) * (1.0 + (std::f64::consts::PI * t).cos())
        }
        SchedulerKind::Rop { patience, factor } => {
            let patience = (*patience).max(1);
            let mut alpha = alpha0;
            let mut best = f64::INFINITY;
            let mut stalled = 0usize;
            for &loss in loss_history {
                if loss < best - ROP_IMPROVEMENT {
                    best = loss;
                    stalled = 0;
                } else {
                    stalled += 1;
                    if stalled >= patience {
                        alpha *= factor;
                        stalled = 0;
                    }
                }
            }
            alpha
        }
    }
}
