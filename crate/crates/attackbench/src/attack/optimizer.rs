//! Optimizer steps over the perturbation.
//!
//! The incoming direction `g'` already carries the step size. GD and
//! momentum apply it directly; Adam renormalizes per coordinate and therefore
//! rescales by the current step size `alpha` explicitly (on the first step
//! with a constant gradient the bias corrections cancel and the update is
//! exactly `-alpha * sign(g)`).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Gd,
    GdMomentum {
        beta: f64,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

/// Per-run optimizer state; zero-initialized.
#[derive(Debug, Clone)]
pub enum OptimizerState {
    Gd,
    Momentum { velocity: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64>, t: u32 },
}

impl OptimizerState {
    pub fn new(kind: &OptimizerKind, dim: usize) -> Self {
        match kind {
            OptimizerKind::Gd => OptimizerState::Gd,
            OptimizerKind::GdMomentum { .. } => OptimizerState::Momentum {
                velocity: vec![0.0; dim],
            },
            OptimizerKind::Adam { .. } => OptimizerState::Adam {
                m: vec![0.0; dim],
                v: vec![0.0; dim],
                t: 0,
            },
        }
    }
}

/// One descent step: returns the next perturbation before projection.
pub fn optimizer_step(
    kind: &OptimizerKind,
    delta: &[f64],
    g_dir: &[f64],
    alpha: f64,
    state: &mut OptimizerState,
) -> Vec<f64> {
    match (kind, state) {
        (OptimizerKind::Gd, OptimizerState::Gd) => {
            delta.iter().zip(g_dir).map(|(d, g)| d - g).collect()
        }
        (OptimizerKind::GdMomentum { beta }, OptimizerState::Momentum { velocity }) => {
            for (v, g) in velocity.iter_mut().zip(g_dir) {
                *v = beta * *v + g;
            }
            delta.iter().zip(velocity.iter()).map(|(d, v)| d - v).collect()
        }
        (OptimizerKind::Adam { beta1, beta2, eps }, OptimizerState::Adam { m, v, t }) => {
            *t += 1;
            let bc1 = 1.0 - beta1.powi(*t as i32);
            let bc2 = 1.0 - beta2.powi(*t as i32);
            delta
                .iter()
                .zip(g_dir)
                .enumerate()
                .map(|(i, (d, g))| {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    d - alpha * m_hat / (v_hat.sqrt() + eps)
                })
                .collect()
        }
        _ => unreachable!("optimizer state built for a different kind"),
    }
}
