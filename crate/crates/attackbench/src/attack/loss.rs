//! Attack losses over logits.
//!
//! Every loss is written so that it is larger while the sample is classified
//! correctly; the engine descends. [`eval_loss`] returns the scalar value
//! together with its gradient over the logits, which seeds the model's
//! backward pass.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// The true class's raw logit.
    Logit,
    /// The true class's softmax probability.
    Softmax,
    /// Log of the true class's softmax probability (negative cross-entropy).
    Nce,
    /// Difference-of-logits margin `f_y - max_{j != y} f_j`, floored at
    /// `-kappa`: once the competitor leads by more than kappa the loss
    /// flattens and the gradient vanishes.
    Dl,
    /// Difference of logits rescaled by the spread of the top three logits;
    /// needs at least three classes.
    Dlr,
}

/// Evaluates the loss and its logit-space gradient seed. `kappa` is the
/// margin used by [`LossKind::Dl`]; other losses ignore it.
pub fn eval_loss(
    kind: LossKind,
    logits: &[f64],
    label: usize,
    kappa: f64,
) -> Result<(f64, Vec<f64>)> {
    let classes = logits.len();
    if label >= classes {
        return Err(Error::Dimension(format!(
            "label {label} out of range for {classes} logits"
        )));
    }
    match kind {
        LossKind::Logit => {
            let mut seed = vec![0.0; classes];
            seed[label] = 1.0;
            Ok((logits[label], seed))
        }
        LossKind::Softmax => {
            let z = softmax(logits);
            let zy = z[label];
            // Row `label` of the softmax Jacobian: z_y * (e_y - z).
            let seed = z
                .iter()
                .enumerate()
                .map(|(j, &zj)| zy * (if j == label { 1.0 } else { 0.0 } - zj))
                .collect();
            Ok((zy, seed))
        }
        LossKind::Nce => {
            let lse = log_sum_exp(logits);
            let z = softmax(logits);
            let seed = z
                .iter()
                .enumerate()
                .map(|(j, &zj)| if j == label { 1.0 - zj } else { -zj })
                .collect();
            Ok((logits[label] - lse, seed))
        }
        LossKind::Dl => {
            let rival = best_rival(logits, label);
            let margin = logits[label] - logits[rival];
            // At the kink (margin == -kappa) keep the margin branch's
            // gradient: both branches agree on the value there, and a zero
            // seed at an exact logit tie would freeze any attack that lands
            // on the decision boundary.
            if margin >= -kappa {
                let mut seed = vec![0.0; classes];
                seed[label] = 1.0;
                seed[rival] = -1.0;
                Ok((margin, seed))
            } else {
                // Floor reached: the margin already exceeds kappa, stop
                // pushing.
                Ok((-kappa, vec![0.0; classes]))
            }
        }
        LossKind::Dlr => {
            if classes < 3 {
                return Err(Error::Config(
                    "dlr loss needs at least three classes".into(),
                ));
            }
            let rival = best_rival(logits, label);
            let mut order: Vec<usize> = (0..classes).collect();
            // Descending by logit, ties toward the lower index.
            order.sort_by(|&a, &b| {
                logits[b]
                    .partial_cmp(&logits[a])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let (pi1, pi3) = (order[0], order[2]);
            let num = logits[label] - logits[rival];
            let den = logits[pi1] - logits[pi3];
            if den <= 0.0 {
                // All top logits equal; the ratio is 0/0, define it away.
                return Ok((0.0, vec![0.0; classes]));
            }
            let mut seed = vec![0.0; classes];
            // Quotient rule with subgradients at the argmax choices.
            seed[label] += 1.0 / den;
            seed[rival] -= 1.0 / den;
            seed[pi1] -= num / (den * den);
            seed[pi3] += num / (den * den);
            Ok((num / den, seed))
        }
    }
}

/// Strongest competitor: argmax over the other classes, ties toward the
/// lowest index.
fn best_rival(logits: &[f64], label: usize) -> usize {
    let mut rival = usize::MAX;
    for (j, &v) in logits.iter().enumerate() {
        if j == label {
            continue;
        }
        if rival == usize::MAX || v > logits[rival] {
            rival = j;
        }
    }
    rival
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
