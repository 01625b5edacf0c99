//! Budgeted model wrapper: counts queries, tracks the best adversarial.
//!
//! One budget covers forwards and backwards combined; a model answering 1000
//! gradient steps (one forward plus one backward each) spends a budget of
//! 2000. The call that consumes the final unit is still answered truthfully
//! and still updates the tracker. After that the wrapper goes inert: forward
//! queries fabricate logits whose argmax is the true label (one-hot, scale
//! 1.0), backward queries return a zero vector, and neither counters nor the
//! tracker change again. Attacks therefore cannot learn anything past the
//! budget, and the benchmark can always read the best distance found while
//! the budget lasted.

use crate::diffnet::{argmax, forward, gradient, ModelParams};
use crate::metrics::{distance, Norm};
use crate::{Error, Result};

/// Best adversarial example seen so far, by distance from the origin sample.
#[derive(Debug, Clone)]
pub struct BestAdversarial {
    pub distance: f64,
    pub point: Vec<f64>,
}

/// A model wrapped for one sample under a fixed query budget.
#[derive(Debug)]
pub struct BenchModel<'m> {
    model: &'m ModelParams,
    budget: usize,
    forwards: usize,
    backwards: usize,
    halted: bool,
    origin: Vec<f64>,
    label: usize,
    norm: Norm,
    best: Option<BestAdversarial>,
}

impl<'m> BenchModel<'m> {
    /// Wraps `model` for the sample `(x, y)` with `budget` total queries.
    pub fn wrap(
        model: &'m ModelParams,
        budget: usize,
        norm: Norm,
        x: Vec<f64>,
        y: usize,
    ) -> Result<Self> {
        if budget == 0 {
            return Err(Error::Config("query budget must be at least 1".into()));
        }
        if x.len() != model.input_dim() {
            return Err(Error::Dimension(format!(
                "sample has {} coordinates, model expects {}",
                x.len(),
                model.input_dim()
            )));
        }
        if y >= model.num_classes() {
            return Err(Error::Config(format!(
                "label {y} out of range for {} classes",
                model.num_classes()
            )));
        }
        Ok(BenchModel {
            model,
            budget,
            forwards: 0,
            backwards: 0,
            halted: false,
            origin: x,
            label: y,
            norm,
            best: None,
        })
    }

    /// Forward pass, counted against the budget. Once the budget is spent the
    /// reply is a fabricated one-hot at the true label and nothing is counted
    /// or tracked.
    pub fn counted_forward(&mut self, point: &[f64]) -> Result<Vec<f64>> {
        if point.len() != self.origin.len() {
            return Err(Error::Dimension(format!(
                "query has {} coordinates, sample has {}",
                point.len(),
                self.origin.len()
            )));
        }
        if self.halted {
            let mut fabricated = vec![0.0; self.model.num_classes()];
            fabricated[self.label] = 1.0;
            return Ok(fabricated);
        }
        self.forwards += 1;
        if self.forwards + self.backwards >= self.budget {
            self.halted = true;
        }
        let logits = forward(self.model, point)?.logits().to_vec();
        // The final paid query still reports honestly and still counts
        // toward the tracker.
        if argmax(&logits) != self.label && in_box(point) {
            let d = distance(&self.origin, point, self.norm)?;
            if self.best.as_ref().is_none_or(|b| d < b.distance) {
                self.best = Some(BestAdversarial {
                    distance: d,
                    point: point.to_vec(),
                });
            }
        }
        Ok(logits)
    }

    /// Backward pass, counted against the budget: returns the input gradient
    /// of `seed . logits` at `point`. Once the budget is spent the reply is a
    /// zero vector and nothing is counted.
    pub fn counted_backward(&mut self, point: &[f64], seed: &[f64]) -> Result<Vec<f64>> {
        if point.len() != self.origin.len() {
            return Err(Error::Dimension(format!(
                "query has {} coordinates, sample has {}",
                point.len(),
                self.origin.len()
            )));
        }
        if seed.len() != self.model.num_classes() {
            return Err(Error::Dimension(format!(
                "seed has {} entries, model emits {} logits",
                seed.len(),
                self.model.num_classes()
            )));
        }
        if self.halted {
            return Ok(vec![0.0; self.origin.len()]);
        }
        self.backwards += 1;
        if self.forwards + self.backwards >= self.budget {
            self.halted = true;
        }
        let trace = forward(self.model, point)?;
        gradient(self.model, &trace, seed)
    }

    /// `(forwards, backwards)` consumed so far.
    pub fn num_queries(&self) -> (usize, usize) {
        (self.forwards, self.backwards)
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    /// Resets counters, halt state, and the tracker for a fresh run on the
    /// same sample.
    pub fn init_queries(&mut self) {
        self.forwards = 0;
        self.backwards = 0;
        self.halted = false;
        self.best = None;
    }

    /// Best adversarial found so far, if any.
    pub fn take_best(&self) -> Option<&BestAdversarial> {
        self.best.as_ref()
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn num_classes(&self) -> usize {
        self.model.num_classes()
    }
}

fn in_box(point: &[f64]) -> bool {
    point.iter().all(|&v| (0.0..=1.0).contains(&v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::{Activation, DenseLayer};

    /// 2-d identity logits: class = argmax coordinate.
    fn identity_model() -> ModelParams {
        ModelParams::new(vec![DenseLayer::new(
            2,
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn fresh_wrapper_reports_zero_queries() {
        let m = identity_model();
        let bm = BenchModel::wrap(&m, 4, Norm::L2, vec![0.8, 0.2], 0).unwrap();
        assert_eq!(bm.num_queries(), (0, 0));
        assert!(bm.take_best().is_none());
        assert!(!bm.is_halted());
    }

    #[test]
    fn zero_budget_is_rejected() {
        let m = identity_model();
        assert!(matches!(
            BenchModel::wrap(&m, 0, Norm::L2, vec![0.8, 0.2], 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn post_halt_forward_fabricates_true_class() {
        let m = identity_model();
        let mut bm = BenchModel::wrap(&m, 2, Norm::L2, vec![0.8, 0.2], 0).unwrap();
        bm.counted_forward(&[0.8, 0.2]).unwrap();
        bm.counted_forward(&[0.8, 0.2]).unwrap();
        assert!(bm.is_halted());
        let third = bm.counted_forward(&[0.1, 0.9]).unwrap();
        assert_eq!(argmax(&third), 0);
        assert_eq!(third, vec![1.0, 0.0]);
        assert_eq!(bm.num_queries(), (2, 0));
    }

    #[test]
    fn tracker_keeps_smallest_distance() {
        let m = identity_model();
        let mut bm = BenchModel::wrap(&m, 10, Norm::LInf, vec![0.8, 0.2], 0).unwrap();
        // Adversarial (argmax 1) at linf distance 0.5, then a closer one at 0.3.
        bm.counted_forward(&[0.3, 0.7]).unwrap();
        assert_eq!(bm.take_best().unwrap().distance, 0.5);
        bm.counted_forward(&[0.5, 0.52]).unwrap();
        let best = bm.take_best().unwrap();
        assert!((best.distance - 0.32).abs() < 1e-12);
        // A non-adversarial query leaves the tracker alone.
        bm.counted_forward(&[0.8, 0.2]).unwrap();
        assert!((bm.take_best().unwrap().distance - 0.32).abs() < 1e-12);
    }

    #[test]
    fn tracker_distance_pair_example() {
        let m = identity_model();
        let mut bm = BenchModel::wrap(&m, 10, Norm::LInf, vec![0.5, 0.45], 0).unwrap();
        bm.counted_forward(&[0.3, 0.95]).unwrap(); // adversarial at linf 0.5
        assert!((bm.take_best().unwrap().distance - 0.5).abs() < 1e-12);
        bm.counted_forward(&[0.45, 0.75]).unwrap(); // adversarial at linf 0.3
        assert!((bm.take_best().unwrap().distance - 0.3).abs() < 1e-12);
    }

    #[test]
    fn backward_counts_and_halts() {
        let m = identity_model();
        let mut bm = BenchModel::wrap(&m, 3, Norm::L2, vec![0.8, 0.2], 0).unwrap();
        bm.counted_forward(&[0.8, 0.2]).unwrap();
        let g = bm.counted_backward(&[0.8, 0.2], &[1.0, 0.0]).unwrap();
        assert_eq!(g, vec![1.0, 0.0]);
        bm.counted_forward(&[0.8, 0.2]).unwrap();
        assert!(bm.is_halted());
        // Fourth call is neutralized: zero gradient, counters frozen.
        let g = bm.counted_backward(&[0.8, 0.2], &[1.0, 0.0]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        assert_eq!(bm.num_queries(), (2, 1));
    }

    #[test]
    fn post_halt_tracker_is_frozen() {
        let m = identity_model();
        let mut bm = BenchModel::wrap(&m, 1, Norm::L2, vec![0.8, 0.2], 0).unwrap();
        bm.counted_forward(&[0.8, 0.2]).unwrap();
        assert!(bm.is_halted());
        assert!(bm.take_best().is_none());
        // This point would be adversarial, but the budget is gone.
        bm.counted_forward(&[0.1, 0.9]).unwrap();
        assert!(bm.take_best().is_none());
        assert_eq!(bm.num_queries(), (1, 0));
    }

    #[test]
    fn final_budget_unit_still_tracks() {
        let m = identity_model();
        let mut bm = BenchModel::wrap(&m, 1, Norm::LInf, vec![0.8, 0.2], 0).unwrap();
        let logits = bm.counted_forward(&[0.1, 0.9]).unwrap();
        // True logits, not fabricated, and the tracker saw the hit.
        assert_eq!(logits, vec![0.1, 0.9]);
        assert!(bm.is_halted());
        assert!((bm.take_best().unwrap().distance - 0.7).abs() < 1e-12);
    }

    #[test]
    fn out_of_box_points_are_not_tracked() {
        let m = identity_model();
        let mut bm = BenchModel::wrap(&m, 10, Norm::L2, vec![0.8, 0.2], 0).unwrap();
        bm.counted_forward(&[-0.5, 1.5]).unwrap();
        assert!(bm.take_best().is_none());
        assert_eq!(bm.num_queries(), (1, 0));
    }

    #[test]
    fn forward_is_transparent_before_halt() {
        let m = identity_model();
        let mut bm = BenchModel::wrap(&m, 5, Norm::L2, vec![0.8, 0.2], 0).unwrap();
        let direct = forward(&m, &[0.33, 0.44]).unwrap().logits().to_vec();
        let wrapped = bm.counted_forward(&[0.33, 0.44]).unwrap();
        assert_eq!(direct, wrapped);
    }

    #[test]
    fn init_queries_resets_everything() {
        let m = identity_model();
        let mut bm = BenchModel::wrap(&m, 2, Norm::L2, vec![0.8, 0.2], 0).unwrap();
        bm.counted_forward(&[0.1, 0.9]).unwrap();
        bm.counted_forward(&[0.1, 0.9]).unwrap();
        assert!(bm.is_halted());
        bm.init_queries();
        assert_eq!(bm.num_queries(), (0, 0));
        assert!(!bm.is_halted());
        assert!(bm.take_best().is_none());
    }
}
