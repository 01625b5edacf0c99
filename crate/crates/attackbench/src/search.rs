//! Perturbation-size search for fixed-budget attacks.
//!
//! A fixed-budget attack answers "can you succeed within radius eps?"; to
//! rank it against minimum-norm attacks we need the smallest eps it can
//! manage. The search spends a fixed number of trials: an exponential phase
//! (halve eps after a success, double after a failure) until the radius is
//! bracketed by a failing lower and a succeeding upper bound, then bisection.
//! All trials share one query ledger, and the gradient steps of the wrapped
//! attack are split evenly across them.

use serde::{Deserialize, Serialize};

use crate::attack::{run_attack, AttackConfig, Mode};
use crate::benchmodel::BenchModel;
use crate::metrics::Norm;
use crate::{Error, Result};

/// Search settings; serialized as the optional `search` block of an attack
/// configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    /// Number of trials (exponential bracketing plus bisection combined).
    pub steps: usize,
    /// Radius of the first trial.
    pub eps_init: f64,
}

impl SearchConfig {
    /// Default settings for a given norm: 10 trials, with a first radius
    /// scaled to where decision boundaries typically sit under that norm.
    pub fn for_norm(p: Norm) -> SearchConfig {
        let eps_init = match p {
            Norm::L0 => 100.0,
            Norm::L1 => 10.0,
            Norm::L2 => 1.0,
            Norm::LInf => 1.0 / 255.0,
        };
        SearchConfig {
            steps: 10,
            eps_init,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::Config(format!(
                "a radius search needs at least 2 trials, got {}",
                self.steps
            )));
        }
        if !self.eps_init.is_finite() || self.eps_init <= 0.0 {
            return Err(Error::Config(format!(
                "initial search radius must be positive and finite, got {}",
                self.eps_init
            )));
        }
        Ok(())
    }
}

/// Splits a total gradient-step budget over `trials` trials: an even share
/// each (at least one), any remainder added to the final trial.
pub fn split_steps(total: usize, trials: usize) -> Vec<usize> {
    assert!(trials > 0);
    let per = (total / trials).max(1);
    let mut plan = vec![per; trials];
    let used = per * trials;
    if total > used {
        plan[trials - 1] += total - used;
    }
    plan
}

/// Core search over an arbitrary success predicate.
///
/// `trial(index, eps, steps)` runs one attempt at radius `eps` with the given
/// step allowance and reports whether it found an adversarial point. Returns
/// the smallest radius that actually succeeded, or `None` when every trial
/// failed. The predicate need not be monotone; bounds only tighten, so the
/// bisection stays inside the bracket regardless.
pub fn search_core<F>(
    trials: usize,
    eps_init: f64,
    total_steps: usize,
    mut trial: F,
) -> Result<Option<f64>>
where
    F: FnMut(usize, f64, usize) -> Result<bool>,
{
    let plan = split_steps(total_steps, trials);
    let mut best_success: Option<f64> = None;
    let mut failing_lo: Option<f64> = None;
    let mut succeeding_hi: Option<f64> = None;
    let mut eps = eps_init;
    for (t, &steps_t) in plan.iter().enumerate() {
        let ok = trial(t, eps, steps_t)?;
        if ok {
            best_success = Some(best_success.map_or(eps, |b| b.min(eps)));
            succeeding_hi = Some(succeeding_hi.map_or(eps, |h| h.min(eps)));
        } else {
            failing_lo = Some(failing_lo.map_or(eps, |l| l.max(eps)));
        }
        eps = match (failing_lo, succeeding_hi) {
            (Some(lo), Some(hi)) => 0.5 * (lo + hi),
            (None, Some(hi)) => hi / 2.0,
            (Some(lo), None) => lo * 2.0,
            (None, None) => unreachable!("every trial lands in one bucket"),
        };
    }
    Ok(best_success)
}

/// Runs the radius search for a fixed-budget attack against one wrapped
/// sample. Each trial clones the attack with the trial radius, its share of
/// the steps, and a trial-indexed seed (so random initializations differ),
/// then runs it cold on the shared ledger. The recorded distance still comes
/// from the wrapper's tracker, which can only improve on the returned
/// radius.
pub fn search_attack(
    attack: &AttackConfig,
    bm: &mut BenchModel,
    cfg: &SearchConfig,
) -> Result<Option<f64>> {
    if attack.mode != Mode::FixedBudget {
        return Err(Error::Config(
            "the radius search drives fixed-budget attacks only".into(),
        ));
    }
    attack.validate()?;
    cfg.validate()?;
    search_core(cfg.steps, cfg.eps_init, attack.steps, |t, eps, steps_t| {
        let mut trial_cfg = attack.clone();
        trial_cfg.epsilon = Some(eps);
        trial_cfg.steps = steps_t;
        trial_cfg.seed = attack.seed.wrapping_add(t as u64);
        trial_cfg.search = None;
        let outcome = run_attack(&trial_cfg, bm)?;
        Ok(outcome.found_adversarial)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::preset;
    use crate::diffnet::{Activation, DenseLayer, ModelParams};

    #[test]
    fn split_is_even_with_remainder_last() {
        assert_eq!(split_steps(1000, 10), vec![100; 10]);
        assert_eq!(split_steps(1, 10), vec![1; 10]);
        assert_eq!(
            split_steps(1005, 10),
            vec![100, 100, 100, 100, 100, 100, 100, 100, 100, 105]
        );
        assert_eq!(split_steps(25, 10), vec![2, 2, 2, 2, 2, 2, 2, 2, 2, 7]);
    }

    #[test]
    fn monotone_oracle_brackets_then_bisects() {
        let mut seen = Vec::new();
        let got = search_core(10, 1.0, 1000, |_, eps, steps| {
            assert_eq!(steps, 100);
            seen.push(eps);
            Ok(eps >= 0.3)
        })
        .unwrap();
        assert_eq!(
            seen,
            vec![
                1.0,
                0.5,
                0.25,
                0.375,
                0.3125,
                0.28125,
                0.296875,
                0.3046875,
                0.30078125,
                0.298828125,
            ]
        );
        assert_eq!(got, Some(0.30078125));
    }

    #[test]
    fn all_failures_double_then_give_up() {
        let mut seen = Vec::new();
        let got = search_core(10, 1.0, 10, |_, eps, _| {
            seen.push(eps);
            Ok(false)
        })
        .unwrap();
        assert_eq!(got, None);
        assert_eq!(seen.last().copied(), Some(512.0));
    }

    #[test]
    fn success_at_first_radius_only_shrinks() {
        let got = search_core(10, 1.0, 10, |_, eps, _| Ok(eps >= 1.0)).unwrap();
        assert_eq!(got, Some(1.0));
    }

    #[test]
    fn trial_errors_propagate() {
        let got = search_core(10, 1.0, 10, |t, _, _| {
            if t == 3 {
                Err(Error::Data("boom".into()))
            } else {
                Ok(false)
            }
        });
        assert!(matches!(got, Err(Error::Data(_))));
    }

    #[test]
    fn config_defaults_per_norm() {
        assert_eq!(SearchConfig::for_norm(Norm::L0).eps_init, 100.0);
        assert_eq!(SearchConfig::for_norm(Norm::L1).eps_init, 10.0);
        assert_eq!(SearchConfig::for_norm(Norm::L2).eps_init, 1.0);
        assert_eq!(SearchConfig::for_norm(Norm::LInf).eps_init, 1.0 / 255.0);
        assert_eq!(SearchConfig::for_norm(Norm::L2).steps, 10);
        assert!(SearchConfig {
            steps: 1,
            eps_init: 1.0
        }
        .validate()
        .is_err());
        assert!(SearchConfig {
            steps: 10,
            eps_init: 0.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn min_norm_attack_is_rejected() {
        let m = linear_model();
        let mut bm = BenchModel::wrap(&m, 100, Norm::L2, vec![0.8, 0.6], 0).unwrap();
        let cfg = preset("DDN").unwrap();
        let search = SearchConfig::for_norm(Norm::L2);
        assert!(matches!(
            search_attack(&cfg, &mut bm, &search),
            Err(Error::Config(_))
        ));
    }

    fn linear_model() -> ModelParams {
        ModelParams::new(vec![DenseLayer::new(
            2,
            2,
            vec![1.0, 0.5, -1.0, -0.5],
            vec![-0.5, 0.5],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn fgsm_search_lands_on_the_analytic_radius() {
        // On the linear model at x = (0.8, 0.6) a full signed step of size
        // eps changes the logit margin 1.2 by 3*eps, so FGSM succeeds iff
        // eps > 0.4. Starting from 1/255 and doubling, the first success is
        // 128/255; two bisections later the best success is the midpoint
        // below.
        let m = linear_model();
        let x = vec![0.8, 0.6];
        let mut bm = BenchModel::wrap(&m, 2000, Norm::LInf, x, 0).unwrap();
        let attack = preset("FGSM").unwrap();
        let search = SearchConfig::for_norm(Norm::LInf);
        let eps_star = search_attack(&attack, &mut bm, &search).unwrap().unwrap();
        // Replay the trial arithmetic: seven doublings reach 128/255 (the
        // first success), one failing midpoint at 96/255, then the certified
        // success at 112/255.
        let mut lo = 1.0 / 255.0;
        for _ in 0..6 {
            lo *= 2.0;
        }
        let hi = lo * 2.0;
        let m1 = 0.5 * (lo + hi);
        let expected = 0.5 * (m1 + hi);
        assert_eq!(eps_star, expected);
        let best = bm.take_best().unwrap();
        assert!(best.distance <= eps_star * (1.0 + 1e-12));
        assert!(best.distance > 0.4);
        // Ten trials, each one step plus the final-candidate check.
        assert_eq!(bm.num_queries(), (20, 10));
    }

    #[test]
    fn all_fail_search_returns_none_and_spends_nothing_extra() {
        // Budget too small for even one full trial: the first forward halts
        // the ledger, every later call is fabricated, and no success can be
        // faked.
        let m = linear_model();
        let mut bm = BenchModel::wrap(&m, 1, Norm::LInf, vec![0.8, 0.6], 0).unwrap();
        let attack = preset("FGSM").unwrap();
        let search = SearchConfig::for_norm(Norm::LInf);
        let got = search_attack(&attack, &mut bm, &search).unwrap();
        assert_eq!(got, None);
        assert_eq!(bm.num_queries(), (1, 0));
    }
}
