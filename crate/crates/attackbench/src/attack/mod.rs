//! Attack engine: one descent loop, parameterized by interchangeable
//! components.
//!
//! Every attack is an [`AttackConfig`]: a loss over logits, an
//! initialization, a gradient-to-direction transform, an optimizer, a
//! step-size schedule, and a feasibility mode. Fixed-budget attacks project
//! onto a given eps-ball every step; minimum-norm attacks either rely on a
//! penalty term or adapt the ball radius themselves (the DDN and FMN
//! heuristics live here as mode variants, with their constants documented
//! below as tunables). The engine talks to the model only through a
//! [`BenchModel`], so query accounting and best-adversarial tracking are
//! inherited, and it stops as soon as the wrapper halts.

mod direction;
mod init;
mod loss;
mod optimizer;
mod preset;
mod project;
mod schedule;

pub use direction::{transform_direction, DirectionKind};
pub use init::{initialize, InitKind};
pub use loss::{eval_loss, LossKind};
pub use optimizer::{optimizer_step, OptimizerKind, OptimizerState};
pub use preset::{preset, PRESET_NAMES};
pub use project::{box_clip, project_ball, project_feasible};
pub use schedule::{schedule, SchedulerKind};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::benchmodel::BenchModel;
use crate::diffnet::argmax;
use crate::metrics::{lp_norm, Norm};
use crate::search::SearchConfig;
use crate::{Error, Result};

/// Initial l2 radius for the DDN ball.
const DDN_EPS_INIT: f64 = 1.0;
/// DDN per-step radius change: shrink by this factor on success, grow on
/// failure.
const DDN_GAMMA: f64 = 0.05;
/// FMN radius-adaptation rate, cosine-annealed between these two values.
const FMN_GAMMA_INIT: f64 = 0.05;
const FMN_GAMMA_FINAL: f64 = 0.001;
/// Penalty weights tried by the CW-style mode; the step budget is split
/// evenly across them.
const CW_PENALTY_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

/// Feasibility regime of an attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Stay inside the configured eps-ball; driven through a perturbation-
    /// size search by the harness.
    FixedBudget,
    /// Minimize the perturbation size directly.
    MinNorm(MinNormHeuristic),
}

/// How a minimum-norm attack steers the perturbation size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinNormHeuristic {
    /// No ball at all; plain descent inside the box.
    Plain,
    /// Keep the perturbation on an l2 sphere whose radius shrinks on success
    /// and grows on failure.
    Ddn,
    /// Adapt the ball radius toward a boundary estimate extrapolated from
    /// the margin loss, then project onto it.
    Fmn,
    /// Minimize `||delta||_2^2 + c * loss` over a grid of penalty weights.
    Penalty,
}

impl Mode {
    fn as_str(&self) -> &'static str {
        match self {
            Mode::FixedBudget => "fixed_budget",
            Mode::MinNorm(MinNormHeuristic::Plain) => "min_norm",
            Mode::MinNorm(MinNormHeuristic::Ddn) => "min_norm_ddn",
            Mode::MinNorm(MinNormHeuristic::Fmn) => "min_norm_fmn",
            Mode::MinNorm(MinNormHeuristic::Penalty) => "min_norm_penalty",
        }
    }

    fn parse(text: &str) -> std::result::Result<Mode, String> {
        match text {
            "fixed_budget" => Ok(Mode::FixedBudget),
            "min_norm" => Ok(Mode::MinNorm(MinNormHeuristic::Plain)),
            "min_norm_ddn" => Ok(Mode::MinNorm(MinNormHeuristic::Ddn)),
            "min_norm_fmn" => Ok(Mode::MinNorm(MinNormHeuristic::Fmn)),
            "min_norm_penalty" => Ok(Mode::MinNorm(MinNormHeuristic::Penalty)),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Mode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Mode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Mode, D::Error> {
        let text = String::deserialize(d)?;
        Mode::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// A full attack description; serializes to the JSON document the CLI reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub mode: Mode,
    pub p: Norm,
    pub loss: LossKind,
    pub init: InitKind,
    pub direction: DirectionKind,
    pub optimizer: OptimizerKind,
    pub scheduler: SchedulerKind,
    /// Total gradient steps (shared across trials for searched or
    /// penalty-grid attacks).
    pub steps: usize,
    /// Initial step size alpha_0.
    pub step_size: f64,
    /// Margin kappa for the DL loss; ignored elsewhere.
    pub margin: Option<f64>,
    pub seed: u64,
    /// Ball radius for fixed-budget mode; minimum-norm attacks leave it null.
    pub epsilon: Option<f64>,
    /// Perturbation-size search settings; defaults per norm when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchConfig>,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("attack needs at least one step".into()));
        }
        if !self.step_size.is_finite() || self.step_size <= 0.0 {
            return Err(Error::Config(format!(
                "step size must be positive and finite, got {}",
                self.step_size
            )));
        }
        if self.mode == Mode::FixedBudget {
            match self.epsilon {
                Some(e) if e.is_finite() && e > 0.0 => {}
                Some(e) => {
                    return Err(Error::Config(format!(
                        "fixed-budget epsilon must be positive and finite, got {e}"
                    )));
                }
                // The harness fills epsilon per search trial; running the
                // engine directly requires it.
                None => {}
            }
        }
        if self.direction == DirectionKind::Proj && self.p == Norm::L0 {
            return Err(Error::Config(
                "proj direction is defined for p in {1, 2, inf} only".into(),
            ));
        }
        if let InitKind::Random { radius } = self.init {
            if !radius.is_finite() || radius < 0.0 {
                return Err(Error::Config(format!(
                    "random init radius must be finite and >= 0, got {radius}"
                )));
            }
        }
        match self.optimizer {
            OptimizerKind::Gd => {}
            OptimizerKind::GdMomentum { beta } => {
                if !(0.0..1.0).contains(&beta) {
                    return Err(Error::Config(format!(
                        "momentum beta must lie in [0, 1), got {beta}"
                    )));
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
                    return Err(Error::Config(format!(
                        "adam betas must lie in [0, 1), got {beta1}, {beta2}"
                    )));
                }
                if !eps.is_finite() || eps <= 0.0 {
                    return Err(Error::Config(format!("adam eps must be positive, got {eps}")));
                }
            }
        }
        match self.scheduler {
            SchedulerKind::Fixed => {}
            SchedulerKind::Lin { gamma } | SchedulerKind::Exp { gamma } => {
                if !(gamma > 0.0 && gamma < 1.0) {
                    return Err(Error::Config(format!(
                        "decay gamma must lie in (0, 1), got {gamma}"
                    )));
                }
            }
            SchedulerKind::Cos { alpha_final } => {
                if !alpha_final.is_finite() || alpha_final < 0.0 {
                    return Err(Error::Config(format!(
                        "cosine floor must be >= 0, got {alpha_final}"
                    )));
                }
            }
            SchedulerKind::Rop { patience, factor } => {
                if patience == 0 {
                    return Err(Error::Config("plateau patience must be >= 1".into()));
                }
                if !(factor > 0.0 && factor < 1.0) {
                    return Err(Error::Config(format!(
                        "plateau factor must lie in (0, 1), got {factor}"
                    )));
                }
            }
        }
        if let Some(kappa) = self.margin {
            if !kappa.is_finite() || kappa < 0.0 {
                return Err(Error::Config(format!("margin must be >= 0, got {kappa}")));
            }
        }
        Ok(())
    }
}

/// What a single engine run observed. The benchmark-relevant result (best
/// distance, query counts) lives in the [`BenchModel`]; this reports the
/// run's own view, which the perturbation-size search needs per trial.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Whether any query during this run was adversarial (judged on true
    /// logits; fabricated post-halt replies can never set this).
    pub found_adversarial: bool,
    /// Final iterate `x + delta_K`, feasible. Useful as a training
    /// perturbation even when no misclassification was found.
    pub final_point: Vec<f64>,
}

/// Runs the configured attack against a freshly wrapped sample.
pub fn run_attack(config: &AttackConfig, bm: &mut BenchModel) -> Result<RunOutcome> {
    config.validate()?;
    if config.p != bm.norm() {
        return Err(Error::Config(format!(
            "attack measures {} but the wrapper tracks {}",
            config.p,
            bm.norm()
        )));
    }
    match config.mode {
        Mode::MinNorm(MinNormHeuristic::Penalty) => run_penalty(config, bm),
        _ => run_descent(config, bm, config.steps, config.seed),
    }
}

/// Ball bookkeeping per feasibility mode.
enum BallState {
    Fixed(f64),
    Unconstrained,
    Ddn { eps: f64 },
    Fmn { eps: Option<f64> },
}

impl BallState {
    fn radius(&self) -> Option<f64> {
        match self {
            BallState::Fixed(e) | BallState::Ddn { eps: e } => Some(*e),
            BallState::Fmn { eps } => *eps,
            BallState::Unconstrained => None,
        }
    }
}

fn run_descent(config: &AttackConfig, bm: &mut BenchModel, steps: usize, seed: u64) -> Result<RunOutcome> {
    let x = bm.origin().to_vec();
    let y = bm.label();
    let kappa = config.margin.unwrap_or(0.0);
    let mut ball = match config.mode {
        Mode::FixedBudget => {
            let eps = config.epsilon.ok_or_else(|| {
                Error::Config("fixed-budget attack needs epsilon to run".into())
            })?;
            BallState::Fixed(eps)
        }
        Mode::MinNorm(MinNormHeuristic::Plain) => BallState::Unconstrained,
        Mode::MinNorm(MinNormHeuristic::Ddn) => BallState::Ddn { eps: DDN_EPS_INIT },
        Mode::MinNorm(MinNormHeuristic::Fmn) => BallState::Fmn { eps: None },
        Mode::MinNorm(MinNormHeuristic::Penalty) => unreachable!("penalty has its own loop"),
    };

    let mut delta = initialize(&config.init, &x, config.p, seed)?;
    // The first query must already be feasible.
    delta = project_feasible(&x, &delta, config.p, ball.radius());
    let mut opt_state = OptimizerState::new(&config.optimizer, x.len());
    let mut losses: Vec<f64> = Vec::with_capacity(steps);
    let mut found = false;

    for k in 0..steps {
        if bm.is_halted() {
            break;
        }
        let alpha = schedule(&config.scheduler, config.step_size, k, steps, &losses);
        let point: Vec<f64> = x.iter().zip(&delta).map(|(xi, di)| xi + di).collect();
        let logits = bm.counted_forward(&point)?;
        let adversarial_now = argmax(&logits) != y;
        if adversarial_now {
            found = true;
        }
        let (loss, loss_seed) = eval_loss(config.loss, &logits, y, kappa)?;
        losses.push(loss);
        if bm.is_halted() {
            break;
        }
        let grad = bm.counted_backward(&point, &loss_seed)?;

        // Radius bookkeeping reads the iterate just evaluated.
        match &mut ball {
            BallState::Fixed(_) | BallState::Unconstrained => {}
            BallState::Ddn { eps } => {
                *eps *= if adversarial_now {
                    1.0 - DDN_GAMMA
                } else {
                    1.0 + DDN_GAMMA
                };
            }
            BallState::Fmn { eps } => {
                let t = k as f64 / steps.max(1) as f64;
                let gamma = FMN_GAMMA_FINAL
                    + 0.5 * (FMN_GAMMA_INIT - FMN_GAMMA_FINAL)
                        * (1.0 + (std::f64::consts::PI * t).cos());
                let cur = lp_norm(&delta, config.p);
                if adversarial_now {
                    let base = eps.map_or(cur, |e| e.min(cur));
                    *eps = Some(base * (1.0 - gamma));
                } else if found {
                    *eps = eps.map(|e| e * (1.0 + gamma));
                } else {
                    // Not past the boundary yet: extrapolate its distance
                    // from the margin and the gradient's dual norm.
                    let gn = lp_norm(&grad, dual_norm(config.p));
                    let reach = if gn > 0.0 { loss.max(0.0) / gn } else { 0.0 };
                    let target = cur + reach;
                    let floor = eps.map_or(cur, |e| e.max(cur));
                    // The estimate must outgrow the radius the projection
                    // already enforces by a margin that survives rounding;
                    // a boundary-exact landing (logit tie, or a margin so
                    // thin the reach rounds away) would otherwise freeze
                    // the iterate one ulp short of the crossing.
                    if target > floor * (1.0 + 1e-12) {
                        *eps = Some(target);
                    } else if floor > 0.0 {
                        *eps = Some(floor * (1.0 + gamma));
                    } else {
                        *eps = Some(target);
                    }
                }
                if config.p == Norm::L0 {
                    // Below support 1 the projection would erase the
                    // perturbation entirely.
                    *eps = eps.map(|e| e.max(1.0));
                }
            }
        }

        let (g_dir, _stalled) = transform_direction(config.direction, &grad, alpha, config.p)?;
        let stepped = optimizer_step(&config.optimizer, &delta, &g_dir, alpha, &mut opt_state);
        delta = match &ball {
            BallState::Ddn { eps } => {
                // DDN keeps the iterate on the sphere, not just inside it.
                let n = lp_norm(&stepped, Norm::L2);
                let scaled: Vec<f64> = if n > 0.0 {
                    stepped.iter().map(|v| v * eps / n).collect()
                } else {
                    stepped
                };
                box_clip(&x, &scaled)
            }
            other => project_feasible(&x, &stepped, config.p, other.radius()),
        };
        if let BallState::Fixed(eps) = &ball {
            debug_assert!(lp_norm(&delta, config.p) <= eps * (1.0 + 1e-12));
        }
    }

    // The loop's last projection produced a candidate the model never saw;
    // without this evaluation a single-step attack could not register its
    // hit. Past the halt the reply is fabricated as the true class, so it
    // costs nothing and can never fake a success.
    let final_point: Vec<f64> = x.iter().zip(&delta).map(|(xi, di)| xi + di).collect();
    let logits = bm.counted_forward(&final_point)?;
    if argmax(&logits) != y {
        found = true;
    }
    Ok(RunOutcome {
        found_adversarial: found,
        final_point,
    })
}

/// Penalty-mode loop: for each weight in the grid, minimize
/// `||delta||_2^2 + c * loss` with a fresh start, sharing the query budget.
fn run_penalty(config: &AttackConfig, bm: &mut BenchModel) -> Result<RunOutcome> {
    let x = bm.origin().to_vec();
    let y = bm.label();
    let kappa = config.margin.unwrap_or(0.0);
    let trials = CW_PENALTY_GRID.len();
    let per_trial = (config.steps / trials).max(1);
    let remainder = config.steps.saturating_sub(per_trial * trials);
    let mut found = false;
    let mut final_point = x.clone();

    for (t, &c) in CW_PENALTY_GRID.iter().enumerate() {
        if bm.is_halted() {
            break;
        }
        let steps_t = per_trial + if t + 1 == trials { remainder } else { 0 };
        let mut delta = initialize(&config.init, &x, config.p, config.seed.wrapping_add(t as u64))?;
        delta = box_clip(&x, &delta);
        let mut opt_state = OptimizerState::new(&config.optimizer, x.len());
        let mut losses: Vec<f64> = Vec::with_capacity(steps_t);

        for k in 0..steps_t {
            if bm.is_halted() {
                break;
            }
            let alpha = schedule(&config.scheduler, config.step_size, k, steps_t, &losses);
            let point: Vec<f64> = x.iter().zip(&delta).map(|(xi, di)| xi + di).collect();
            let logits = bm.counted_forward(&point)?;
            if argmax(&logits) != y {
                found = true;
            }
            let (cls_loss, cls_seed) = eval_loss(config.loss, &logits, y, kappa)?;
            let sq_norm: f64 = delta.iter().map(|d| d * d).sum();
            losses.push(sq_norm + c * cls_loss);
            if bm.is_halted() {
                break;
            }
            let weighted_seed: Vec<f64> = cls_seed.iter().map(|s| c * s).collect();
            let model_grad = bm.counted_backward(&point, &weighted_seed)?;
            // d/d(delta) of the squared-norm penalty is analytic; it costs
            // no query.
            let total_grad: Vec<f64> = model_grad
                .iter()
                .zip(&delta)
                .map(|(g, d)| g + 2.0 * d)
                .collect();
            let (g_dir, _) = transform_direction(config.direction, &total_grad, alpha, config.p)?;
            let stepped = optimizer_step(&config.optimizer, &delta, &g_dir, alpha, &mut opt_state);
            delta = box_clip(&x, &stepped);
        }
        // Evaluate this trial's final candidate (see run_descent).
        let end_point: Vec<f64> = x.iter().zip(&delta).map(|(xi, di)| xi + di).collect();
        let logits = bm.counted_forward(&end_point)?;
        if argmax(&logits) != y {
            found = true;
        }
        final_point = end_point;
    }
    Ok(RunOutcome {
        found_adversarial: found,
        final_point,
    })
}

fn dual_norm(p: Norm) -> Norm {
    match p {
        Norm::L1 => Norm::LInf,
        Norm::LInf => Norm::L1,
        Norm::L2 => Norm::L2,
        // No meaningful dual; l2 keeps the boundary estimate finite.
        Norm::L0 => Norm::L2,
    }
}
