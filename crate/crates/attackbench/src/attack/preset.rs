//! Named attack presets.
//!
//! Each preset pins every slot of an [`AttackConfig`]. Step sizes, decay
//! floors, and radii are tunable constants chosen to work well on small
//! dense nets over `[0,1]^d`; the heuristic constants for the adaptive-ball
//! modes live in the engine module.

use crate::attack::{
    AttackConfig, DirectionKind, InitKind, LossKind, MinNormHeuristic, Mode, OptimizerKind,
    SchedulerKind,
};
use crate::metrics::Norm;
use crate::{Error, Result};

/// Every name accepted by [`preset`], in display order.
pub const PRESET_NAMES: [&str; 11] = [
    "FGSM", "BIM", "PGD-L1", "PGD-L2", "PGD-Linf", "DDN", "FMN-L0", "FMN-L1", "FMN-L2",
    "FMN-Linf", "CW-L2",
];

/// Builds the configuration for a named attack.
///
/// Fixed-budget presets leave `epsilon` unset; the harness fills it per
/// perturbation-size search trial. All presets use seed 0; the harness
/// replaces it with a per-sample seed.
pub fn preset(name: &str) -> Result<AttackConfig> {
    // A huge nominal step makes the single projected step land on the ball
    // surface, which is exactly the classic one-shot sign attack.
    let fgsm_step = 10.0;
    let cfg = match name {
        "FGSM" => fixed_budget(Norm::LInf, InitKind::Zero, 1, fgsm_step),
        "BIM" => fixed_budget(Norm::LInf, InitKind::Zero, 1000, 0.01),
        "PGD-Linf" => fixed_budget(
            Norm::LInf,
            InitKind::Random { radius: 1.0 / 255.0 },
            1000,
            0.01,
        ),
        "PGD-L2" => fixed_budget(Norm::L2, InitKind::Random { radius: 0.5 }, 1000, 0.05),
        "PGD-L1" => fixed_budget(Norm::L1, InitKind::Random { radius: 1.0 }, 1000, 0.05),
        "DDN" => AttackConfig {
            mode: Mode::MinNorm(MinNormHeuristic::Ddn),
            p: Norm::L2,
            loss: LossKind::Dl,
            init: InitKind::Zero,
            direction: DirectionKind::Norm,
            optimizer: OptimizerKind::GdMomentum { beta: 0.9 },
            scheduler: SchedulerKind::Cos { alpha_final: 0.01 },
            steps: 1000,
            step_size: 1.0,
            margin: Some(0.0),
            seed: 0,
            epsilon: None,
            search: None,
        },
        "FMN-L0" => fmn(Norm::L0, 5.0, 0.05),
        "FMN-L1" => fmn(Norm::L1, 5.0, 0.05),
        "FMN-L2" => fmn(Norm::L2, 1.0, 0.01),
        "FMN-Linf" => fmn(Norm::LInf, 0.1, 0.001),
        "CW-L2" => AttackConfig {
            mode: Mode::MinNorm(MinNormHeuristic::Penalty),
            p: Norm::L2,
            loss: LossKind::Dl,
            init: InitKind::Zero,
            direction: DirectionKind::Grad,
            optimizer: OptimizerKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            scheduler: SchedulerKind::Fixed,
            steps: 1000,
            step_size: 0.01,
            margin: Some(0.0),
            seed: 0,
            epsilon: None,
            search: None,
        },
        other => {
            return Err(Error::Config(format!(
                "unknown attack preset {other:?}; expected one of {}",
                PRESET_NAMES.join(", ")
            )));
        }
    };
    Ok(cfg)
}

fn fixed_budget(p: Norm, init: InitKind, steps: usize, step_size: f64) -> AttackConfig {
    AttackConfig {
        mode: Mode::FixedBudget,
        p,
        loss: LossKind::Nce,
        init,
        direction: DirectionKind::Proj,
        optimizer: OptimizerKind::Gd,
        scheduler: SchedulerKind::Fixed,
        steps,
        step_size,
        margin: None,
        seed: 0,
        epsilon: None,
        search: None,
    }
}

fn fmn(p: Norm, step_size: f64, alpha_final: f64) -> AttackConfig {
    AttackConfig {
        mode: Mode::MinNorm(MinNormHeuristic::Fmn),
        p,
        loss: LossKind::Dl,
        init: InitKind::Zero,
        direction: DirectionKind::Norm,
        optimizer: OptimizerKind::Gd,
        scheduler: SchedulerKind::Cos { alpha_final },
        steps: 1000,
        step_size,
        margin: Some(0.0),
        seed: 0,
        epsilon: None,
        search: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_validate() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn unknown_name_is_config_error() {
        assert!(matches!(preset("APGD"), Err(Error::Config(_))));
    }

    #[test]
    fn fgsm_is_single_step() {
        assert_eq!(preset("FGSM").unwrap().steps, 1);
    }

    #[test]
    fn pgd_linf_uses_projected_direction() {
        let cfg = preset("PGD-Linf").unwrap();
        assert_eq!(cfg.direction, DirectionKind::Proj);
        assert_eq!(cfg.p, Norm::LInf);
        assert_eq!(cfg.mode, Mode::FixedBudget);
    }

    #[test]
    fn ddn_is_min_norm() {
        let cfg = preset("DDN").unwrap();
        assert_eq!(cfg.mode, Mode::MinNorm(MinNormHeuristic::Ddn));
        assert_eq!(cfg.p, Norm::L2);
    }

    #[test]
    fn fmn_presets_cover_all_norms() {
        for (name, p) in [
            ("FMN-L0", Norm::L0),
            ("FMN-L1", Norm::L1),
            ("FMN-L2", Norm::L2),
            ("FMN-Linf", Norm::LInf),
        ] {
            let cfg = preset(name).unwrap();
            assert_eq!(cfg.mode, Mode::MinNorm(MinNormHeuristic::Fmn));
            assert_eq!(cfg.p, p);
        }
    }

    #[test]
    fn fixed_budget_presets_leave_epsilon_to_the_search() {
        for name in ["FGSM", "BIM", "PGD-L1", "PGD-L2", "PGD-Linf"] {
            let cfg = preset(name).unwrap();
            assert_eq!(cfg.mode, Mode::FixedBudget);
            assert!(cfg.epsilon.is_none());
            assert!(cfg.search.is_none());
        }
    }
}
