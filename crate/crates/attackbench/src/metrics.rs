//! Distances, robustness curves, and the optimality metrics used for ranking.
//!
//! Every attack run reduces to a table of per-sample perturbation sizes
//! (`None` marks a sample the attack never broke). The robust accuracy at
//! threshold eps is the fraction of samples whose recorded distance exceeds
//! eps; integrating that step function from zero to the ensemble's breaking
//! point eps0 gives the area metric, computed here in closed form as the mean
//! of `min(d, eps0)` with failures clamped to eps0. Local optimality rescales
//! an attack's area between the worst case (clean accuracy times eps0) and
//! the per-sample-best ensemble; global optimality averages local optimality
//! over models.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Threat-model norm. Serializes as the JSON number 0, 1, or 2, and as the
/// string `"inf"` for the supremum norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Norm {
    L0,
    L1,
    L2,
    LInf,
}

impl Norm {
    pub fn parse(text: &str) -> Result<Norm> {
        match text.trim().to_ascii_lowercase().as_str() {
            "0" | "l0" => Ok(Norm::L0),
            "1" | "l1" => Ok(Norm::L1),
            "2" | "l2" => Ok(Norm::L2),
            "inf" | "linf" => Ok(Norm::LInf),
            other => Err(Error::Config(format!(
                "unknown norm {other:?}, expected 0, 1, 2, or inf"
            ))),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Norm::L0 => write!(f, "l0"),
            Norm::L1 => write!(f, "l1"),
            Norm::L2 => write!(f, "l2"),
            Norm::LInf => write!(f, "linf"),
        }
    }
}

impl Serialize for Norm {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Norm::L0 => serializer.serialize_u8(0),
            Norm::L1 => serializer.serialize_u8(1),
            Norm::L2 => serializer.serialize_u8(2),
            Norm::LInf => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Norm {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Norm, D::Error> {
        struct NormVisitor;
        impl Visitor<'_> for NormVisitor {
            type Value = Norm;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "0, 1, 2, or \"inf\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Norm, E> {
                match v {
                    0 => Ok(Norm::L0),
                    1 => Ok(Norm::L1),
                    2 => Ok(Norm::L2),
                    other => Err(E::custom(format!("unknown norm {other}"))),
                }
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Norm, E> {
                u64::try_from(v)
                    .map_err(|_| E::custom(format!("unknown norm {v}")))
                    .and_then(|v| self.visit_u64(v))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Norm, E> {
                Norm::parse(v).map_err(|e| E::custom(e.to_string()))
            }
        }
        deserializer.deserialize_any(NormVisitor)
    }
}

/// p-norm of the difference `b - a`. The 0-"norm" counts coordinates that
/// differ exactly.
pub fn distance(a: &[f64], b: &[f64], norm: Norm) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "distance between vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(lp_norm_diff(a, b, norm))
}

fn lp_norm_diff(a: &[f64], b: &[f64], norm: Norm) -> f64 {
    match norm {
        Norm::L0 => a.iter().zip(b).filter(|(x, y)| x != y).count() as f64,
        Norm::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        Norm::L2 => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        Norm::LInf => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max),
    }
}

/// p-norm of a single vector.
pub fn lp_norm(v: &[f64], norm: Norm) -> f64 {
    match norm {
        Norm::L0 => v.iter().filter(|x| **x != 0.0).count() as f64,
        Norm::L1 => v.iter().map(|x| x.abs()).sum(),
        Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        Norm::LInf => v.iter().map(|x| x.abs()).fold(0.0, f64::max),
    }
}

/// Per-sample perturbation sizes for one attack on one model, keyed by the
/// sample hash. `None` records a sample the attack never made adversarial.
/// A distance of exactly zero means the model misclassified the clean sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    norm: Norm,
    entries: BTreeMap<String, Option<f64>>,
}

impl DistanceTable {
    pub fn new(norm: Norm) -> Self {
        DistanceTable {
            norm,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, hash: impl Into<String>, distance: Option<f64>) -> Result<()> {
        if let Some(d) = distance {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::Data(format!(
                    "distance must be finite and non-negative, got {d}"
                )));
            }
        }
        self.entries.insert(hash.into(), distance);
        Ok(())
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, Option<f64>)> {
        self.entries.iter().map(|(h, d)| (h.as_str(), *d))
    }

    pub fn hashes(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn has_failures(&self) -> bool {
        self.entries.values().any(Option::is_none)
    }

    /// Fraction of samples the clean model classifies correctly: those whose
    /// recorded distance is positive (failures count, they are certainly not
    /// clean misclassifications).
    pub fn clean_accuracy(&self) -> Result<f64> {
        self.require_nonempty()?;
        let correct = self
            .entries
            .values()
            .filter(|d| d.is_none_or(|d| d > 0.0))
            .count();
        Ok(correct as f64 / self.entries.len() as f64)
    }

    fn require_nonempty(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Data("distance table is empty".into()));
        }
        Ok(())
    }
}

/// Attack success rate at threshold `eps`: the fraction of samples with a
/// recorded distance `d <= eps`. Failures never count, including at infinity.
pub fn asr(table: &DistanceTable, eps: f64) -> Result<f64> {
    table.require_nonempty()?;
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::Config(format!("asr threshold must be >= 0, got {eps}")));
    }
    let hits = table
        .entries
        .values()
        .filter(|d| d.is_some_and(|d| d <= eps))
        .count();
    Ok(hits as f64 / table.entries.len() as f64)
}

/// Robust accuracy at threshold `eps`: `1 - asr(eps)`.
pub fn robust_accuracy(table: &DistanceTable, eps: f64) -> Result<f64> {
    Ok(1.0 - asr(table, eps)?)
}

/// Area under the robust-accuracy curve from 0 to `eps0`, in closed form:
/// the mean of `min(d, eps0)` with failures contributing `eps0`.
pub fn aurec(table: &DistanceTable, eps0: f64) -> Result<f64> {
    table.require_nonempty()?;
    if !eps0.is_finite() || eps0 <= 0.0 {
        return Err(Error::Config(format!(
            "aurec upper limit must be positive and finite, got {eps0}"
        )));
    }
    let sum: f64 = table
        .entries
        .values()
        .map(|d| d.map_or(eps0, |d| d.min(eps0)))
        .sum();
    Ok(sum / table.entries.len() as f64)
}

/// Per-sample best over several attacks: the pointwise minimum distance,
/// a failure only where every attack failed. All tables must share the norm
/// and the exact hash set.
pub fn ensemble_best(tables: &[&DistanceTable]) -> Result<DistanceTable> {
    let first = tables
        .first()
        .ok_or_else(|| Error::Data("ensemble of zero attacks".into()))?;
    for t in tables {
        if t.norm != first.norm {
            return Err(Error::Data(format!(
                "ensemble mixes norms {} and {}",
                first.norm, t.norm
            )));
        }
        if t.entries.len() != first.entries.len()
            || !t.entries.keys().eq(first.entries.keys())
        {
            return Err(Error::Data(
                "ensemble tables cover different sample sets".into(),
            ));
        }
    }
    let mut best = DistanceTable::new(first.norm);
    for hash in first.entries.keys() {
        let mut min: Option<f64> = None;
        for t in tables {
            if let Some(d) = t.entries[hash] {
                min = Some(min.map_or(d, |m: f64| m.min(d)));
            }
        }
        best.entries.insert(hash.clone(), min);
    }
    Ok(best)
}

/// Breaking point of an ensemble: the largest finite recorded distance, i.e.
/// the smallest threshold at which its robust accuracy reaches zero. Samples
/// that still fail everywhere make that threshold unreachable; they are
/// reported separately by [`DistanceTable::has_failures`] and clamp to this
/// value in [`aurec`].
pub fn epsilon_zero(best: &DistanceTable) -> Result<f64> {
    best.require_nonempty()?;
    let max = best
        .entries
        .values()
        .filter_map(|d| *d)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Config(
            "every sample failed in the ensemble; no finite breaking point".into(),
        ));
    }
    Ok(max)
}

const LO_SLACK: f64 = 1e-12;

/// Local optimality of one attack against the ensemble best, on [0, 1]:
/// `(rho*eps0 - aurec_i) / (rho*eps0 - aurec_star)`.
pub fn local_optimality(aurec_i: f64, aurec_star: f64, rho: f64, eps0: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!("clean accuracy {rho} outside [0, 1]")));
    }
    if !eps0.is_finite() || eps0 <= 0.0 {
        return Err(Error::Config(format!("breaking point {eps0} must be positive")));
    }
    let worst = rho * eps0;
    if aurec_star > aurec_i + LO_SLACK || aurec_i > worst + LO_SLACK || aurec_star < -LO_SLACK {
        return Err(Error::Data(format!(
            "areas out of order: best {aurec_star}, attack {aurec_i}, worst case {worst}"
        )));
    }
    let denom = worst - aurec_star;
    if denom <= 0.0 {
        return Err(Error::Degenerate(
            "best ensemble already matches the worst case; optimality undefined".into(),
        ));
    }
    let lo = (worst - aurec_i) / denom;
    Ok(lo.clamp(0.0, 1.0))
}

/// Global optimality: the arithmetic mean of per-model local optimalities.
pub fn global_optimality(locals: &[f64]) -> Result<f64> {
    if locals.is_empty() {
        return Err(Error::Data("global optimality over zero models".into()));
    }
    Ok(locals.iter().sum::<f64>() / locals.len() as f64)
}

/// One row of a ranking: an attack with its score and mean per-sample cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub attack: String,
    pub go: f64,
    pub mean_forwards: f64,
    pub mean_backwards: f64,
    pub mean_time_s: f64,
    /// Number of models the score averages over.
    pub models: usize,
}

/// Orders attacks by descending score; ties fall back to lower mean query
/// count (forwards + backwards), then to the attack name.
pub fn rank(mut entries: Vec<RankEntry>) -> Vec<RankEntry> {
    entries.sort_by(|a, b| {
        b.go
            .partial_cmp(&a.go)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                let qa = a.mean_forwards + a.mean_backwards;
                let qb = b.mean_forwards + b.mean_backwards;
                qa.partial_cmp(&qb).unwrap_or(std::cmp::Ordering::Equal)
            })
            .then_with(|| a.attack.cmp(&b.attack))
    });
    entries
}

/// A corner of the robustness curve step function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub epsilon: f64,
    pub robust_accuracy: f64,
}

/// Robust-accuracy curve sampled at zero, every distinct recorded distance up
/// to `eps0`, and `eps0` itself. The curve is right-continuous; plotting
/// these corners as a step function reproduces it exactly.
pub fn robustness_curve(table: &DistanceTable, eps0: f64) -> Result<Vec<CurvePoint>> {
    table.require_nonempty()?;
    if !eps0.is_finite() || eps0 <= 0.0 {
        return Err(Error::Config(format!(
            "curve upper limit must be positive and finite, got {eps0}"
        )));
    }
    let mut thresholds: Vec<f64> = table
        .entries
        .values()
        .filter_map(|d| *d)
        .filter(|d| *d <= eps0)
        .collect();
    thresholds.push(0.0);
    thresholds.push(eps0);
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    thresholds
        .into_iter()
        .map(|eps| {
            Ok(CurvePoint {
                epsilon: eps,
                robust_accuracy: robust_accuracy(table, eps)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(distances: &[Option<f64>]) -> DistanceTable {
        let mut t = DistanceTable::new(Norm::L2);
        for (i, d) in distances.iter().enumerate() {
            t.insert(format!("{i:03}"), *d).unwrap();
        }
        t
    }

    #[test]
    fn distance_examples() {
        let x = [0.0, 0.0, 0.0, 0.0];
        let y = [0.0, 0.1, 0.0, -0.2];
        assert_eq!(distance(&x, &y, Norm::L0).unwrap(), 2.0);
        assert!((distance(&x, &y, Norm::L1).unwrap() - 0.3).abs() < 1e-15);
        assert!((distance(&x, &y, Norm::L2).unwrap() - 0.05f64.sqrt()).abs() < 1e-15);
        assert_eq!(distance(&x, &y, Norm::LInf).unwrap(), 0.2);
    }

    #[test]
    fn l0_counts_exact_changes_only() {
        let x = [0.5, 0.5];
        // One ULP is still a change; an unrepresentable nudge is not.
        let y = [0.5, f64::from_bits(0.5f64.to_bits() + 1)];
        assert_eq!(distance(&x, &y, Norm::L0).unwrap(), 1.0);
        let z = [0.5, 0.5 + 1e-300];
        assert_eq!(distance(&x, &z, Norm::L0).unwrap(), 0.0);
        assert_eq!(distance(&x, &x, Norm::L0).unwrap(), 0.0);
    }

    #[test]
    fn distance_rejects_length_mismatch() {
        assert!(matches!(
            distance(&[0.0], &[0.0, 1.0], Norm::L2),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn asr_counts_successes_at_threshold() {
        let t = table(&[Some(0.0), Some(0.4), Some(1.2)]);
        assert!((asr(&t, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((asr(&t, f64::INFINITY).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(asr(&t, 0.0).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn asr_never_counts_failures() {
        let t = table(&[None, None]);
        assert_eq!(asr(&t, f64::INFINITY).unwrap(), 0.0);
    }

    #[test]
    fn asr_rejects_negative_threshold() {
        let t = table(&[Some(0.1)]);
        assert!(matches!(asr(&t, -0.1), Err(Error::Config(_))));
    }

    #[test]
    fn aurec_closed_form() {
        let t = table(&[Some(0.5), Some(1.0)]);
        assert!((aurec(&t, 1.0).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn aurec_clamps_failures_to_limit() {
        let t = table(&[Some(0.5), None]);
        assert!((aurec(&t, 1.0).unwrap() - 0.75).abs() < 1e-15);
    }

    /// Independent oracle: integrate the right-continuous step function
    /// piecewise between consecutive thresholds.
    fn aurec_by_steps(t: &DistanceTable, eps0: f64) -> f64 {
        let mut cuts: Vec<f64> = t
            .entries()
            .filter_map(|(_, d)| d)
            .filter(|d| *d < eps0)
            .collect();
        cuts.push(0.0);
        cuts.push(eps0);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let mut area = 0.0;
        for w in cuts.windows(2) {
            area += robust_accuracy(t, w[0]).unwrap() * (w[1] - w[0]);
        }
        area
    }

    #[test]
    fn aurec_matches_step_integration() {
        let t = table(&[Some(0.0), Some(0.3), Some(0.3), Some(0.9), None]);
        let eps0 = 0.9;
        assert!((aurec(&t, eps0).unwrap() - aurec_by_steps(&t, eps0)).abs() < 1e-12);
    }

    #[test]
    fn ensemble_takes_pointwise_minimum() {
        let a = table(&[Some(0.5), None, Some(1.0)]);
        let b = table(&[Some(0.7), Some(0.2), None]);
        let best = ensemble_best(&[&a, &b]).unwrap();
        let d: Vec<Option<f64>> = best.entries().map(|(_, d)| d).collect();
        assert_eq!(d, vec![Some(0.5), Some(0.2), Some(1.0)]);
    }

    #[test]
    fn ensemble_fails_only_where_all_fail() {
        let a = table(&[None, None]);
        let b = table(&[Some(0.3), None]);
        let best = ensemble_best(&[&a, &b]).unwrap();
        let d: Vec<Option<f64>> = best.entries().map(|(_, d)| d).collect();
        assert_eq!(d, vec![Some(0.3), None]);
    }

    #[test]
    fn ensemble_rejects_mismatched_hashes() {
        let a = table(&[Some(0.5)]);
        let mut b = DistanceTable::new(Norm::L2);
        b.insert("zzz", Some(0.1)).unwrap();
        assert!(matches!(ensemble_best(&[&a, &b]), Err(Error::Data(_))));
    }

    #[test]
    fn epsilon_zero_is_max_finite_distance() {
        let t = table(&[Some(0.0), Some(0.4), Some(1.2)]);
        assert_eq!(epsilon_zero(&t).unwrap(), 1.2);
        let clamped = table(&[Some(0.4), None]);
        assert_eq!(epsilon_zero(&clamped).unwrap(), 0.4);
        assert!(clamped.has_failures());
    }

    #[test]
    fn epsilon_zero_rejects_total_failure() {
        let t = table(&[None, None]);
        assert!(matches!(epsilon_zero(&t), Err(Error::Config(_))));
    }

    #[test]
    fn local_optimality_fixture() {
        let lo = local_optimality(1.0, 0.5, 0.95, 2.5).unwrap();
        assert!((lo - 1.375 / 1.875).abs() < 1e-12);
        assert!((lo - 0.73333).abs() < 1e-5);
    }

    #[test]
    fn local_optimality_endpoints() {
        assert_eq!(local_optimality(0.5, 0.5, 0.95, 2.5).unwrap(), 1.0);
        // An attack at the worst case scores exactly zero.
        assert_eq!(local_optimality(2.375, 0.5, 0.95, 2.5).unwrap(), 0.0);
    }

    #[test]
    fn local_optimality_rejects_disorder() {
        assert!(matches!(
            local_optimality(0.4, 0.5, 0.95, 2.5),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            local_optimality(0.5, 0.5, 1.0, 0.5),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn global_optimality_is_mean() {
        assert!((global_optimality(&[0.8, 1.0]).unwrap() - 0.9).abs() < 1e-15);
        assert!(matches!(global_optimality(&[]), Err(Error::Data(_))));
    }

    #[test]
    fn rank_orders_by_score_queries_name() {
        let e = |name: &str, go: f64, q: f64| RankEntry {
            attack: name.into(),
            go,
            mean_forwards: q,
            mean_backwards: 0.0,
            mean_time_s: 0.0,
            models: 1,
        };
        let ranked = rank(vec![
            e("c", 0.5, 10.0),
            e("a", 0.9, 20.0),
            e("b", 0.9, 10.0),
            e("d", 0.9, 10.0),
        ]);
        let names: Vec<&str> = ranked.iter().map(|r| r.attack.as_str()).collect();
        assert_eq!(names, vec!["b", "d", "a", "c"]);
    }

    #[test]
    fn curve_corners() {
        let t = table(&[Some(0.0), Some(0.4), Some(1.2)]);
        let curve = robustness_curve(&t, 1.2).unwrap();
        let pts: Vec<(f64, f64)> = curve
            .iter()
            .map(|p| (p.epsilon, p.robust_accuracy))
            .collect();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[0].0, 0.0);
        assert!((pts[0].1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(pts[1].0, 0.4);
        assert!((pts[1].1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(pts[2].0, 1.2);
        assert_eq!(pts[2].1, 0.0);
    }

    #[test]
    fn curve_is_monotone_nonincreasing() {
        let t = table(&[Some(0.1), Some(0.5), None, Some(0.5), Some(0.9)]);
        let curve = robustness_curve(&t, 0.9).unwrap();
        for w in curve.windows(2) {
            assert!(w[1].robust_accuracy <= w[0].robust_accuracy);
        }
    }

    #[test]
    fn norm_serde_round_trip() {
        for (norm, json) in [
            (Norm::L0, "0"),
            (Norm::L1, "1"),
            (Norm::L2, "2"),
            (Norm::LInf, "\"inf\""),
        ] {
            assert_eq!(serde_json::to_string(&norm).unwrap(), json);
            let back: Norm = serde_json::from_str(json).unwrap();
            assert_eq!(back, norm);
        }
    }
}
