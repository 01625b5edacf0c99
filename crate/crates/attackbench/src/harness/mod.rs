//! Benchmarking loop and optimality reports.
//!
//! `benchmark` drives one attack over a dataset: each sample is hashed (the
//! key under which results are stored, making dataset order irrelevant),
//! pre-checked for free (an already misclassified input costs zero queries
//! and has distance zero), then attacked through a fresh query ledger.
//! Fixed-budget attacks go through the radius search; minimum-norm attacks
//! run directly. `compute_local_optimality` turns a pile of records for one
//! model into the per-attack optimality scores.

pub mod dataset;
pub mod leaderboard;
pub mod record;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha512};

use crate::attack::{run_attack, AttackConfig, Mode};
use crate::benchmodel::BenchModel;
use crate::diffnet::{predict, ModelParams};
use crate::harness::dataset::Dataset;
use crate::harness::record::{AttackRecord, Meta, SampleResult, SCHEMA_VERSION};
use crate::metrics::{self, DistanceTable, Norm};
use crate::search::{search_attack, SearchConfig};
use crate::{Error, Result};

fn hash_digest(x: &[f64]) -> [u8; 64] {
    let mut hasher = Sha512::new();
    hasher.update((x.len() as u32).to_le_bytes());
    for &v in x {
        // Hash the stored width, not the working width, so a saved and
        // reloaded dataset keys to the same records.
        hasher.update((v as f32).to_le_bytes());
    }
    hasher.finalize().into()
}

/// Canonical sample key: SHA-512 over the little-endian dimension (4 bytes)
/// followed by each coordinate as a little-endian 32-bit float, rendered as
/// lowercase hex.
pub fn hash_sample(x: &[f64]) -> String {
    hex(&hash_digest(x))
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Folds the sample digest into the configured seed so per-sample randomness
/// is reproducible no matter how the dataset is ordered.
fn derive_seed(base: u64, digest: &[u8; 64]) -> u64 {
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    base ^ u64::from_le_bytes(first)
}

/// Runs one attack over every sample, in parallel, and returns the per-hash
/// results. A component error on one sample is recorded on that sample (null
/// distance plus a note) rather than aborting the rest.
pub fn benchmark(
    config: &AttackConfig,
    model: &ModelParams,
    data: &Dataset,
    budget: usize,
) -> Result<BTreeMap<String, SampleResult>> {
    config.validate()?;
    if budget == 0 {
        return Err(Error::Config("query budget must be at least 1".into()));
    }
    if model.input_dim() != data.dim() {
        return Err(Error::Dimension(format!(
            "model expects {} features, dataset has {}",
            model.input_dim(),
            data.dim()
        )));
    }
    if data.num_classes() > model.num_classes() {
        return Err(Error::Data(format!(
            "dataset labels span {} classes, model outputs {}",
            data.num_classes(),
            model.num_classes()
        )));
    }
    let search_cfg = match config.mode {
        Mode::FixedBudget => {
            let cfg = config
                .search
                .unwrap_or_else(|| SearchConfig::for_norm(config.p));
            cfg.validate()?;
            Some(cfg)
        }
        Mode::MinNorm(_) => None,
    };

    let results: Vec<(String, SampleResult)> = (0..data.len())
        .into_par_iter()
        .map(|i| run_sample(config, model, data, budget, search_cfg, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(results.into_iter().collect())
}

fn run_sample(
    config: &AttackConfig,
    model: &ModelParams,
    data: &Dataset,
    budget: usize,
    search_cfg: Option<SearchConfig>,
    i: usize,
) -> Result<(String, SampleResult)> {
    let (x, y) = data.get(i);
    let digest = hash_digest(x);
    let hash = hex(&digest);
    // The pre-check is budget-free: a sample the model already gets wrong is
    // adversarial at distance zero without a single query.
    if predict(model, x)? != y {
        return Ok((
            hash,
            SampleResult {
                distance: Some(0.0),
                forwards: 0,
                backwards: 0,
                time_s: 0.0,
                error: None,
            },
        ));
    }
    let mut cfg = config.clone();
    cfg.seed = derive_seed(config.seed, &digest);
    let mut bm = BenchModel::wrap(model, budget, config.p, x.to_vec(), y)?;
    let start = Instant::now();
    let run_result = match &search_cfg {
        Some(scfg) => search_attack(&cfg, &mut bm, scfg).map(|_| ()),
        None => run_attack(&cfg, &mut bm).map(|_| ()),
    };
    let time_s = start.elapsed().as_secs_f64();
    let (forwards, backwards) = bm.num_queries();
    let (distance, error) = match run_result {
        Ok(()) => (bm.take_best().map(|b| b.distance), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok((
        hash,
        SampleResult {
            distance,
            forwards,
            backwards,
            time_s,
            error,
        },
    ))
}

/// Runs [`benchmark`] and wraps the results into a persistable record.
pub fn benchmark_record(
    attack_id: &str,
    model_id: &str,
    config: &AttackConfig,
    model: &ModelParams,
    data: &Dataset,
    budget: usize,
) -> Result<AttackRecord> {
    let records = benchmark(config, model, data, budget)?;
    let search = match config.mode {
        Mode::FixedBudget => Some(
            config
                .search
                .unwrap_or_else(|| SearchConfig::for_norm(config.p)),
        ),
        Mode::MinNorm(_) => None,
    };
    Ok(AttackRecord {
        schema_version: SCHEMA_VERSION,
        attack: attack_id.to_string(),
        model: model_id.to_string(),
        norm: config.p,
        budget,
        search,
        records,
        meta: Meta::capture(),
    })
}

/// One attack's share of an optimality report.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOptimality {
    pub attack: String,
    pub aurec: f64,
    pub local_optimality: f64,
    pub mean_forwards: f64,
    pub mean_backwards: f64,
    pub mean_time_s: f64,
}

/// Optimality of every attack evaluated against one model under one norm.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    pub model: String,
    pub norm: Norm,
    pub epsilon_zero: f64,
    /// Clean accuracy: fraction of samples not misclassified outright.
    pub rho: f64,
    pub aurec_star: f64,
    /// True when even the ensemble failed on some sample; those samples are
    /// clamped to `epsilon_zero` in every area.
    pub ensemble_has_failures: bool,
    pub attacks: Vec<AttackOptimality>,
}

/// Computes per-attack local optimality for records that share one model and
/// one norm. All records must cover exactly the same sample set.
pub fn compute_local_optimality(records: &[AttackRecord]) -> Result<OptimalityReport> {
    let first = records
        .first()
        .ok_or_else(|| Error::Data("no records to score".into()))?;
    for r in records {
        r.validate()?;
        if r.model != first.model {
            return Err(Error::Data(format!(
                "record {:?} is for model {:?}, expected {:?}",
                r.attack, r.model, first.model
            )));
        }
        if r.norm != first.norm {
            return Err(Error::Data(format!(
                "record {:?} uses norm {}, expected {}",
                r.attack, r.norm, first.norm
            )));
        }
        if r.records.len() != first.records.len()
            || !r.records.keys().eq(first.records.keys())
        {
            return Err(Error::Data(format!(
                "record {:?} covers a different sample set than {:?}",
                r.attack, first.attack
            )));
        }
    }
    let tables: Vec<DistanceTable> = records
        .iter()
        .map(|r| r.distance_table())
        .collect::<Result<_>>()?;
    let refs: Vec<&DistanceTable> = tables.iter().collect();
    let best = metrics::ensemble_best(&refs)?;
    let eps0 = metrics::epsilon_zero(&best)?;
    let rho = best.clean_accuracy()?;
    let aurec_star = metrics::aurec(&best, eps0)?;
    let mut attacks = Vec::with_capacity(records.len());
    for (r, table) in records.iter().zip(&tables) {
        let area = metrics::aurec(table, eps0)?;
        let lo = metrics::local_optimality(area, aurec_star, rho, eps0)?;
        attacks.push(AttackOptimality {
            attack: r.attack.clone(),
            aurec: area,
            local_optimality: lo,
            mean_forwards: r.mean_forwards(),
            mean_backwards: r.mean_backwards(),
            mean_time_s: r.mean_time_s(),
        });
    }
    Ok(OptimalityReport {
        model: first.model.clone(),
        norm: first.norm,
        epsilon_zero: eps0,
        rho,
        aurec_star,
        ensemble_has_failures: best.has_failures(),
        attacks,
    })
}

/// Checks a finished record for samples that never produced an adversarial
/// example at any perturbation size. Returns a warning message when the
/// residual is nonzero: on an undefended model that usually means the attack
/// is wired up wrong, and success rates computed from such a record will
/// paint a misleading picture.
pub fn residual_warning(record: &AttackRecord) -> Option<String> {
    let total = record.records.len();
    let unsolved = record
        .records
        .values()
        .filter(|r| r.distance.is_none())
        .count();
    if total == 0 || unsolved == 0 {
        return None;
    }
    Some(format!(
        "{unsolved} of {total} samples never yielded an adversarial example at any \
         perturbation size; this usually means the attack is misconfigured for the \
         model, and success rates computed from this record will be unreliable"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::preset;
    use crate::diffnet::{Activation, DenseLayer};

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
    fn dim_zero_hash_matches_a_direct_digest() {
        let expected = hex(&Sha512::digest([0u8; 4]));
        assert_eq!(hash_sample(&[]), expected);
        assert_eq!(hash_sample(&[]).len(), 128);
    }

    #[test]
    fn hashing_is_deterministic_and_sensitive() {
        let x = vec![0.25, 0.75];
        assert_eq!(hash_sample(&x), hash_sample(&x));
        let mut y = x.clone();
        // One ULP of the stored f32 width flips the digest.
        y[1] = f64::from(f32::from_bits(0.75f32.to_bits() + 1));
        assert_ne!(hash_sample(&x), hash_sample(&y));
    }

    #[test]
    fn hashing_uses_stored_width() {
        // Differences below f32 resolution collapse to the same key.
        assert_eq!(hash_sample(&[0.1]), hash_sample(&[0.1 + 1e-12]));
        assert_ne!(hash_sample(&[0.1]), hash_sample(&[0.11]));
    }

    #[test]
    fn derived_seeds_differ_per_sample() {
        let a = derive_seed(7, &hash_digest(&[0.1, 0.2]));
        let b = derive_seed(7, &hash_digest(&[0.3, 0.4]));
        assert_ne!(a, b);
        assert_eq!(a, derive_seed(7, &hash_digest(&[0.1, 0.2])));
    }

    #[test]
    fn misclassified_sample_costs_nothing() {
        let model = linear_model();
        // (0.1, 0.1) is predicted class 1; label it 0 so the pre-check fires.
        let data = Dataset::new(vec![vec![0.1, 0.1]], vec![0]).unwrap();
        let mut cfg = preset("FGSM").unwrap();
        cfg.search = Some(SearchConfig {
            steps: 10,
            eps_init: 0.25,
        });
        let out = benchmark(&cfg, &model, &data, 2000).unwrap();
        let sample = out.values().next().unwrap();
        assert_eq!(sample.distance, Some(0.0));
        assert_eq!((sample.forwards, sample.backwards), (0, 0));
        assert_eq!(sample.time_s, 0.0);
    }

    #[test]
    fn results_are_keyed_by_hash_not_order() {
        let model = linear_model();
        let rows = vec![vec![0.8, 0.6], vec![0.7, 0.9], vec![0.9, 0.8]];
        let labels = vec![0, 0, 0];
        let forward = Dataset::new(rows.clone(), labels.clone()).unwrap();
        let reversed = Dataset::new(
            rows.into_iter().rev().collect(),
            labels.into_iter().rev().collect(),
        )
        .unwrap();
        let cfg = preset("FMN-L2").unwrap();
        let a = benchmark(&cfg, &model, &forward, 200).unwrap();
        let b = benchmark(&cfg, &model, &reversed, 200).unwrap();
        let strip = |m: &BTreeMap<String, SampleResult>| {
            m.iter()
                .map(|(h, s)| (h.clone(), s.distance, s.forwards, s.backwards))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn full_budget_attack_reports_exact_query_split() {
        let model = linear_model();
        let data = Dataset::new(vec![vec![0.8, 0.6]], vec![0]).unwrap();
        let cfg = preset("DDN").unwrap();
        let out = benchmark(&cfg, &model, &data, 2000).unwrap();
        let sample = out.values().next().unwrap();
        assert_eq!((sample.forwards, sample.backwards), (1000, 1000));
        assert!(sample.distance.is_some());
    }

    #[test]
    fn benchmark_record_carries_ids_and_search() {
        let model = linear_model();
        let data = Dataset::new(vec![vec![0.8, 0.6]], vec![0]).unwrap();
        let cfg = preset("FGSM").unwrap();
        let rec = benchmark_record("FGSM", "toy", &cfg, &model, &data, 500).unwrap();
        assert_eq!(rec.attack, "FGSM");
        assert_eq!(rec.model, "toy");
        assert_eq!(rec.budget, 500);
        assert_eq!(
            rec.search,
            Some(SearchConfig::for_norm(Norm::LInf))
        );
        rec.validate().unwrap();
        let ddn = benchmark_record("DDN", "toy", &preset("DDN").unwrap(), &model, &data, 500)
            .unwrap();
        assert_eq!(ddn.search, None);
    }

    fn record_with(attack: &str, distances: &[(&str, Option<f64>)]) -> AttackRecord {
        let mut records = BTreeMap::new();
        for (hash, d) in distances {
            records.insert(
                hash.to_string(),
                SampleResult {
                    distance: *d,
                    forwards: 10,
                    backwards: 10,
                    time_s: 0.5,
                    error: None,
                },
            );
        }
        AttackRecord {
            schema_version: SCHEMA_VERSION,
            attack: attack.into(),
            model: "m".into(),
            norm: Norm::L2,
            budget: 100,
            search: None,
            records,
            meta: Meta {
                timestamp: "t".into(),
                host: "h".into(),
            },
        }
    }

    #[test]
    fn single_attack_is_its_own_ensemble() {
        let rec = record_with("solo", &[("h1", Some(0.5)), ("h2", Some(1.0))]);
        let report = compute_local_optimality(std::slice::from_ref(&rec)).unwrap();
        assert_eq!(report.attacks[0].local_optimality, 1.0);
        assert_eq!(report.epsilon_zero, 1.0);
        assert_eq!(report.rho, 1.0);
    }

    #[test]
    fn dominated_attack_scores_below_the_dominator() {
        let strong = record_with("strong", &[("h1", Some(0.2)), ("h2", Some(0.4))]);
        let weak = record_with("weak", &[("h1", Some(0.6)), ("h2", Some(0.4))]);
        let report = compute_local_optimality(&[strong, weak]).unwrap();
        let lo = |name: &str| {
            report
                .attacks
                .iter()
                .find(|a| a.attack == name)
                .unwrap()
                .local_optimality
        };
        assert_eq!(lo("strong"), 1.0);
        assert!(lo("weak") < 1.0);
    }

    #[test]
    fn all_failure_attack_scores_zero() {
        let good = record_with("good", &[("h1", Some(0.5)), ("h2", Some(0.25))]);
        let bad = record_with("bad", &[("h1", None), ("h2", None)]);
        let report = compute_local_optimality(&[good, bad]).unwrap();
        let bad_lo = report
            .attacks
            .iter()
            .find(|a| a.attack == "bad")
            .unwrap()
            .local_optimality;
        assert_eq!(bad_lo, 0.0);
        assert!(!report.ensemble_has_failures);
    }

    #[test]
    fn mismatched_hash_sets_name_the_offender() {
        let a = record_with("a", &[("h1", Some(0.5)), ("h2", Some(1.0))]);
        let b = record_with("b", &[("h1", Some(0.5)), ("h3", Some(1.0))]);
        let err = compute_local_optimality(&[a, b]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("\"b\""), "{msg}");
    }

    #[test]
    fn mixed_norms_are_rejected() {
        let a = record_with("a", &[("h1", Some(0.5))]);
        let mut b = record_with("b", &[("h1", Some(0.5))]);
        b.norm = Norm::LInf;
        assert!(compute_local_optimality(&[a, b]).is_err());
    }

    #[test]
    fn residual_warning_fires_only_on_unsolved_samples() {
        let clean = record_with("a", &[("h1", Some(0.5)), ("h2", Some(0.0))]);
        assert!(residual_warning(&clean).is_none());
        let partial = record_with("a", &[("h1", Some(0.5)), ("h2", None)]);
        let msg = residual_warning(&partial).unwrap();
        assert!(msg.contains("1 of 2"), "{msg}");
    }
}
