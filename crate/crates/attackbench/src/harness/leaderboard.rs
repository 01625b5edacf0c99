//! Record stores and derived leaderboards.
//!
//! A store is a directory of record files plus a derived `leaderboard.json`.
//! Each (model, norm) pair forms a group scored by local optimality against
//! the group's ensemble; per-norm rankings then average each attack's scores
//! across models into its global optimality. Merging a record never re-runs
//! anything: it validates the newcomer against the store's sample sets,
//! writes it under a canonical name, and recomputes the derived file under
//! an exclusive lock.

use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::harness::record::{read_record, write_record, AttackRecord};
use crate::harness::{compute_local_optimality, OptimalityReport};
use crate::metrics::{rank, Norm, RankEntry};
use crate::{Error, Result};

pub const LEADERBOARD_FILE: &str = "leaderboard.json";
const LOCK_FILE: &str = ".leaderboard.lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub attack: String,
    /// Optimality of this attack within the group (its local optimality;
    /// equal to its global optimality when the group is the only one).
    pub go: f64,
    pub aurec: f64,
    pub mean_forwards: f64,
    pub mean_backwards: f64,
    pub mean_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardGroup {
    pub model: String,
    pub norm: Norm,
    pub epsilon_zero: f64,
    pub rho: f64,
    pub aurec_star: f64,
    pub entries: Vec<GroupEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRanking {
    pub norm: Norm,
    pub entries: Vec<RankEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub schema_version: u32,
    pub groups: Vec<LeaderboardGroup>,
    pub rankings: Vec<NormRanking>,
}

/// Reads every record file in the store, skipping the derived leaderboard
/// and hidden files. Results are ordered by file name.
pub fn scan_records(dir: &Path) -> Result<Vec<(PathBuf, AttackRecord)>> {
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = match path.file_name().and_then(|n| n.to_str()) {
            Some(n) => n,
            None => continue,
        };
        if !path.is_file() || name == LEADERBOARD_FILE || name.starts_with('.') {
            continue;
        }
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            paths.push(path);
        }
    }
    paths.sort();
    let mut records = Vec::with_capacity(paths.len());
    for path in paths {
        let record = read_record(&path)?;
        records.push((path, record));
    }
    Ok(records)
}

/// One model group's contribution to an attack's cross-model ranking:
/// local optimality, mean forwards, mean backwards, mean time.
type GroupSample = (f64, f64, f64, f64);

/// Scores every (model, norm) group and derives per-norm rankings.
pub fn build_leaderboard(records: &[AttackRecord]) -> Result<Leaderboard> {
    if records.is_empty() {
        return Err(Error::Data("no records to build a leaderboard from".into()));
    }
    let mut grouped: BTreeMap<(String, String), Vec<AttackRecord>> = BTreeMap::new();
    for r in records {
        grouped
            .entry((r.model.clone(), r.norm.to_string()))
            .or_default()
            .push(r.clone());
    }
    let mut groups = Vec::with_capacity(grouped.len());
    let mut across: BTreeMap<String, (Norm, BTreeMap<String, Vec<GroupSample>>)> = BTreeMap::new();
    for ((_, norm_key), group_records) in &grouped {
        let report = compute_local_optimality(group_records)?;
        let per_norm = across
            .entry(norm_key.clone())
            .or_insert_with(|| (report.norm, BTreeMap::new()));
        for a in &report.attacks {
            per_norm.1.entry(a.attack.clone()).or_default().push((
                a.local_optimality,
                a.mean_forwards,
                a.mean_backwards,
                a.mean_time_s,
            ));
        }
        groups.push(group_from(report));
    }
    let mut rankings = Vec::with_capacity(across.len());
    for (_, (norm, attacks)) in across {
        let mut entries = Vec::with_capacity(attacks.len());
        for (attack, scores) in attacks {
            let n = scores.len() as f64;
            entries.push(RankEntry {
                attack,
                go: scores.iter().map(|s| s.0).sum::<f64>() / n,
                mean_forwards: scores.iter().map(|s| s.1).sum::<f64>() / n,
                mean_backwards: scores.iter().map(|s| s.2).sum::<f64>() / n,
                mean_time_s: scores.iter().map(|s| s.3).sum::<f64>() / n,
                models: scores.len(),
            });
        }
        rankings.push(NormRanking {
            norm,
            entries: rank(entries),
        });
    }
    Ok(Leaderboard {
        schema_version: crate::harness::record::SCHEMA_VERSION,
        groups,
        rankings,
    })
}

fn group_from(report: OptimalityReport) -> LeaderboardGroup {
    let mut entries: Vec<GroupEntry> = report
        .attacks
        .into_iter()
        .map(|a| GroupEntry {
            attack: a.attack,
            go: a.local_optimality,
            aurec: a.aurec,
            mean_forwards: a.mean_forwards,
            mean_backwards: a.mean_backwards,
            mean_time_s: a.mean_time_s,
        })
        .collect();
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
    LeaderboardGroup {
        model: report.model,
        norm: report.norm,
        epsilon_zero: report.epsilon_zero,
        rho: report.rho,
        aurec_star: report.aurec_star,
        entries,
    }
}

pub fn write_leaderboard(path: &Path, board: &Leaderboard) -> Result<()> {
    let mut body = serde_json::to_string_pretty(board)?;
    body.push('\n');
    std::fs::write(path, body)?;
    Ok(())
}

pub fn read_leaderboard(path: &Path) -> Result<Leaderboard> {
    let body = std::fs::read_to_string(path)?;
    serde_json::from_str(&body).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

struct LockGuard {
    path: PathBuf,
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn acquire_lock(dir: &Path) -> Result<LockGuard> {
    let path = dir.join(LOCK_FILE);
    match std::fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&path)
    {
        Ok(_) => Ok(LockGuard { path }),
        Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(Error::Io(std::io::Error::new(
            ErrorKind::WouldBlock,
            format!(
                "store {} is locked by another merge (stale? remove {})",
                dir.display(),
                path.display()
            ),
        ))),
        Err(e) => Err(Error::Io(e)),
    }
}

fn sanitize(part: &str) -> String {
    part.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '-'
            }
        })
        .collect()
}

/// Canonical file name for a record inside a store.
pub fn record_file_name(record: &AttackRecord) -> String {
    format!(
        "{}__{}__{}.json",
        sanitize(&record.attack),
        sanitize(&record.model),
        record.norm
    )
}

/// Adds one record to the store and recomputes the leaderboard.
///
/// The newcomer must cover exactly the sample set the store already holds
/// for its (model, norm) group. A record with the same attack, model, and
/// norm replaces its previous version, so re-merging the same file is
/// idempotent. Existing records are only read, never re-run.
pub fn merge_record(store: &Path, record: &AttackRecord) -> Result<Leaderboard> {
    std::fs::create_dir_all(store)?;
    let _lock = acquire_lock(store)?;
    record.validate()?;
    let existing = scan_records(store)?;
    for (path, old) in &existing {
        if old.model == record.model
            && old.norm == record.norm
            && !old.records.keys().eq(record.records.keys())
        {
            return Err(Error::Data(format!(
                "incoming record {:?} covers a different sample set than {}",
                record.attack,
                path.display()
            )));
        }
    }
    let target = store.join(record_file_name(record));
    write_record(&target, record)?;

    let mut all: Vec<AttackRecord> = existing
        .into_iter()
        .filter(|(path, _)| *path != target)
        .map(|(_, r)| r)
        .collect();
    all.push(record.clone());
    let board = build_leaderboard(&all)?;
    write_leaderboard(&store.join(LEADERBOARD_FILE), &board)?;
    Ok(board)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::record::{Meta, SampleResult, SCHEMA_VERSION};
    use std::collections::BTreeMap;

    fn record_with(attack: &str, model: &str, distances: &[(&str, Option<f64>)]) -> AttackRecord {
        let mut records = BTreeMap::new();
        for (hash, d) in distances {
            records.insert(
                hash.to_string(),
                SampleResult {
                    distance: *d,
                    forwards: 20,
                    backwards: 10,
                    time_s: 0.25,
                    error: None,
                },
            );
        }
        AttackRecord {
            schema_version: SCHEMA_VERSION,
            attack: attack.into(),
            model: model.into(),
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
    fn empty_store_merge_creates_single_entry_board() {
        let dir = tempfile::tempdir().unwrap();
        let rec = record_with("solo", "m", &[("h1", Some(0.5)), ("h2", Some(1.5))]);
        let board = merge_record(dir.path(), &rec).unwrap();
        assert_eq!(board.groups.len(), 1);
        assert_eq!(board.groups[0].entries[0].go, 1.0);
        assert_eq!(board.rankings[0].entries[0].go, 1.0);
        assert!(dir.path().join(LEADERBOARD_FILE).exists());
        assert!(dir.path().join("solo__m__l2.json").exists());
    }

    #[test]
    fn duplicate_merge_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let a = record_with("a", "m", &[("h1", Some(0.5)), ("h2", Some(1.0))]);
        let b = record_with("b", "m", &[("h1", Some(0.75)), ("h2", Some(0.25))]);
        merge_record(dir.path(), &a).unwrap();
        merge_record(dir.path(), &b).unwrap();
        let before = std::fs::read(dir.path().join(LEADERBOARD_FILE)).unwrap();
        merge_record(dir.path(), &b).unwrap();
        let after = std::fs::read(dir.path().join(LEADERBOARD_FILE)).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn improving_merge_never_raises_aurec_star() {
        let dir = tempfile::tempdir().unwrap();
        let a = record_with("a", "m", &[("h1", Some(0.5)), ("h2", Some(1.0))]);
        let first = merge_record(dir.path(), &a).unwrap();
        let b = record_with("b", "m", &[("h1", Some(0.2)), ("h2", Some(1.0))]);
        let second = merge_record(dir.path(), &b).unwrap();
        assert!(second.groups[0].aurec_star <= first.groups[0].aurec_star);
    }

    #[test]
    fn mismatched_sample_set_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = record_with("a", "m", &[("h1", Some(0.5)), ("h2", Some(1.0))]);
        merge_record(dir.path(), &a).unwrap();
        let b = record_with("b", "m", &[("h1", Some(0.5)), ("h3", Some(1.0))]);
        let err = merge_record(dir.path(), &b).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert!(err.to_string().contains("a__m__l2.json"), "{err}");
    }

    #[test]
    fn different_model_groups_do_not_interfere() {
        let dir = tempfile::tempdir().unwrap();
        let a = record_with("a", "m1", &[("h1", Some(0.5)), ("h2", Some(1.0))]);
        let b = record_with("a", "m2", &[("h9", Some(0.25)), ("h8", Some(2.0))]);
        merge_record(dir.path(), &a).unwrap();
        let board = merge_record(dir.path(), &b).unwrap();
        assert_eq!(board.groups.len(), 2);
        // One norm ranking averaging the attack over two models.
        assert_eq!(board.rankings.len(), 1);
        assert_eq!(board.rankings[0].entries[0].models, 2);
    }

    #[test]
    fn lock_file_blocks_concurrent_merges() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path()).unwrap();
        std::fs::write(dir.path().join(LOCK_FILE), b"").unwrap();
        let rec = record_with("a", "m", &[("h1", Some(0.5)), ("h2", Some(1.0))]);
        assert!(matches!(
            merge_record(dir.path(), &rec),
            Err(Error::Io(_))
        ));
        std::fs::remove_file(dir.path().join(LOCK_FILE)).unwrap();
        merge_record(dir.path(), &rec).unwrap();
        assert!(!dir.path().join(LOCK_FILE).exists());
    }

    #[test]
    fn scan_skips_derived_and_hidden_files() {
        let dir = tempfile::tempdir().unwrap();
        let rec = record_with("a", "m", &[("h1", Some(0.5)), ("h2", Some(1.0))]);
        merge_record(dir.path(), &rec).unwrap();
        std::fs::write(dir.path().join(".hidden.json"), b"junk").unwrap();
        std::fs::write(dir.path().join("notes.txt"), b"junk").unwrap();
        let scanned = scan_records(dir.path()).unwrap();
        assert_eq!(scanned.len(), 1);
        assert_eq!(scanned[0].1.attack, "a");
    }

    #[test]
    fn go_field_is_spelled_out_in_json() {
        let board =
            build_leaderboard(&[record_with("a", "m", &[("h1", Some(0.5)), ("h2", Some(1.0))])])
                .unwrap();
        let json = serde_json::to_string(&board).unwrap();
        assert!(json.contains("\"go\":"));
    }

    #[test]
    fn empty_record_list_is_data_error() {
        assert!(matches!(build_leaderboard(&[]), Err(Error::Data(_))));
    }
}
