//! Benchmark result files.
//!
//! One file holds everything one attack did against one model under one
//! norm: per-sample best distances (null when the attack never succeeded on
//! that sample), query counts, and wall-clock time, keyed by sample hash so
//! files from differently ordered datasets are comparable. Hashes are kept
//! sorted, so identical results serialize to identical bytes except for the
//! timing and environment fields.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::{DistanceTable, Norm};
use crate::search::SearchConfig;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    /// Best adversarial distance; `null` when no adversarial was found.
    pub distance: Option<f64>,
    pub forwards: usize,
    pub backwards: usize,
    /// Wall-clock seconds around the attack itself (hashing and I/O
    /// excluded).
    pub time_s: f64,
    /// Present when the attack aborted on this sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub timestamp: String,
    pub host: String,
}

impl Meta {
    pub fn capture() -> Meta {
        Meta {
            timestamp: chrono::Utc::now().to_rfc3339(),
            host: std::env::var("HOSTNAME").unwrap_or_else(|_| "unknown".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub schema_version: u32,
    /// Attack identifier: a preset name or the stem of a config file.
    pub attack: String,
    pub model: String,
    pub norm: Norm,
    pub budget: usize,
    /// The radius-search settings used, when the attack was fixed-budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchConfig>,
    pub records: BTreeMap<String, SampleResult>,
    pub meta: Meta,
}

impl AttackRecord {
    /// Checks the structural invariants a consumer may rely on.
    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::Data(format!(
                "record {}/{} holds no samples",
                self.attack, self.model
            )));
        }
        for (hash, sample) in &self.records {
            if sample.forwards + sample.backwards > self.budget {
                return Err(Error::Data(format!(
                    "record {}/{} sample {hash}: {} + {} queries exceed budget {}",
                    self.attack, self.model, sample.forwards, sample.backwards, self.budget
                )));
            }
            if let Some(d) = sample.distance {
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::Data(format!(
                        "record {}/{} sample {hash}: bad distance {d}",
                        self.attack, self.model
                    )));
                }
            }
        }
        Ok(())
    }

    /// Projects the record down to the distance table the metrics consume.
    pub fn distance_table(&self) -> Result<DistanceTable> {
        let mut table = DistanceTable::new(self.norm);
        for (hash, sample) in &self.records {
            table.insert(hash.clone(), sample.distance)?;
        }
        Ok(table)
    }

    pub fn mean_forwards(&self) -> f64 {
        let total: usize = self.records.values().map(|s| s.forwards).sum();
        total as f64 / self.records.len() as f64
    }

    pub fn mean_backwards(&self) -> f64 {
        let total: usize = self.records.values().map(|s| s.backwards).sum();
        total as f64 / self.records.len() as f64
    }

    pub fn mean_time_s(&self) -> f64 {
        let total: f64 = self.records.values().map(|s| s.time_s).sum();
        total / self.records.len() as f64
    }
}

pub fn write_record(path: &Path, record: &AttackRecord) -> Result<()> {
    let mut body = serde_json::to_string_pretty(record)?;
    body.push('\n');
    std::fs::write(path, body)?;
    Ok(())
}

pub fn read_record(path: &Path) -> Result<AttackRecord> {
    let body = std::fs::read_to_string(path)?;
    let record: AttackRecord = serde_json::from_str(&body)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    record.validate()?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record() -> AttackRecord {
        let mut records = BTreeMap::new();
        records.insert(
            "aa".repeat(64),
            SampleResult {
                distance: Some(0.25),
                forwards: 10,
                backwards: 9,
                time_s: 0.001,
                error: None,
            },
        );
        records.insert(
            "bb".repeat(64),
            SampleResult {
                distance: None,
                forwards: 50,
                backwards: 50,
                time_s: 0.002,
                error: None,
            },
        );
        AttackRecord {
            schema_version: SCHEMA_VERSION,
            attack: "PGD-L2".into(),
            model: "plain".into(),
            norm: Norm::L2,
            budget: 100,
            search: Some(SearchConfig {
                steps: 10,
                eps_init: 1.0,
            }),
            records,
            meta: Meta {
                timestamp: "2024-01-01T00:00:00+00:00".into(),
                host: "test".into(),
            },
        }
    }

    #[test]
    fn json_round_trip_and_field_names() {
        let record = sample_record();
        let json = serde_json::to_string_pretty(&record).unwrap();
        for field in [
            "\"schema_version\"",
            "\"attack\"",
            "\"model\"",
            "\"norm\"",
            "\"budget\"",
            "\"search\"",
            "\"records\"",
            "\"distance\"",
            "\"forwards\"",
            "\"backwards\"",
            "\"time_s\"",
            "\"meta\"",
            "\"timestamp\"",
            "\"host\"",
        ] {
            assert!(json.contains(field), "missing {field}");
        }
        let back: AttackRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(record, back);
    }

    #[test]
    fn failure_serializes_as_null() {
        let record = sample_record();
        let json = serde_json::to_string(&record).unwrap();
        assert!(json.contains("\"distance\":null"));
    }

    #[test]
    fn hashes_serialize_sorted() {
        let record = sample_record();
        let json = serde_json::to_string(&record).unwrap();
        let a = json.find(&"aa".repeat(64)).unwrap();
        let b = json.find(&"bb".repeat(64)).unwrap();
        assert!(a < b);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.json");
        let record = sample_record();
        write_record(&path, &record).unwrap();
        let back = read_record(&path).unwrap();
        assert_eq!(record, back);
    }

    #[test]
    fn validate_rejects_budget_violation() {
        let mut record = sample_record();
        record.budget = 10;
        assert!(matches!(record.validate(), Err(Error::Data(_))));
    }

    #[test]
    fn validate_rejects_negative_distance() {
        let mut record = sample_record();
        record
            .records
            .values_mut()
            .next()
            .unwrap()
            .distance = Some(-0.5);
        assert!(matches!(record.validate(), Err(Error::Data(_))));
    }

    #[test]
    fn malformed_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        std::fs::write(&path, "{ not json").unwrap();
        assert!(matches!(read_record(&path), Err(Error::Format(_))));
    }

    #[test]
    fn distance_table_projection() {
        let record = sample_record();
        let table = record.distance_table().unwrap();
        assert_eq!(table.entries().count(), 2);
        assert!(table.has_failures());
    }
}
