//! Datasets: validated in-memory tables, CSV persistence, and two synthetic
//! generators.
//!
//! Features always live in `[0,1]`; generators min-max scale each coordinate
//! into that box. The CSV layout is headerless: `d` feature columns followed
//! by one integer label column.

use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    /// Validates and wraps raw samples. The class count is inferred as
    /// `max(label) + 1`, floored at two so a single-label dataset still
    /// describes a classification problem.
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Dataset> {
        if features.is_empty() {
            return Err(Error::Data("dataset has no samples".into()));
        }
        if features.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let dim = features[0].len();
        if dim == 0 {
            return Err(Error::Data("samples need at least one feature".into()));
        }
        for (i, row) in features.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Data(format!(
                    "sample {i} has {} features, expected {dim}",
                    row.len()
                )));
            }
            for &v in row {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(Error::Data(format!(
                        "sample {i} has feature {v} outside [0,1]"
                    )));
                }
            }
        }
        let num_classes = labels.iter().max().map_or(2, |&m| (m + 1).max(2));
        Ok(Dataset {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, i: usize) -> (&[f64], usize) {
        (&self.features[i], self.labels[i])
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Reads a headerless CSV of `d` feature columns plus a trailing integer
/// label column.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(std::io::Error::other(
                format!("{}: {e}", path.display()),
            )),
            _ => Error::Format(format!("{}: {e}", path.display())),
        })?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row_idx, row) in reader.records().enumerate() {
        let row = row?;
        if row.len() < 2 {
            return Err(Error::Format(format!(
                "row {row_idx}: need at least one feature and a label"
            )));
        }
        let mut feats = Vec::with_capacity(row.len() - 1);
        for field in row.iter().take(row.len() - 1) {
            let v: f64 = field.parse().map_err(|_| {
                Error::Format(format!("row {row_idx}: bad feature value {field:?}"))
            })?;
            feats.push(v);
        }
        let label_field = &row[row.len() - 1];
        let label: usize = label_field.parse().map_err(|_| {
            Error::Format(format!("row {row_idx}: bad label {label_field:?}"))
        })?;
        features.push(feats);
        labels.push(label);
    }
    Dataset::new(features, labels)
}

pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    for i in 0..dataset.len() {
        let (x, y) = dataset.get(i);
        let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        row.push(y.to_string());
        writer.write_record(&row).map_err(|e| {
            Error::Io(std::io::Error::other(e.to_string()))
        })?;
    }
    writer
        .flush()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(())
}

/// The two bundled synthetic problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Two Gaussian clusters in `d` dimensions.
    Blobs,
    /// Two interleaved half-circles; requires `d = 2`.
    Moons,
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<SyntheticKind> {
        match s {
            "blobs" => Ok(SyntheticKind::Blobs),
            "moons" => Ok(SyntheticKind::Moons),
            other => Err(Error::Config(format!(
                "unknown synthetic dataset {other:?}; expected blobs or moons"
            ))),
        }
    }
}

/// Generates a deterministic two-class dataset, min-max scaled per
/// coordinate into `[0,1]`. Labels alternate with the sample index.
pub fn generate_synthetic(kind: SyntheticKind, n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("cannot generate an empty dataset".into()));
    }
    if d == 0 {
        return Err(Error::Config("feature dimension must be positive".into()));
    }
    if kind == SyntheticKind::Moons && d != 2 {
        return Err(Error::Config(format!(
            "moons is a two-dimensional problem, got d = {d}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let point = match kind {
            SyntheticKind::Blobs => {
                let center = if label == 0 { 0.3 } else { 0.7 };
                (0..d).map(|_| center + 0.08 * gaussian(&mut rng)).collect()
            }
            SyntheticKind::Moons => {
                let theta = rng.gen_range(0.0..std::f64::consts::PI);
                let (bx, by) = if label == 0 {
                    (theta.cos(), theta.sin())
                } else {
                    (1.0 - theta.cos(), 0.5 - theta.sin())
                };
                vec![
                    bx + 0.05 * gaussian(&mut rng),
                    by + 0.05 * gaussian(&mut rng),
                ]
            }
        };
        features.push(point);
        labels.push(label);
    }
    min_max_scale(&mut features);
    Dataset::new(features, labels)
}

/// Scales each coordinate to [0,1]; constant coordinates collapse to 0.5.
fn min_max_scale(features: &mut [Vec<f64>]) {
    let d = features[0].len();
    for j in 0..d {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in features.iter() {
            lo = lo.min(row[j]);
            hi = hi.max(row[j]);
        }
        let span = hi - lo;
        for row in features.iter_mut() {
            row[j] = if span > 0.0 {
                ((row[j] - lo) / span).clamp(0.0, 1.0)
            } else {
                0.5
            };
        }
    }
}

/// Standard normal via Box-Muller; consumes two uniforms per call.
fn gaussian(rng: &mut ChaCha20Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
