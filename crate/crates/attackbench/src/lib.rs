//! Benchmark harness for gradient-based adversarial attacks on small dense
//! classifiers.
//!
//! The crate is organized around a fixed query budget: a model wrapped in a
//! [`benchmodel::BenchModel`] counts every forward and backward pass, records
//! the best adversarial example seen so far, and goes inert once the budget is
//! spent. Attacks are assembled from interchangeable components (loss,
//! initialization, gradient transform, optimizer, step-size schedule,
//! feasible-set projection) and run through one shared loop, so two attacks
//! differ only in their configuration. Fixed-budget attacks are driven
//! through a binary search over the perturbation size; minimum-norm attacks
//! shrink the perturbation themselves.
//!
//! Results are stored per sample (keyed by a hash of the input) and reduced
//! to robustness curves, from which the ranking metrics are computed: the
//! area under the curve up to the ensemble's breaking point, each attack's
//! local optimality against the per-sample best ensemble, and the global
//! optimality averaged over models.

pub mod attack;
pub mod benchmodel;
pub mod diffnet;
pub mod harness;
pub mod metrics;
pub mod search;

pub use metrics::Norm;

/// Crate-wide error type. Variants map onto the process exit codes used by
/// the CLI: config/usage errors exit 2, data/format errors exit 3, I/O
/// errors exit 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Vector or matrix sizes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// Inputs are structurally valid but semantically unusable (inconsistent
    /// sample sets, empty tables, out-of-range values).
    #[error("invalid data: {0}")]
    Data(String),
    /// A file or document does not parse as the expected format.
    #[error("malformed input: {0}")]
    Format(String),
    /// A configuration value is out of range or the combination is undefined.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// Attack initialization could not produce a starting point.
    #[error("initialization failed: {0}")]
    Init(String),
    /// A metric is undefined for the given inputs (e.g. zero denominator).
    #[error("degenerate case: {0}")]
    Degenerate(String),
    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Format(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Format(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
