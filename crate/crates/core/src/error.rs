use std::fmt;
use std::path::PathBuf;

use num_complex::Complex64;

/// A single semantic problem found while validating a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Dotted location inside the scenario, e.g. `equalizer.beta[2][1]`.
    pub location: String,
    pub message: String,
}

impl Violation {
    pub fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            location: location.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.location, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{what} index {index} out of range (size {size})")]
    Index {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("gain-table path queried at z = {z} which is not a control frequency")]
    OffControlFrequency { z: Complex64 },

    #[error("path evaluation at |z| = {modulus} below the 0.05 safety floor")]
    RadiusTooSmall { modulus: f64 },

    #[error("z = {z} is within the pole guard of control frequency f = {freq}")]
    PoleProximity { z: Complex64, freq: f64 },

    #[error("matrix is singular to working precision at elimination step {step} (pivot {pivot:e})")]
    NearSingular { step: usize, pivot: f64 },

    #[error("near pole at control frequency f = {freq}: sides {minus} / {plus}")]
    NearPole {
        freq: f64,
        minus: Complex64,
        plus: Complex64,
    },

    #[error("coefficient w[{l}][{j}] diverged at sample {n}")]
    Divergence { l: usize, j: usize, n: u64 },

    #[error("radial evaluation at r = {r}: {source}")]
    Radial {
        r: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{failed} of {total} sweep points failed")]
    SweepFailed { failed: usize, total: usize },

    #[error("scenario syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("scenario is invalid:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output to {}: {source}", .path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_index(what: &'static str, index: usize, size: usize) -> Result<()> {
    if index < size {
        Ok(())
    } else {
        Err(Error::Index { what, index, size })
    }
}
