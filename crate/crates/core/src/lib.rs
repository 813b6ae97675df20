//! Batched Bayesian optimization over fixed discrete candidate pools.
//!
//! The crate implements the full loop for model-guided screening of large
//! libraries: a Tanimoto-kernel Gaussian process surrogate over sparse count
//! fingerprints, joint-posterior Monte Carlo sampling, a family of batch
//! selection policies built around the probability that a candidate is the
//! pool optimum, and the metrics used to compare campaigns (top-k averages,
//! top-fraction retrieval, regret, batch diversity).
//!
//! Everything stochastic is addressed by `(seed, stream)` counter-based RNG
//! streams, so campaigns are bit-reproducible regardless of thread count.

pub mod acquisition;
pub mod campaign;
pub mod fingerprints;
pub mod gaussian;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod surrogate;

/// Coarse classification of errors, used by callers (e.g. the CLI) to map
/// failures onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Caller violated a precondition or passed invalid arguments.
    Usage,
    /// Input data is malformed or incomplete.
    Data,
    /// A numeric procedure failed (e.g. factorization breakdown).
    Numeric,
}

/// Whether the campaign maximizes or minimizes the oracle.
///
/// The engine always maximizes internally; minimization problems flip the
/// sign of targets at ingestion and flip back in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Max,
    Min,
}

impl Direction {
    /// Sign applied to raw oracle values to convert to the internal
    /// maximization frame.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Max => 1.0,
            Direction::Min => -1.0,
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::Max => write!(f, "max"),
            Direction::Min => write!(f, "min"),
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" | "maximize" => Ok(Direction::Max),
            "min" | "minimize" => Ok(Direction::Min),
            other => Err(format!("unknown direction '{other}', expected max or min")),
        }
    }
}
