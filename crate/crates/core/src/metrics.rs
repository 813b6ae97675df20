//! Campaign evaluation: top-k acquired averages, retrieval of the true top
//! fraction, simple/cumulative regret, and batch diversity statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::CampaignState;
use crate::fingerprints::{tanimoto_unchecked, CandidatePool, TanimotoKind};
use crate::{Direction, ErrorClass};

pub const DIVERSITY_BINS: usize = 20;
pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.4;

#[derive(Debug, Clone, Error)]
pub enum MetricsError {
    #[error("top-k average needs {need} acquired values, got {got}")]
    TooFewAcquired { need: usize, got: usize },
    #[error("pool has no oracle values; retrieval metrics need benchmark mode")]
    MissingOracle,
    #[error("fraction p must lie in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("diversity statistics need a batch of at least 2, got {0}")]
    BatchTooSmall(usize),
    #[error("candidate index {0} out of range for pool of {1}")]
    IndexOutOfRange(usize, usize),
}

impl MetricsError {
    pub fn class(&self) -> ErrorClass {
        match self {
            MetricsError::MissingOracle => ErrorClass::Data,
            _ => ErrorClass::Usage,
        }
    }
}

/// Per-iteration metric values recorded in the campaign log.
///
/// `fraction_top` and the regrets need the pool's full oracle table
/// (benchmark mode); they are `None`/empty when a campaign runs against a
/// callback oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSnapshot {
    /// (k, mean of best k acquired) for each configured k with enough data.
    pub top_k_avg: Vec<(usize, f64)>,
    /// (p, fraction of the true top ceil(p*N) acquired so far).
    pub fraction_top: Vec<(f64, f64)>,
    /// Gap between the pool optimum and the best acquired value so far.
    pub simple_regret: Option<f64>,
    /// Running sum of simple regret over iterations 0..=t.
    pub cumulative_regret: Option<f64>,
}

/// Mean of the k best acquired oracle values under `direction`.
pub fn top_k_average(values: &[f64], k: usize, direction: Direction) -> Result<f64, MetricsError> {
    if values.len() < k || k == 0 {
        return Err(MetricsError::TooFewAcquired { need: k.max(1), got: values.len() });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| match direction {
        Direction::Max => b.total_cmp(a),
        Direction::Min => a.total_cmp(b),
    });
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// Indices of the true top ceil(p * N) candidates by oracle value, ties
/// broken toward the lower index.
pub fn true_top_set(
    pool: &CandidatePool,
    p: f64,
    direction: Direction,
) -> Result<Vec<usize>, MetricsError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(MetricsError::BadFraction(p));
    }
    let values = pool.oracle_values().ok_or(MetricsError::MissingOracle)?;
    let take = ((p * pool.len() as f64).ceil() as usize).min(pool.len());
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.sort_by(|&i, &j| {
        match direction {
            Direction::Max => values[j].total_cmp(&values[i]),
            Direction::Min => values[i].total_cmp(&values[j]),
        }
        .then(i.cmp(&j))
    });
    idx.truncate(take);
    Ok(idx)
}

/// Fraction of the true top-p% candidates already acquired.
pub fn fraction_top(
    acquired: &[usize],
    pool: &CandidatePool,
    p: f64,
    direction: Direction,
) -> Result<f64, MetricsError> {
    let top: std::collections::HashSet<usize> = true_top_set(pool, p, direction)?.into_iter().collect();
    let hits = acquired.iter().filter(|i| top.contains(i)).count();
    Ok(hits as f64 / top.len() as f64)
}

/// Sum over iterations 0..=T of the gap between the pool optimum and the
/// best value acquired so far; sign-adjusted so regret is nonnegative.
pub fn cumulative_regret(state: &CampaignState, pool: &CandidatePool) -> Result<f64, MetricsError> {
    let values = pool.oracle_values().ok_or(MetricsError::MissingOracle)?;
    let direction = state.config().objective_direction;
    let sign = direction.sign();
    let optimum = values
        .iter()
        .map(|v| sign * v)
        .fold(f64::NEG_INFINITY, f64::max);
    let iterations = state.records().len();
    let mut total = 0.0;
    let mut best = f64::NEG_INFINITY;
    for t in 0..=iterations {
        for a in state.acquired().iter().filter(|a| a.iteration == t) {
            best = best.max(sign * a.value);
        }
        total += optimum - best;
    }
    Ok(total)
}

/// Pairwise-similarity histogram and above-threshold edge list for one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityStats {
    /// Counts over `DIVERSITY_BINS` equal bins spanning [0, 1]; similarity
    /// 1.0 lands in the last bin. Counts sum to C(b, 2).
    pub histogram: Vec<usize>,
    /// (i, j, similarity) for every pair with similarity > threshold.
    pub edges: Vec<(usize, usize, f64)>,
    pub threshold: f64,
}

/// All-pairs Tanimoto similarity statistics for a selected batch.
pub fn diversity_stats(
    pool: &CandidatePool,
    batch: &[usize],
    threshold: f64,
) -> Result<DiversityStats, MetricsError> {
    if batch.len() < 2 {
        return Err(MetricsError::BatchTooSmall(batch.len()));
    }
    for &i in batch {
        if i >= pool.len() {
            return Err(MetricsError::IndexOutOfRange(i, pool.len()));
        }
    }
    let mut histogram = vec![0usize; DIVERSITY_BINS];
    let mut edges = Vec::new();
    for a in 0..batch.len() {
        for b in (a + 1)..batch.len() {
            let s = tanimoto_unchecked(
                pool.fingerprint(batch[a]),
                pool.fingerprint(batch[b]),
                TanimotoKind::MinMax,
            );
            let bin = ((s * DIVERSITY_BINS as f64) as usize).min(DIVERSITY_BINS - 1);
            histogram[bin] += 1;
            if s > threshold {
                edges.push((batch[a], batch[b], s));
            }
        }
    }
    Ok(DiversityStats { histogram, edges, threshold })
}
