//! Batch selection policies.
//!
//! The headline rule is qPO: estimate each candidate's probability of being
//! the pool optimum from joint posterior samples, then take the top b. The
//! probability that the batch contains the optimum is the plain sum of the
//! member scores (optimality events are mutually exclusive for continuous
//! posteriors), so the top-b batch is exactly optimal for that objective --
//! no myopic approximation is involved.
//!
//! Baselines: greedy and UCB (mean / mean + beta * std), parallel Thompson
//! sampling, TS-RSR, sequential Monte Carlo batch policies (qEI, qPI, BUCB)
//! built by hallucination-free running maxima over shared samples, and a
//! random-from-prefilter control. All policies read from one shared
//! [`SampleMatrix`] where applicable, so comparisons at a fixed seed differ
//! only by selection logic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{GaussianPosterior, SampleMatrix};
use crate::rng::stream_rng;
use crate::ErrorClass;

use rand::Rng;

/// Standard deviation floor for ratio-based rules.
const SIGMA_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Error)]
pub enum AcquisitionError {
    #[error("batch size {b} exceeds candidate count {n}")]
    BatchTooLarge { b: usize, n: usize },
    #[error("policy needs at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("means ({0}) and stds ({1}) differ in length")]
    LengthMismatch(usize, usize),
    #[error("policy {0} requires joint posterior samples")]
    MissingSamples(Policy),
    #[error("policy {0} requires the joint posterior")]
    MissingPosterior(Policy),
    #[error("batch size must be positive")]
    EmptyBatch,
}

impl AcquisitionError {
    pub fn class(&self) -> ErrorClass {
        ErrorClass::Usage
    }
}

/// Batch policy identifiers; string forms match the CLI names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Qpo,
    QpoConditional,
    Greedy,
    Ucb,
    Bucb,
    Pts,
    Qei,
    Qpi,
    Tsrsr,
    Random10k,
}

impl Policy {
    pub const ALL: [Policy; 10] = [
        Policy::Qpo,
        Policy::QpoConditional,
        Policy::Greedy,
        Policy::Ucb,
        Policy::Bucb,
        Policy::Pts,
        Policy::Qei,
        Policy::Qpi,
        Policy::Tsrsr,
        Policy::Random10k,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Qpo => "qpo",
            Policy::QpoConditional => "qpo-conditional",
            Policy::Greedy => "greedy",
            Policy::Ucb => "ucb",
            Policy::Bucb => "bucb",
            Policy::Pts => "pts",
            Policy::Qei => "qei",
            Policy::Qpi => "qpi",
            Policy::Tsrsr => "tsrsr",
            Policy::Random10k => "random10k",
        }
    }

    /// Whether the policy consumes joint posterior samples, and how many
    /// rows it needs for batch size `b`.
    pub fn sample_rows(self, b: usize, m_samples: usize) -> usize {
        match self {
            Policy::Qpo | Policy::QpoConditional | Policy::Qei | Policy::Qpi | Policy::Bucb => m_samples,
            Policy::Pts | Policy::Tsrsr => b.max(1),
            Policy::Greedy | Policy::Ucb | Policy::Random10k => 0,
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::ALL
            .iter()
            .find(|p| p.name() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<&str> = Policy::ALL.iter().map(|p| p.name()).collect();
                format!("unknown policy '{s}', expected one of: {}", names.join(", "))
            })
    }
}

/// Which score the prefilter ranks by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrefilterMetric {
    #[default]
    Greedy,
    Ucb,
}

/// Policy parameters. Defaults follow the reference configuration: 10,000
/// Monte Carlo samples, UCB beta 1, BUCB beta sqrt(3), prefilter to the top
/// 10,000 candidates by predicted mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub policy: Policy,
    /// Monte Carlo sample count M.
    pub m_samples: usize,
    /// UCB exploration weight.
    pub beta_ucb: f64,
    /// BUCB multiplier in the sequential-UCB convention (mean + beta * std);
    /// the reparameterized batch form squares this.
    pub beta_bucb: f64,
    pub prefilter_size: usize,
    pub prefilter_metric: PrefilterMetric,
    /// Base seed for the policy's own randomness (sampling, random10k).
    pub seed: u64,
    /// Optional softplus temperature for qEI; `None` is the plain form.
    pub qei_smoothing: Option<f64>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            policy: Policy::Qpo,
            m_samples: 10_000,
            beta_ucb: 1.0,
            beta_bucb: 3.0f64.sqrt(),
            prefilter_size: 10_000,
            prefilter_metric: PrefilterMetric::Greedy,
            seed: 0,
            qei_smoothing: None,
        }
    }
}

impl PolicyConfig {
    pub fn for_policy(policy: Policy) -> Self {
        PolicyConfig { policy, ..Default::default() }
    }
}

/// Scores and the chosen batch, with selection diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcquisitionResult {
    /// Per-candidate acquisition scores over the scored subset; meaning
    /// depends on the policy (optimality probabilities for qPO).
    pub scores: Vec<f64>,
    /// Ordered batch, as positions into the scored subset.
    pub batch: Vec<usize>,
    pub policy: Policy,
    /// Small key-value bag: zero-score counts, fill-rule engagement, etc.
    pub diagnostics: BTreeMap<String, f64>,
}

/// Indices `0..n` ranked by `primary` descending, then `secondary`
/// descending, then index ascending. `total_cmp` keeps the order total and
/// deterministic.
fn rank_desc(primary: &[f64], secondary: Option<&[f64]>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..primary.len()).collect();
    idx.sort_by(|&i, &j| {
        primary[j]
            .total_cmp(&primary[i])
            .then_with(|| match secondary {
                Some(s) => s[j].total_cmp(&s[i]),
                None => std::cmp::Ordering::Equal,
            })
            .then(i.cmp(&j))
    });
    idx
}

/// Reduce the candidate set to the top `prefilter_size` by predicted mean
/// (greedy) or mean + beta * std (ucb). Returns all indices, metric-ordered,
/// when the set is already small enough.
pub fn prefilter(
    post_means: &[f64],
    post_stds: &[f64],
    cfg: &PolicyConfig,
) -> Result<Vec<usize>, AcquisitionError> {
    if post_means.len() != post_stds.len() {
        return Err(AcquisitionError::LengthMismatch(post_means.len(), post_stds.len()));
    }
    let mut ranked = match cfg.prefilter_metric {
        PrefilterMetric::Greedy => rank_desc(post_means, None),
        PrefilterMetric::Ucb => {
            let ucb: Vec<f64> = post_means
                .iter()
                .zip(post_stds)
                .map(|(m, s)| m + cfg.beta_ucb * s)
                .collect();
            rank_desc(&ucb, None)
        }
    };
    ranked.truncate(cfg.prefilter_size);
    Ok(ranked)
}

/// qPO acquisition scores: the fraction of joint samples in which each
/// candidate attains the row maximum. Ties within a row (measure zero for
/// continuous posteriors) resolve to the lowest index. Scores are
/// nonnegative and sum to 1.
pub fn qpo_scores(samples: &SampleMatrix) -> Vec<f64> {
    let n = samples.n_candidates();
    let m = samples.n_samples();
    let mut counts = vec![0u64; n];
    for r in 0..m {
        counts[row_argmax(samples.row(r))] += 1;
    }
    counts.iter().map(|&c| c as f64 / m as f64).collect()
}

#[inline]
fn row_argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    let _ = row;
    best
}

/// Rank candidates by (score desc, mean desc, index asc) and return the
/// first `b`. Candidates with zero score rank below every positive-score
/// candidate and fill remaining slots greedily by mean.
pub fn qpo_select(scores: &[f64], means: &[f64], b: usize) -> Result<Vec<usize>, AcquisitionError> {
    if b > scores.len() {
        return Err(AcquisitionError::BatchTooLarge { b, n: scores.len() });
    }
    if scores.len() != means.len() {
        return Err(AcquisitionError::LengthMismatch(scores.len(), means.len()));
    }
    let mut ranked = rank_desc(scores, Some(means));
    ranked.truncate(b);
    Ok(ranked)
}

/// Myopic conditional variant: after each pick, samples whose optimum is
/// already in the batch are discarded and the next slot ranks candidates by
/// conditional optimality over the surviving samples. With mutually
/// exclusive optimality events this selects the same set as [`qpo_select`];
/// it exists for the case where that assumption is in doubt. If the
/// surviving sample set empties, remaining slots fill greedily by mean.
pub fn qpo_conditional_batch(
    samples: &SampleMatrix,
    b: usize,
    means: &[f64],
) -> Result<Vec<usize>, AcquisitionError> {
    let n = samples.n_candidates();
    if b > n {
        return Err(AcquisitionError::BatchTooLarge { b, n });
    }
    if means.len() != n {
        return Err(AcquisitionError::LengthMismatch(means.len(), n));
    }
    let m = samples.n_samples();
    let argmaxes: Vec<usize> = (0..m).map(|r| row_argmax(samples.row(r))).collect();

    let mut in_batch = vec![false; n];
    let mut batch = Vec::with_capacity(b);
    let mut surviving: Vec<usize> = (0..m).collect();
    while batch.len() < b {
        if surviving.is_empty() {
            // conditional mass exhausted: greedy fill by mean
            let ranked = rank_desc(means, None);
            for i in ranked {
                if batch.len() == b {
                    break;
                }
                if !in_batch[i] {
                    batch.push(i);
                    in_batch[i] = true;
                }
            }
            break;
        }
        let mut counts = vec![0u64; n];
        for &r in &surviving {
            // surviving rows' optima are never in the batch already
            counts[argmaxes[r]] += 1;
        }
        let scores: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let pick = rank_desc(&scores, Some(means))
            .into_iter()
            .find(|&i| !in_batch[i])
            .expect("batch smaller than candidate count");
        batch.push(pick);
        in_batch[pick] = true;
        surviving.retain(|&r| argmaxes[r] != pick);
    }
    Ok(batch)
}

/// Parallel Thompson sampling: slot m takes the best-ranked candidate of
/// sample row m that is not already in the batch.
pub fn pts_select(samples: &SampleMatrix, b: usize) -> Result<Vec<usize>, AcquisitionError> {
    let n = samples.n_candidates();
    if b > n {
        return Err(AcquisitionError::BatchTooLarge { b, n });
    }
    if samples.n_samples() < b {
        return Err(AcquisitionError::TooFewSamples { need: b, got: samples.n_samples() });
    }
    let mut in_batch = vec![false; n];
    let mut batch = Vec::with_capacity(b);
    for m in 0..b {
        let row = samples.row(m);
        let mut best: Option<usize> = None;
        for i in 0..n {
            if !in_batch[i] && best.map_or(true, |bi| row[i] > row[bi]) {
                best = Some(i);
            }
        }
        let pick = best.expect("b <= n leaves a free candidate");
        batch.push(pick);
        in_batch[pick] = true;
    }
    Ok(batch)
}

/// Top-b candidates by predicted mean; ties toward the lower index.
pub fn greedy_select(means: &[f64], b: usize) -> Result<Vec<usize>, AcquisitionError> {
    if b > means.len() {
        return Err(AcquisitionError::BatchTooLarge { b, n: means.len() });
    }
    let mut ranked = rank_desc(means, None);
    ranked.truncate(b);
    Ok(ranked)
}

/// Top-b candidates by mean + beta * std; beta 0 reduces to greedy.
pub fn ucb_select(
    means: &[f64],
    stds: &[f64],
    beta: f64,
    b: usize,
) -> Result<Vec<usize>, AcquisitionError> {
    if means.len() != stds.len() {
        return Err(AcquisitionError::LengthMismatch(means.len(), stds.len()));
    }
    if b > means.len() {
        return Err(AcquisitionError::BatchTooLarge { b, n: means.len() });
    }
    let ucb: Vec<f64> = means.iter().zip(stds).map(|(m, s)| m + beta * s).collect();
    let mut ranked = rank_desc(&ucb, None);
    ranked.truncate(b);
    Ok(ranked)
}

/// Batch-level Monte Carlo utilities for the sequential policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McBatchKind {
    Qei,
    Qpi,
    Bucb,
}

/// Greedy sequential construction of a batch under a Monte Carlo estimate of
/// the batch-level utility: each slot adds the candidate that maximizes the
/// utility of (already selected + candidate) over the shared samples.
///
/// Utilities: qEI `E[max(0, max_j y_j - incumbent)]`; qPI
/// `E[1{max_j y_j > incumbent}]`; BUCB `E[max_j (mu_j + sqrt(beta pi / 2)
/// |y_j - mu_j|)]` with `beta = beta_bucb^2`.
pub fn mc_batch_policy(
    post: &GaussianPosterior,
    samples: &SampleMatrix,
    b: usize,
    kind: McBatchKind,
    incumbent: f64,
    cfg: &PolicyConfig,
) -> Result<Vec<usize>, AcquisitionError> {
    let n = samples.n_candidates();
    if b > n {
        return Err(AcquisitionError::BatchTooLarge { b, n });
    }
    let m = samples.n_samples();
    if m == 0 {
        return Err(AcquisitionError::TooFewSamples { need: 1, got: 0 });
    }
    let means = post.mean();
    let bucb_coef = (cfg.beta_bucb * cfg.beta_bucb * std::f64::consts::PI / 2.0).sqrt();

    // transformed value of candidate i in sample r
    let value = |r: usize, i: usize| -> f64 {
        let y = samples.row(r)[i];
        match kind {
            McBatchKind::Qei | McBatchKind::Qpi => y,
            McBatchKind::Bucb => means[i] + bucb_coef * (y - means[i]).abs(),
        }
    };
    let utility = |running_max: f64| -> f64 {
        match kind {
            McBatchKind::Qei => match cfg.qei_smoothing {
                None => (running_max - incumbent).max(0.0),
                Some(tau) => {
                    // softplus-smoothed hinge; within tau*ln2 of the plain form
                    let z = (running_max - incumbent) / tau;
                    if z > 30.0 {
                        running_max - incumbent
                    } else {
                        tau * z.exp().ln_1p()
                    }
                }
            },
            McBatchKind::Qpi => {
                if running_max > incumbent {
                    1.0
                } else {
                    0.0
                }
            }
            McBatchKind::Bucb => running_max,
        }
    };

    let mut running = vec![f64::NEG_INFINITY; m];
    let mut in_batch = vec![false; n];
    let mut batch = Vec::with_capacity(b);
    for _slot in 0..b {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if in_batch[i] {
                continue;
            }
            let mut acc = 0.0;
            for r in 0..m {
                acc += utility(running[r].max(value(r, i)));
            }
            let score = acc / m as f64;
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        let (pick, _) = best.expect("b <= n leaves a free candidate");
        for r in 0..m {
            running[r] = running[r].max(value(r, pick));
        }
        batch.push(pick);
        in_batch[pick] = true;
    }
    Ok(batch)
}

/// TS-RSR: slot m picks, within sample row m, the unselected candidate
/// minimizing (row max - mean_i) / std_i with the std floored at 1e-9.
pub fn tsrsr_select(
    post: &GaussianPosterior,
    samples: &SampleMatrix,
    b: usize,
) -> Result<Vec<usize>, AcquisitionError> {
    let n = samples.n_candidates();
    if b > n {
        return Err(AcquisitionError::BatchTooLarge { b, n });
    }
    if samples.n_samples() < b {
        return Err(AcquisitionError::TooFewSamples { need: b, got: samples.n_samples() });
    }
    let means = post.mean();
    let stds = post.stds();
    let mut in_batch = vec![false; n];
    let mut batch = Vec::with_capacity(b);
    for m in 0..b {
        let row = samples.row(m);
        let row_max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if in_batch[i] {
                continue;
            }
            let ratio = (row_max - means[i]) / stds[i].max(SIGMA_FLOOR);
            if best.map_or(true, |(_, r)| ratio < r) {
                best = Some((i, ratio));
            }
        }
        let (pick, _) = best.expect("b <= n leaves a free candidate");
        batch.push(pick);
        in_batch[pick] = true;
    }
    Ok(batch)
}

/// Uniform sample of `b` candidates without replacement from the prefiltered
/// list, seeded.
pub fn random10k_select(
    prefiltered: &[usize],
    b: usize,
    seed: u64,
) -> Result<Vec<usize>, AcquisitionError> {
    if b > prefiltered.len() {
        return Err(AcquisitionError::BatchTooLarge { b, n: prefiltered.len() });
    }
    let mut pool = prefiltered.to_vec();
    let mut rng = stream_rng(seed, 0);
    // partial Fisher-Yates: the first b entries become the sample
    for k in 0..b {
        let j = k + rng.gen_range(0..pool.len() - k);
        pool.swap(k, j);
    }
    pool.truncate(b);
    Ok(pool)
}

/// Everything a policy might need for one selection, with candidate-local
/// indexing (positions into the scored arrays).
pub struct SelectionInputs<'a> {
    pub posterior: Option<&'a GaussianPosterior>,
    pub samples: Option<&'a SampleMatrix>,
    pub means: &'a [f64],
    pub stds: &'a [f64],
    /// Best acquired objective so far, in the internal maximization frame.
    pub incumbent: f64,
    pub batch_size: usize,
    /// Seed for selection-time randomness (random10k).
    pub seed: u64,
}

/// Dispatch one batch selection under `cfg.policy`.
pub fn select_batch(
    cfg: &PolicyConfig,
    inputs: &SelectionInputs<'_>,
) -> Result<AcquisitionResult, AcquisitionError> {
    let b = inputs.batch_size;
    if b == 0 {
        return Err(AcquisitionError::EmptyBatch);
    }
    let need_samples = || inputs.samples.ok_or(AcquisitionError::MissingSamples(cfg.policy));
    let need_post = || inputs.posterior.ok_or(AcquisitionError::MissingPosterior(cfg.policy));

    let mut diagnostics = BTreeMap::new();
    let (scores, batch) = match cfg.policy {
        Policy::Qpo => {
            let samples = need_samples()?;
            let scores = qpo_scores(samples);
            let batch = qpo_select(&scores, inputs.means, b)?;
            let zero = scores.iter().filter(|&&s| s == 0.0).count();
            let positive = scores.len() - zero;
            diagnostics.insert("zero_score_count".into(), zero as f64);
            diagnostics.insert("fill_rule_engaged".into(), f64::from(positive < b));
            (scores, batch)
        }
        Policy::QpoConditional => {
            let samples = need_samples()?;
            let scores = qpo_scores(samples);
            let batch = qpo_conditional_batch(samples, b, inputs.means)?;
            let zero = scores.iter().filter(|&&s| s == 0.0).count();
            diagnostics.insert("zero_score_count".into(), zero as f64);
            (scores, batch)
        }
        Policy::Greedy => {
            let batch = greedy_select(inputs.means, b)?;
            (inputs.means.to_vec(), batch)
        }
        Policy::Ucb => {
            let batch = ucb_select(inputs.means, inputs.stds, cfg.beta_ucb, b)?;
            let scores = inputs
                .means
                .iter()
                .zip(inputs.stds)
                .map(|(m, s)| m + cfg.beta_ucb * s)
                .collect();
            (scores, batch)
        }
        Policy::Bucb => {
            let batch = mc_batch_policy(need_post()?, need_samples()?, b, McBatchKind::Bucb, inputs.incumbent, cfg)?;
            (Vec::new(), batch)
        }
        Policy::Qei => {
            let batch = mc_batch_policy(need_post()?, need_samples()?, b, McBatchKind::Qei, inputs.incumbent, cfg)?;
            (Vec::new(), batch)
        }
        Policy::Qpi => {
            let batch = mc_batch_policy(need_post()?, need_samples()?, b, McBatchKind::Qpi, inputs.incumbent, cfg)?;
            (Vec::new(), batch)
        }
        Policy::Pts => {
            let batch = pts_select(need_samples()?, b)?;
            (Vec::new(), batch)
        }
        Policy::Tsrsr => {
            let batch = tsrsr_select(need_post()?, need_samples()?, b)?;
            (Vec::new(), batch)
        }
        Policy::Random10k => {
            let all: Vec<usize> = (0..inputs.means.len()).collect();
            let batch = random10k_select(&all, b, inputs.seed)?;
            (Vec::new(), batch)
        }
    };
    Ok(AcquisitionResult { scores, batch, policy: cfg.policy, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{correlated_trio, sample_joint, std_normal_cdf, GaussianPosterior};
    use crate::linalg::Matrix;
    use crate::rng::{mix, SeedLineage};

    fn matrix_samples(rows: Vec<Vec<f64>>) -> SampleMatrix {
        let m = rows.len() as u64;
        SampleMatrix::from_matrix(
            Matrix::from_rows(rows),
            SeedLineage { base_seed: 0, first_stream: 0, stream_count: m },
        )
    }

    #[test]
    fn prefilter_identity_regime_returns_all_in_mean_order() {
        let cfg = PolicyConfig::default();
        let means = [1.0, 5.0, 3.0, 2.0, 4.0];
        let stds = [0.0; 5];
        let idx = prefilter(&means, &stds, &cfg).unwrap();
        assert_eq!(idx, vec![1, 4, 2, 3, 0]);
    }

    #[test]
    fn prefilter_truncates_by_mean() {
        let cfg = PolicyConfig { prefilter_size: 2, ..Default::default() };
        let idx = prefilter(&[3.0, 1.0, 2.0], &[0.0; 3], &cfg).unwrap();
        assert_eq!(idx, vec![0, 2]);
    }

    #[test]
    fn prefilter_ucb_weighs_stds() {
        let cfg = PolicyConfig {
            prefilter_size: 1,
            prefilter_metric: PrefilterMetric::Ucb,
            beta_ucb: 1.0,
            ..Default::default()
        };
        let idx = prefilter(&[0.0, 0.0], &[1.0, 2.0], &cfg).unwrap();
        assert_eq!(idx, vec![1]);
    }

    #[test]
    fn qpo_scores_single_candidate_is_one() {
        let s = matrix_samples(vec![vec![0.3], vec![-1.0], vec![2.0]]);
        assert_eq!(qpo_scores(&s), vec![1.0]);
    }

    #[test]
    fn qpo_scores_sum_to_one_and_ties_go_low() {
        let s = matrix_samples(vec![vec![1.0, 1.0, 0.0], vec![0.0, 2.0, 2.0]]);
        let scores = qpo_scores(&s);
        assert_eq!(scores, vec![0.5, 0.5, 0.0]);
        assert!((scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qpo_scores_exchangeable_marginals_are_uniform() {
        let n = 5;
        let m = 200_000;
        let post = GaussianPosterior::new(vec![0.0; n], Matrix::identity(n)).unwrap();
        let s = sample_joint(&post, m, 31).unwrap();
        let scores = qpo_scores(&s);
        let p = 1.0 / n as f64;
        let tol = 3.0 * (p * (1.0 - p) / m as f64).sqrt();
        for (i, sc) in scores.iter().enumerate() {
            assert!((sc - p).abs() <= tol, "score {i} = {sc}, tol {tol}");
        }
    }

    #[test]
    fn qpo_scores_toy_posterior_matches_known_mass() {
        let s = sample_joint(&correlated_trio(), 400_000, 7).unwrap();
        let scores = qpo_scores(&s);
        assert!((scores[0] - 0.8388).abs() < 0.01, "{scores:?}");
        assert!(scores[1] < 0.002, "{scores:?}");
        assert!((scores[2] - 0.1610).abs() < 0.01, "{scores:?}");
    }

    #[test]
    fn qpo_select_breaks_score_ties_by_mean() {
        let batch = qpo_select(&[0.5, 0.5], &[1.0, 2.0], 1).unwrap();
        assert_eq!(batch, vec![1]);
    }

    #[test]
    fn qpo_select_fills_zero_scores_after_positive() {
        let batch = qpo_select(&[0.9, 0.1, 0.0], &[0.0, 0.0, 10.0], 3).unwrap();
        assert_eq!(batch, vec![0, 1, 2]);
    }

    #[test]
    fn qpo_select_all_zero_scores_is_greedy() {
        let batch = qpo_select(&[0.0, 0.0, 0.0], &[1.0, 3.0, 2.0], 2).unwrap();
        assert_eq!(batch, vec![1, 2]);
    }

    #[test]
    fn qpo_batch_on_toy_posterior_is_diverse_greedy_is_not() {
        let post = correlated_trio();
        let s = sample_joint(&post, 100_000, 3).unwrap();
        let scores = qpo_scores(&s);
        let qpo = qpo_select(&scores, post.mean(), 2).unwrap();
        let mut qpo_set = qpo.clone();
        qpo_set.sort_unstable();
        assert_eq!(qpo_set, vec![0, 2]);
        let greedy = greedy_select(post.mean(), 2).unwrap();
        assert_eq!(greedy, vec![0, 1]);
    }

    #[test]
    fn conditional_b1_equals_top1() {
        let s = sample_joint(&correlated_trio(), 20_000, 5).unwrap();
        let scores = qpo_scores(&s);
        let means = correlated_trio();
        let top1 = qpo_select(&scores, means.mean(), 1).unwrap();
        let cond = qpo_conditional_batch(&s, 1, means.mean()).unwrap();
        assert_eq!(top1, cond);
    }

    #[test]
    fn conditional_exhaustion_falls_back_to_greedy() {
        // candidate 0 wins every sample; conditioning on it empties the set
        let s = matrix_samples(vec![vec![9.0, 0.0, 1.0]; 6]);
        let batch = qpo_conditional_batch(&s, 2, &[0.0, 5.0, 1.0]).unwrap();
        assert_eq!(batch, vec![0, 1]);
    }

    #[test]
    fn conditional_matches_plain_selection_on_random_posteriors() {
        for trial in 0..25u64 {
            let mut rng = stream_rng(mix(&[trial, 4]), 0);
            let n = 2 + (rng.gen_range(0..7usize));
            let b = 1 + (rng.gen_range(0..3usize)).min(n - 1);
            let mean: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let a = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let cov = Matrix::from_fn(n, n, |i, j| {
                crate::linalg::dot(a.row(i), a.row(j)) + if i == j { 0.05 } else { 0.0 }
            });
            let post = GaussianPosterior::new(mean, cov).unwrap();
            let s = sample_joint(&post, 4_000, mix(&[trial, 9])).unwrap();
            let scores = qpo_scores(&s);
            let mut plain = qpo_select(&scores, post.mean(), b).unwrap();
            let mut cond = qpo_conditional_batch(&s, b, post.mean()).unwrap();
            plain.sort_unstable();
            cond.sort_unstable();
            assert_eq!(plain, cond, "trial {trial} n {n} b {b}");
        }
    }

    #[test]
    fn pts_dedup_takes_runner_up() {
        // identical rows ranked candidate 2 > candidate 0 > candidate 1
        let s = matrix_samples(vec![vec![5.0, 1.0, 7.0]; 4]);
        let batch = pts_select(&s, 2).unwrap();
        assert_eq!(batch, vec![2, 0]);
    }

    #[test]
    fn pts_requires_enough_samples() {
        let s = matrix_samples(vec![vec![1.0, 2.0]]);
        assert!(matches!(
            pts_select(&s, 2),
            Err(AcquisitionError::TooFewSamples { need: 2, got: 1 })
        ));
    }

    #[test]
    fn pts_b1_frequency_tracks_optimality_probability() {
        let post = correlated_trio();
        let reps = 20_000usize;
        let mut counts = [0usize; 3];
        for rep in 0..reps {
            let s = sample_joint(&post, 1, mix(&[rep as u64, 100])).unwrap();
            let batch = pts_select(&s, 1).unwrap();
            counts[batch[0]] += 1;
        }
        let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / reps as f64).collect();
        let expect = [0.8388, 0.0002, 0.1610];
        for i in 0..3 {
            assert!((freqs[i] - expect[i]).abs() < 0.015, "{freqs:?}");
        }
    }

    #[test]
    fn pts_prefers_correlated_pair_on_toy_posterior() {
        // over repeated b=2 selections {x1,x2} should beat {x1,x3}
        let post = correlated_trio();
        let mut pair_12 = 0usize;
        let mut pair_13 = 0usize;
        for rep in 0..4_000u64 {
            let s = sample_joint(&post, 2, mix(&[rep, 55])).unwrap();
            let mut batch = pts_select(&s, 2).unwrap();
            batch.sort_unstable();
            match batch.as_slice() {
                [0, 1] => pair_12 += 1,
                [0, 2] => pair_13 += 1,
                _ => {}
            }
        }
        assert!(pair_12 > pair_13, "{{x1,x2}} {pair_12} vs {{x1,x3}} {pair_13}");
    }

    #[test]
    fn greedy_and_ucb_hand_examples() {
        assert_eq!(greedy_select(&[1.0, 3.0, 2.0], 2).unwrap(), vec![1, 2]);
        assert_eq!(ucb_select(&[0.0, 0.0], &[1.0, 2.0], 1.0, 1).unwrap(), vec![1]);
        // beta 0 reduces ucb to greedy
        let means = [0.3, 0.9, 0.5, 0.1];
        let stds = [5.0, 0.1, 2.0, 9.0];
        assert_eq!(
            ucb_select(&means, &stds, 0.0, 3).unwrap(),
            greedy_select(&means, 3).unwrap()
        );
    }

    #[test]
    fn qei_single_candidate_matches_closed_form() {
        let (mu, sigma, incumbent) = (0.4, 1.3, 0.9);
        let post = GaussianPosterior::new(vec![mu], Matrix::from_rows(vec![vec![sigma * sigma]])).unwrap();
        let m = 200_000;
        let samples = sample_joint(&post, m, 77).unwrap();
        // recompute the MC estimate the policy uses for its only slot
        let mut acc = 0.0;
        for r in 0..m {
            acc += (samples.row(r)[0] - incumbent).max(0.0);
        }
        let mc = acc / m as f64;
        let z = (mu - incumbent) / sigma;
        let closed = sigma * (z * std_normal_cdf(z) + crate::gaussian::std_normal_pdf(z));
        let stderr = sigma / (m as f64).sqrt(); // upper bound on the hinge stderr
        assert!((mc - closed).abs() < 3.0 * stderr, "{mc} vs {closed}");
        // and the policy path picks the single candidate without error
        let cfg = PolicyConfig::for_policy(Policy::Qei);
        let batch = mc_batch_policy(&post, &samples, 1, McBatchKind::Qei, incumbent, &cfg).unwrap();
        assert_eq!(batch, vec![0]);
    }

    #[test]
    fn qpi_with_no_incumbent_scores_one() {
        let post = GaussianPosterior::new(vec![0.0, 1.0], Matrix::identity(2)).unwrap();
        let samples = sample_joint(&post, 500, 3).unwrap();
        let cfg = PolicyConfig::for_policy(Policy::Qpi);
        // with incumbent -inf every candidate improves in every sample;
        // ties resolve to the lowest index
        let batch =
            mc_batch_policy(&post, &samples, 1, McBatchKind::Qpi, f64::NEG_INFINITY, &cfg).unwrap();
        assert_eq!(batch, vec![0]);
    }

    #[test]
    fn qei_correlated_dominated_candidate_adds_nothing() {
        // slot-2 score of a candidate almost perfectly correlated with the
        // slot-1 pick and dominated in mean must not exceed its slot-1 score
        let rho = 0.999;
        let post = GaussianPosterior::new(
            vec![1.0, 0.5],
            Matrix::from_rows(vec![vec![1.0, rho], vec![rho, 1.0]]),
        )
        .unwrap();
        let samples = sample_joint(&post, 50_000, 11).unwrap();
        let incumbent = 0.2;
        let m = samples.n_samples();
        // slot-1 scores
        let slot1 = |i: usize| -> f64 {
            (0..m).map(|r| (samples.row(r)[i] - incumbent).max(0.0)).sum::<f64>() / m as f64
        };
        let s1_c1 = slot1(1);
        // slot-2 score of candidate 1 after candidate 0 picked
        let s2_c1 = (0..m)
            .map(|r| {
                let row = samples.row(r);
                (row[0].max(row[1]) - incumbent).max(0.0)
            })
            .sum::<f64>()
            / m as f64
            - slot1(0);
        // marginal gain of adding candidate 1 is (far) below its standalone score
        assert!(s2_c1 <= s1_c1 + 1e-9, "marginal {s2_c1} vs standalone {s1_c1}");
    }

    #[test]
    fn tsrsr_hand_example_picks_small_numerator() {
        let post = GaussianPosterior::new(vec![4.0, 1.0], Matrix::identity(2)).unwrap();
        let s = matrix_samples(vec![vec![5.0, 3.0]]);
        let batch = tsrsr_select(&post, &s, 1).unwrap();
        assert_eq!(batch, vec![0]); // (5-4)/1 < (5-1)/1
    }

    #[test]
    fn tsrsr_zero_numerator_beats_positive_ratios() {
        // candidate 1's mean equals the row max: ratio 0 wins
        let post = GaussianPosterior::new(
            vec![1.0, 6.0, 2.0],
            Matrix::from_rows(vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 9.0, 0.0],
                vec![0.0, 0.0, 4.0],
            ]),
        )
        .unwrap();
        let s = matrix_samples(vec![vec![3.0, 6.0, 1.0]]);
        let batch = tsrsr_select(&post, &s, 1).unwrap();
        assert_eq!(batch, vec![1]);
    }

    #[test]
    fn tsrsr_never_repeats_a_pick() {
        let post = GaussianPosterior::new(vec![1.0, 1.0, 0.0], Matrix::identity(3)).unwrap();
        let s = matrix_samples(vec![vec![2.0, 2.0, 0.0], vec![2.0, 2.0, 0.0], vec![2.0, 2.0, 0.0]]);
        let batch = tsrsr_select(&post, &s, 3).unwrap();
        let mut sorted = batch.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 3);
    }

    #[test]
    fn random10k_is_seeded_and_uniform() {
        let list = [10usize, 20, 30, 40];
        assert_eq!(
            random10k_select(&list, 2, 9).unwrap(),
            random10k_select(&list, 2, 9).unwrap()
        );
        let whole = random10k_select(&list, 4, 1).unwrap();
        let mut sorted = whole.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, list);

        let reps = 10_000;
        let mut counts = std::collections::HashMap::new();
        for rep in 0..reps {
            let pick = random10k_select(&list, 1, mix(&[rep as u64, 42]))
                .unwrap()[0];
            *counts.entry(pick).or_insert(0usize) += 1;
        }
        for &c in &list {
            let f = *counts.get(&c).unwrap_or(&0) as f64 / reps as f64;
            assert!((f - 0.25).abs() < 0.02, "candidate {c}: {f}");
        }
    }

    #[test]
    fn top_b_set_maximizes_score_sum_exhaustively() {
        // small version of the additivity check: the ranked batch's score
        // sum equals the exhaustive maximum over all subsets
        for trial in 0..40u64 {
            let mut rng = stream_rng(mix(&[trial, 8]), 0);
            let n = 3 + rng.gen_range(0..8usize);
            let b = 1 + rng.gen_range(0..3usize).min(n - 1);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let means: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let batch = qpo_select(&scores, &means, b).unwrap();
            let got: f64 = batch.iter().map(|&i| scores[i]).sum();
            let best = max_subset_sum(&scores, b);
            assert!(got >= best - 1e-12, "trial {trial}: {got} < {best}");
        }
    }

    fn max_subset_sum(scores: &[f64], b: usize) -> f64 {
        fn rec(scores: &[f64], start: usize, left: usize, acc: f64, best: &mut f64) {
            if left == 0 {
                *best = best.max(acc);
                return;
            }
            for i in start..scores.len() {
                rec(scores, i + 1, left - 1, acc + scores[i], best);
            }
        }
        let mut best = f64::NEG_INFINITY;
        rec(scores, 0, b, 0.0, &mut best);
        best
    }

    #[test]
    fn monotone_transform_leaves_selection_bit_identical() {
        let post = correlated_trio();
        let s = sample_joint(&post, 5_000, 19).unwrap();
        let scores = qpo_scores(&s);
        let transformed = SampleMatrix::from_matrix(
            Matrix::from_fn(s.n_samples(), 3, |r, c| 2.5 * s.row(r)[c] + 7.0),
            s.seed_lineage().clone(),
        );
        let scores_t = qpo_scores(&transformed);
        assert_eq!(scores, scores_t);
        let means: Vec<f64> = post.mean().to_vec();
        let means_t: Vec<f64> = means.iter().map(|m| 2.5 * m + 7.0).collect();
        assert_eq!(
            qpo_select(&scores, &means, 2).unwrap(),
            qpo_select(&scores_t, &means_t, 2).unwrap()
        );
        assert_eq!(
            pts_select(&s, 2).unwrap(),
            pts_select(&transformed, 2).unwrap()
        );
    }

    #[test]
    fn policy_names_roundtrip() {
        for p in Policy::ALL {
            assert_eq!(p.name().parse::<Policy>().unwrap(), p);
        }
        let err = "qqq".parse::<Policy>().unwrap_err();
        assert!(err.contains("qpo-conditional"));
    }

    #[test]
    fn select_batch_dispatch_smoke() {
        let post = correlated_trio();
        let samples = sample_joint(&post, 2_000, 23).unwrap();
        let stds = post.stds();
        for policy in Policy::ALL {
            let cfg = PolicyConfig { policy, m_samples: 2_000, ..Default::default() };
            let inputs = SelectionInputs {
                posterior: Some(&post),
                samples: Some(&samples),
                means: post.mean(),
                stds: &stds,
                incumbent: 0.0,
                batch_size: 2,
                seed: 5,
            };
            let res = select_batch(&cfg, &inputs).unwrap();
            assert_eq!(res.batch.len(), 2);
            assert_eq!(res.policy, policy);
            let mut dedup = res.batch.clone();
            dedup.sort_unstable();
            dedup.dedup();
            assert_eq!(dedup.len(), 2, "{policy} produced duplicates");
        }
    }
}
