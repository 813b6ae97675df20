//! The Bayesian-optimization campaign driver: seed with a random batch, then
//! iterate fit -> predict -> prefilter -> select -> evaluate -> append, with
//! full per-iteration logging.
//!
//! Every random draw is addressed by a sub-seed derived from the campaign
//! seed with [`crate::rng::mix`], so a campaign is a pure function of
//! `(pool, config)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{
    prefilter, select_batch, AcquisitionError, Policy, PolicyConfig, SelectionInputs,
};
use crate::fingerprints::{CandidatePool, CountFingerprint, PoolError};
use crate::gaussian::{sample_joint, GaussianError};
use crate::metrics::{fraction_top, top_k_average, MetricSnapshot};
use crate::rng::{mix, stream_rng};
use crate::surrogate::{fit_with, FittedSurrogate, GpHyperparams, SurrogateConfig, SurrogateError, TrainingSet};
use crate::{Direction, ErrorClass};

use rand::Rng;

// Sub-seed derivation tags; stable, part of the reproducibility contract.
const TAG_INIT: u64 = 0x494e_4954;
const TAG_FIT: u64 = 0x0046_4954;
const TAG_SAMPLE: u64 = 0x5341_4d50;
const TAG_POLICY: u64 = 0x504f_4c49;
const TAG_FP: u64 = 0x0000_4650;
const TAG_WEIGHT: u64 = 0x0000_5754;
const TAG_MOTIF: u64 = 0x004d_4f54;
const TAG_OBJ: u64 = 0x004f_424a;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid campaign config: {0}")]
    Config(String),
    #[error("pool provides no oracle values and no callback oracle was given")]
    OracleMissing,
    #[error("oracle value missing for candidate {0}")]
    OracleValueMissing(usize),
    #[error("oracle callback failed: {0}")]
    OracleCallback(String),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error("campaign aborted at iteration {iteration}: {source}")]
    Aborted {
        iteration: usize,
        source: Box<CampaignError>,
        /// State up to the failure, for post-mortem inspection.
        partial: Box<CampaignState>,
    },
}

impl CampaignError {
    pub fn class(&self) -> ErrorClass {
        match self {
            CampaignError::Config(_) => ErrorClass::Usage,
            CampaignError::OracleMissing
            | CampaignError::OracleValueMissing(_)
            | CampaignError::OracleCallback(_) => ErrorClass::Data,
            CampaignError::Pool(e) => e.class(),
            CampaignError::Surrogate(e) => e.class(),
            CampaignError::Gaussian(e) => e.class(),
            CampaignError::Acquisition(e) => e.class(),
            CampaignError::Aborted { source, .. } => source.class(),
        }
    }
}

fn default_restarts() -> usize {
    8
}

fn default_metric_ks() -> Vec<usize> {
    vec![10, 100]
}

fn default_metric_ps() -> Vec<f64> {
    vec![0.005, 0.01]
}

/// Full specification of one campaign.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignConfig {
    /// Base seed; all randomness in the run derives from it.
    pub seed: u64,
    /// Size of the random initial batch.
    pub init_batch: usize,
    /// Candidates acquired per iteration.
    pub batch_size: usize,
    /// Number of iterations after seeding.
    pub iterations: usize,
    pub policy: PolicyConfig,
    pub objective_direction: Direction,
    /// Surrogate fit restarts per iteration.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    /// k values for the top-k-average metric.
    #[serde(default = "default_metric_ks")]
    pub metric_ks: Vec<usize>,
    /// p values for the fraction-of-true-top metric.
    #[serde(default = "default_metric_ps")]
    pub metric_ps: Vec<f64>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            seed: 0,
            init_batch: 50,
            batch_size: 50,
            iterations: 10,
            policy: PolicyConfig::default(),
            objective_direction: Direction::Max,
            restarts: default_restarts(),
            surrogate: SurrogateConfig::default(),
            metric_ks: default_metric_ks(),
            metric_ps: default_metric_ps(),
        }
    }
}

/// One acquired candidate: pool index, raw oracle value, and the iteration
/// it was acquired in (0 = the seed batch).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquiredPoint {
    pub index: usize,
    pub value: f64,
    pub iteration: usize,
}

/// Per-iteration log record. Timing is intentionally absent here; it lives
/// in [`CampaignState::timings_secs`] so logs stay byte-reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub policy: String,
    /// Selected pool indices, in acquisition order.
    pub selected: Vec<usize>,
    /// Identifiers for the selected candidates when the pool carries ids.
    pub selected_ids: Option<Vec<String>>,
    pub oracle_values: Vec<f64>,
    pub hyperparams: Option<GpHyperparams>,
    pub metrics: MetricSnapshot,
    pub diagnostics: BTreeMap<String, f64>,
}

/// Everything a finished (or aborted) campaign knows about itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignState {
    config: CampaignConfig,
    acquired: Vec<AcquiredPoint>,
    /// Snapshot after the seed batch (iteration 0).
    seed_record: IterationRecord,
    records: Vec<IterationRecord>,
    /// (label, derived seed) pairs, in the order streams were opened.
    rng_lineage: Vec<(String, u64)>,
    /// Wall-clock seconds per iteration (seed batch first). Only field that
    /// is not reproducible across runs.
    timings_secs: Vec<f64>,
}

impl CampaignState {
    pub fn config(&self) -> &CampaignConfig {
        &self.config
    }

    pub fn acquired(&self) -> &[AcquiredPoint] {
        &self.acquired
    }

    pub fn acquired_indices(&self) -> Vec<usize> {
        self.acquired.iter().map(|a| a.index).collect()
    }

    pub fn seed_record(&self) -> &IterationRecord {
        &self.seed_record
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn rng_lineage(&self) -> &[(String, u64)] {
        &self.rng_lineage
    }

    pub fn timings_secs(&self) -> &[f64] {
        &self.timings_secs
    }

    /// Seed record followed by the iteration records.
    pub fn all_records(&self) -> impl Iterator<Item = &IterationRecord> {
        std::iter::once(&self.seed_record).chain(self.records.iter())
    }
}

/// Exact stored objective values for `indices`, order-preserving.
pub fn lookup_oracle(pool: &CandidatePool, indices: &[usize]) -> Result<Vec<f64>, CampaignError> {
    let values = pool.oracle_values().ok_or(CampaignError::OracleMissing)?;
    indices
        .iter()
        .map(|&i| {
            values
                .get(i)
                .copied()
                .ok_or(CampaignError::OracleValueMissing(i))
        })
        .collect()
}

/// Run a campaign in benchmark mode: the pool's stored oracle values answer
/// every query, noise-free.
pub fn run_campaign(pool: &CandidatePool, cfg: &CampaignConfig) -> Result<CampaignState, CampaignError> {
    if pool.oracle_values().is_none() {
        return Err(CampaignError::OracleMissing);
    }
    let mut oracle = |idx: &[usize]| lookup_oracle(pool, idx).map_err(|e| e.to_string());
    run_campaign_with_oracle(pool, cfg, &mut oracle)
}

/// Run a campaign against a caller-provided oracle. Retrieval and regret
/// metrics still use the pool's stored values when present.
pub fn run_campaign_with_oracle(
    pool: &CandidatePool,
    cfg: &CampaignConfig,
    oracle: &mut dyn FnMut(&[usize]) -> Result<Vec<f64>, String>,
) -> Result<CampaignState, CampaignError> {
    validate_config(pool, cfg)?;
    let mut driver = Driver::new(pool, cfg);
    driver.seed_batch(oracle)?;
    for t in 1..=cfg.iterations {
        if let Err(e) = driver.iterate(t, oracle) {
            return Err(CampaignError::Aborted {
                iteration: t,
                source: Box::new(e),
                partial: Box::new(driver.into_state()),
            });
        }
    }
    Ok(driver.into_state())
}

fn validate_config(pool: &CandidatePool, cfg: &CampaignConfig) -> Result<(), CampaignError> {
    if cfg.init_batch == 0 {
        return Err(CampaignError::Config("init_batch must be positive".into()));
    }
    if cfg.batch_size == 0 {
        return Err(CampaignError::Config("batch_size must be positive".into()));
    }
    if cfg.policy.m_samples == 0 {
        return Err(CampaignError::Config("policy.m_samples must be >= 1".into()));
    }
    if cfg.policy.prefilter_size < cfg.batch_size {
        return Err(CampaignError::Config(format!(
            "prefilter_size {} is smaller than batch_size {}",
            cfg.policy.prefilter_size, cfg.batch_size
        )));
    }
    let capacity = cfg.init_batch + cfg.iterations * cfg.batch_size;
    if capacity > pool.len() {
        return Err(CampaignError::Config(format!(
            "init_batch + iterations * batch_size = {capacity} exceeds pool size {}",
            pool.len()
        )));
    }
    Ok(())
}

struct Driver<'a> {
    pool: &'a CandidatePool,
    cfg: &'a CampaignConfig,
    acquired: Vec<AcquiredPoint>,
    acquired_mask: Vec<bool>,
    seed_record: Option<IterationRecord>,
    records: Vec<IterationRecord>,
    lineage: Vec<(String, u64)>,
    timings: Vec<f64>,
    cumulative_regret: Option<f64>,
    /// best objective so far in the internal maximization frame
    best_internal: f64,
}

impl<'a> Driver<'a> {
    fn new(pool: &'a CandidatePool, cfg: &'a CampaignConfig) -> Self {
        Driver {
            pool,
            cfg,
            acquired: Vec::new(),
            acquired_mask: vec![false; pool.len()],
            seed_record: None,
            records: Vec::new(),
            lineage: Vec::new(),
            timings: Vec::new(),
            cumulative_regret: None,
            best_internal: f64::NEG_INFINITY,
        }
    }

    fn derive(&mut self, label: String, parts: &[u64]) -> u64 {
        let s = mix(parts);
        self.lineage.push((label, s));
        s
    }

    fn seed_batch(
        &mut self,
        oracle: &mut dyn FnMut(&[usize]) -> Result<Vec<f64>, String>,
    ) -> Result<(), CampaignError> {
        let start = std::time::Instant::now();
        let seed = self.derive("init".into(), &[self.cfg.seed, TAG_INIT]);
        let mut order: Vec<usize> = (0..self.pool.len()).collect();
        let mut rng = stream_rng(seed, 0);
        for k in 0..self.cfg.init_batch {
            let j = k + rng.gen_range(0..order.len() - k);
            order.swap(k, j);
        }
        order.truncate(self.cfg.init_batch);
        let values = oracle(&order).map_err(CampaignError::OracleCallback)?;
        self.absorb(0, &order, &values);
        let metrics = self.snapshot();
        self.seed_record = Some(IterationRecord {
            iteration: 0,
            policy: "seed".into(),
            selected: order.clone(),
            selected_ids: self.ids_for(&order),
            oracle_values: values,
            hyperparams: None,
            metrics,
            diagnostics: BTreeMap::new(),
        });
        self.timings.push(start.elapsed().as_secs_f64());
        Ok(())
    }

    fn iterate(
        &mut self,
        t: usize,
        oracle: &mut dyn FnMut(&[usize]) -> Result<Vec<f64>, String>,
    ) -> Result<(), CampaignError> {
        let start = std::time::Instant::now();
        let cfg = self.cfg;
        let policy = cfg.policy.policy;

        // retrain from scratch on everything acquired so far
        let inputs: Vec<CountFingerprint> = self
            .acquired
            .iter()
            .map(|a| self.pool.fingerprint(a.index).clone())
            .collect();
        let targets: Vec<f64> = self.acquired.iter().map(|a| a.value).collect();
        let indices: Vec<usize> = self.acquired.iter().map(|a| a.index).collect();
        let train = TrainingSet::new(inputs, targets, cfg.objective_direction)?
            .with_pool_indices(indices)?;
        let fit_seed = self.derive(format!("iter{t}/fit"), &[cfg.seed, TAG_FIT, t as u64]);
        let hp = fit_with(&train, cfg.restarts, fit_seed, cfg.surrogate)?;
        let gp = FittedSurrogate::build(&train, hp, cfg.surrogate)?;

        let unacquired: Vec<usize> = (0..self.pool.len()).filter(|&i| !self.acquired_mask[i]).collect();
        let (means, vars) = gp.marginals(self.pool, &unacquired)?;
        let stds: Vec<f64> = vars.iter().map(|v| v.sqrt()).collect();

        // per-iteration reduction of the candidate set before the policy
        let kept = prefilter(&means, &stds, &cfg.policy)?;
        let subset: Vec<usize> = kept.iter().map(|&loc| unacquired[loc]).collect();
        let sub_means: Vec<f64> = kept.iter().map(|&loc| means[loc]).collect();
        let sub_stds: Vec<f64> = kept.iter().map(|&loc| stds[loc]).collect();

        let rows = policy.sample_rows(cfg.batch_size, cfg.policy.m_samples);
        let needs_posterior = rows > 0 || matches!(policy, Policy::Tsrsr);
        let (posterior, samples) = if needs_posterior {
            let joint = gp.joint(self.pool, &subset)?;
            let sample_seed = self.derive(format!("iter{t}/sample"), &[cfg.seed, TAG_SAMPLE, t as u64]);
            let samples = if rows > 0 {
                Some(sample_joint(&joint, rows, sample_seed)?)
            } else {
                None
            };
            (Some(joint), samples)
        } else {
            (None, None)
        };

        let policy_seed = self.derive(format!("iter{t}/policy"), &[cfg.seed, TAG_POLICY, t as u64]);
        let result = select_batch(
            &cfg.policy,
            &SelectionInputs {
                posterior: posterior.as_ref(),
                samples: samples.as_ref(),
                means: &sub_means,
                stds: &sub_stds,
                incumbent: self.best_internal,
                batch_size: cfg.batch_size,
                seed: policy_seed,
            },
        )?;
        let selected: Vec<usize> = result.batch.iter().map(|&loc| subset[loc]).collect();
        let values = oracle(&selected).map_err(CampaignError::OracleCallback)?;
        self.absorb(t, &selected, &values);

        let metrics = self.snapshot();
        self.records.push(IterationRecord {
            iteration: t,
            policy: policy.name().to_string(),
            selected: selected.clone(),
            selected_ids: self.ids_for(&selected),
            oracle_values: values,
            hyperparams: Some(hp),
            metrics,
            diagnostics: result.diagnostics,
        });
        self.timings.push(start.elapsed().as_secs_f64());
        Ok(())
    }

    fn absorb(&mut self, iteration: usize, indices: &[usize], values: &[f64]) {
        let sign = self.cfg.objective_direction.sign();
        for (&i, &v) in indices.iter().zip(values) {
            debug_assert!(!self.acquired_mask[i], "candidate {i} acquired twice");
            self.acquired_mask[i] = true;
            self.acquired.push(AcquiredPoint { index: i, value: v, iteration });
            self.best_internal = self.best_internal.max(sign * v);
        }
    }

    fn ids_for(&self, indices: &[usize]) -> Option<Vec<String>> {
        self.pool
            .ids()
            .map(|ids| indices.iter().map(|&i| ids[i].clone()).collect())
    }

    fn snapshot(&mut self) -> MetricSnapshot {
        let direction = self.cfg.objective_direction;
        let values: Vec<f64> = self.acquired.iter().map(|a| a.value).collect();
        let indices: Vec<usize> = self.acquired.iter().map(|a| a.index).collect();
        let top_k_avg = self
            .cfg
            .metric_ks
            .iter()
            .filter(|&&k| k > 0 && k <= values.len())
            .map(|&k| (k, top_k_average(&values, k, direction).expect("k bounded by len")))
            .collect();
        let (fraction, simple, cumulative) = match self.pool.oracle_values() {
            Some(oracle) => {
                let fraction = self
                    .cfg
                    .metric_ps
                    .iter()
                    .map(|&p| {
                        (p, fraction_top(&indices, self.pool, p, direction).expect("benchmark pool"))
                    })
                    .collect();
                let sign = direction.sign();
                let optimum = oracle.iter().map(|v| sign * v).fold(f64::NEG_INFINITY, f64::max);
                let simple = optimum - self.best_internal;
                let cumulative = self.cumulative_regret.unwrap_or(0.0) + simple;
                self.cumulative_regret = Some(cumulative);
                (fraction, Some(simple), Some(cumulative))
            }
            None => (Vec::new(), None, None),
        };
        MetricSnapshot {
            top_k_avg,
            fraction_top: fraction,
            simple_regret: simple,
            cumulative_regret: cumulative,
        }
    }

    fn into_state(self) -> CampaignState {
        CampaignState {
            config: self.cfg.clone(),
            acquired: self.acquired,
            seed_record: self.seed_record.expect("seeded before iterating"),
            records: self.records,
            rng_lineage: self.lineage,
            timings_secs: self.timings,
        }
    }
}

/// Synthetic pool families for desk-scale benchmarking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Objective drawn from the Tanimoto GP prior over the generated
    /// fingerprints. Quadratic/cubic in N; intended for N up to a few
    /// thousand.
    GpDraw,
    /// Objective is a fixed sparse linear functional of the counts.
    SparseLinear,
    /// Planted motif clusters with per-cluster bonuses; similar candidates
    /// score similarly, with several separated modes.
    Multimodal,
}

impl std::fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SyntheticKind::GpDraw => "gp-draw",
            SyntheticKind::SparseLinear => "sparse-linear",
            SyntheticKind::Multimodal => "multimodal",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for SyntheticKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gp-draw" => Ok(SyntheticKind::GpDraw),
            "sparse-linear" => Ok(SyntheticKind::SparseLinear),
            "multimodal" => Ok(SyntheticKind::Multimodal),
            other => Err(format!(
                "unknown synthetic kind '{other}', expected gp-draw, sparse-linear, or multimodal"
            )),
        }
    }
}

fn random_fingerprint(rng: &mut impl Rng, dim: usize) -> CountFingerprint {
    let nnz = 4 + rng.gen_range(0..=(dim / 16).clamp(1, 12));
    let pairs: Vec<(u32, u32)> = (0..nnz)
        .map(|_| (rng.gen_range(0..dim as u32), rng.gen_range(1..=4u32)))
        .collect();
    CountFingerprint::from_counts(pairs, dim).expect("generated entries are valid")
}

/// Generate a benchmark pool with `n` sparse count fingerprints of width
/// `dim` and a synthetic objective. Deterministic given `seed`.
pub fn synthetic_pool(
    kind: SyntheticKind,
    n: usize,
    dim: usize,
    seed: u64,
) -> Result<CandidatePool, CampaignError> {
    if n == 0 {
        return Err(CampaignError::Config("synthetic pool needs n >= 1".into()));
    }
    if dim == 0 {
        return Err(CampaignError::Config("synthetic pool needs dim >= 1".into()));
    }
    let fp_seed = mix(&[seed, TAG_FP]);
    let mut candidates: Vec<CountFingerprint> = Vec::with_capacity(n);

    let objective: Vec<f64> = match kind {
        SyntheticKind::SparseLinear => {
            for i in 0..n {
                let mut rng = stream_rng(fp_seed, i as u64);
                candidates.push(random_fingerprint(&mut rng, dim));
            }
            let mut wrng = stream_rng(mix(&[seed, TAG_WEIGHT]), 0);
            let weights: Vec<f64> = (0..dim)
                .map(|_| {
                    if wrng.gen_range(0.0..1.0) < 0.2 {
                        wrng.gen_range(-1.0..1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            candidates
                .iter()
                .map(|fp| {
                    fp.entries()
                        .iter()
                        .map(|&(idx, c)| weights[idx as usize] * c as f64)
                        .sum()
                })
                .collect()
        }
        SyntheticKind::GpDraw => {
            for i in 0..n {
                let mut rng = stream_rng(fp_seed, i as u64);
                candidates.push(random_fingerprint(&mut rng, dim));
            }
            let pool = CandidatePool::new(candidates.clone(), None, None, dim)?;
            let all: Vec<usize> = (0..n).collect();
            let gram = crate::fingerprints::pairwise_tanimoto(&pool, &all)?;
            let prior = crate::gaussian::GaussianPosterior::new(vec![0.0; n], gram)?;
            let draw = sample_joint(&prior, 1, mix(&[seed, TAG_OBJ]))?;
            draw.row(0).to_vec()
        }
        SyntheticKind::Multimodal => {
            const MOTIFS: usize = 5;
            let motif_seed = mix(&[seed, TAG_MOTIF]);
            let motifs: Vec<CountFingerprint> = (0..MOTIFS)
                .map(|m| {
                    let mut rng = stream_rng(motif_seed, m as u64);
                    let nnz = (dim / 8).clamp(4, 24);
                    let pairs: Vec<(u32, u32)> = (0..nnz)
                        .map(|_| (rng.gen_range(0..dim as u32), rng.gen_range(1..=4u32)))
                        .collect();
                    CountFingerprint::from_counts(pairs, dim).expect("valid motif")
                })
                .collect();
            let bonuses = [1.0, 0.8, 0.6, 0.45, 0.3];
            for i in 0..n {
                let mut rng = stream_rng(fp_seed, i as u64);
                // 70% cluster members: motif entries thinned plus noise
                if rng.gen_range(0.0..1.0) < 0.7 {
                    let m = rng.gen_range(0..MOTIFS);
                    let mut pairs: Vec<(u32, u32)> = motifs[m]
                        .entries()
                        .iter()
                        .filter(|_| rng.gen_range(0.0..1.0) < 0.8)
                        .copied()
                        .collect();
                    for _ in 0..rng.gen_range(0..4usize) {
                        pairs.push((rng.gen_range(0..dim as u32), rng.gen_range(1..=3u32)));
                    }
                    candidates.push(CountFingerprint::from_counts(pairs, dim).expect("valid member"));
                } else {
                    candidates.push(random_fingerprint(&mut rng, dim));
                }
            }
            let noise_seed = mix(&[seed, TAG_OBJ]);
            candidates
                .iter()
                .enumerate()
                .map(|(i, fp)| {
                    let sims: f64 = motifs
                        .iter()
                        .zip(bonuses)
                        .map(|(m, b)| {
                            b * crate::fingerprints::tanimoto_unchecked(
                                fp,
                                m,
                                crate::fingerprints::TanimotoKind::MinMax,
                            )
                        })
                        .sum();
                    let mut rng = stream_rng(noise_seed, i as u64);
                    sims + 0.01 * rng.gen_range(-1.0..1.0)
                })
                .collect()
        }
    };
    Ok(CandidatePool::new(candidates, None, Some(objective), dim)?)
}
