//! Tanimoto-kernel Gaussian process surrogate with a constant mean.
//!
//! The kernel is `k(a, b) = output_scale * tanimoto(a, b)` with likelihood
//! noise on the training diagonal only: predictions are for the noise-free
//! latent function (the oracle is treated as exact), which is what the batch
//! policies consume. The noisy predictive variant is available behind
//! [`SurrogateConfig::predictive_noise`] for comparison.
//!
//! Hyperparameters (constant mean, covariance scale, likelihood noise) are
//! fitted by maximizing the exact marginal log likelihood with a seeded
//! multi-restart Nelder-Mead search followed by a coordinate-wise
//! golden-section polish; the procedure is deterministic given the seed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprints::{tanimoto_unchecked, CandidatePool, CountFingerprint, TanimotoKind};
use crate::gaussian::{cholesky_with_jitter, GaussianError, GaussianPosterior};
use crate::linalg::{cholesky_solve, dot, solve_lower, Matrix};
use crate::rng::stream_rng;
use crate::{Direction, ErrorClass};

use rand::Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Smallest admissible likelihood variance.
pub const NOISE_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, Error)]
pub enum SurrogateError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("inputs ({0}) and targets ({1}) differ in length")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} training points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("duplicate pool index {0} in training set")]
    DuplicateTrainingIndex(usize),
    #[error("prediction subset is empty")]
    EmptySubset,
    #[error("subset index {0} is already in the training set")]
    SubsetOverlapsTraining(usize),
    #[error("candidate index {0} out of range for pool of {1}")]
    IndexOutOfRange(usize, usize),
    #[error("output_scale must be positive, got {0}")]
    BadOutputScale(f64),
    #[error("noise must be >= {NOISE_FLOOR:e}, got {0}")]
    BadNoise(f64),
    #[error("target {0} is not finite")]
    NonFiniteTarget(usize),
    #[error("all fit restarts failed numerically{}", best_note(.best))]
    AllRestartsFailed { best: Option<GpHyperparams> },
    #[error(transparent)]
    Numeric(#[from] GaussianError),
}

fn best_note(best: &Option<GpHyperparams>) -> String {
    match best {
        Some(hp) => format!(
            " (best partial: mean {:.4}, scale {:.4e}, noise {:.4e})",
            hp.mean_const, hp.output_scale, hp.noise
        ),
        None => String::new(),
    }
}

impl SurrogateError {
    pub fn class(&self) -> ErrorClass {
        match self {
            SurrogateError::Numeric(e) => e.class(),
            SurrogateError::AllRestartsFailed { .. } => ErrorClass::Numeric,
            _ => ErrorClass::Usage,
        }
    }
}

/// The surrogate's fitted parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    /// Constant prior mean (in the internal maximization frame).
    pub mean_const: f64,
    /// Kernel output scale (prior variance at similarity 1).
    pub output_scale: f64,
    /// Likelihood variance added to the training diagonal.
    pub noise: f64,
}

impl GpHyperparams {
    pub fn new(mean_const: f64, output_scale: f64, noise: f64) -> Result<Self, SurrogateError> {
        if !(output_scale > 0.0) || !output_scale.is_finite() {
            return Err(SurrogateError::BadOutputScale(output_scale));
        }
        if !(noise >= NOISE_FLOOR) || !noise.is_finite() {
            return Err(SurrogateError::BadNoise(noise));
        }
        Ok(GpHyperparams { mean_const, output_scale, noise })
    }
}

/// Kernel form and predictive-noise switches.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    /// Tanimoto form used by the kernel.
    pub kernel: TanimotoKind,
    /// Include likelihood noise in predictive covariance. Off by default:
    /// the oracle is noise-free, so policies consume the latent posterior.
    pub predictive_noise: bool,
}

/// Acquired data the surrogate is trained on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingSet {
    inputs: Vec<CountFingerprint>,
    targets: Vec<f64>,
    direction: Direction,
    pool_indices: Option<Vec<usize>>,
}

impl TrainingSet {
    /// `targets` are raw oracle values; `direction` fixes the sign flip that
    /// maps them into the internal maximization frame.
    pub fn new(
        inputs: Vec<CountFingerprint>,
        targets: Vec<f64>,
        direction: Direction,
    ) -> Result<Self, SurrogateError> {
        if inputs.len() != targets.len() {
            return Err(SurrogateError::LengthMismatch(inputs.len(), targets.len()));
        }
        if let Some(i) = targets.iter().position(|t| !t.is_finite()) {
            return Err(SurrogateError::NonFiniteTarget(i));
        }
        Ok(TrainingSet { inputs, targets, direction, pool_indices: None })
    }

    /// Attach the pool indices the inputs came from; enables overlap checks
    /// in [`posterior`]. Indices must be unique.
    pub fn with_pool_indices(mut self, indices: Vec<usize>) -> Result<Self, SurrogateError> {
        if indices.len() != self.inputs.len() {
            return Err(SurrogateError::LengthMismatch(indices.len(), self.inputs.len()));
        }
        let mut seen = std::collections::HashSet::new();
        for &i in &indices {
            if !seen.insert(i) {
                return Err(SurrogateError::DuplicateTrainingIndex(i));
            }
        }
        self.pool_indices = Some(indices);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn inputs(&self) -> &[CountFingerprint] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn pool_indices(&self) -> Option<&[usize]> {
        self.pool_indices.as_deref()
    }

    /// Targets in the internal maximization frame.
    fn signed_targets(&self) -> Vec<f64> {
        let s = self.direction.sign();
        self.targets.iter().map(|t| s * t).collect()
    }

    fn gram(&self, kind: TanimotoKind) -> Matrix {
        let t = self.inputs.len();
        let mut g = Matrix::zeros(t, t);
        for i in 0..t {
            g.set(i, i, tanimoto_unchecked(&self.inputs[i], &self.inputs[i], kind));
            for j in (i + 1)..t {
                let v = tanimoto_unchecked(&self.inputs[i], &self.inputs[j], kind);
                g.set(i, j, v);
                g.set(j, i, v);
            }
        }
        g
    }
}

fn mll_from_gram(gram: &Matrix, signed: &[f64], hp: &GpHyperparams) -> Result<f64, SurrogateError> {
    let t = signed.len();
    let k = Matrix::from_fn(t, t, |i, j| {
        hp.output_scale * gram.get(i, j) + if i == j { hp.noise } else { 0.0 }
    });
    let (l, _) = cholesky_with_jitter(&k)?;
    let r: Vec<f64> = signed.iter().map(|y| y - hp.mean_const).collect();
    let alpha = cholesky_solve(&l, &r);
    let quad = dot(&r, &alpha);
    let logdet: f64 = (0..t).map(|i| l.get(i, i).ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * (quad + logdet + t as f64 * LN_2PI))
}

/// Exact GP marginal log likelihood of the training data under `hp`.
pub fn mll(train: &TrainingSet, hp: &GpHyperparams) -> Result<f64, SurrogateError> {
    mll_with(train, hp, SurrogateConfig::default())
}

pub fn mll_with(
    train: &TrainingSet,
    hp: &GpHyperparams,
    config: SurrogateConfig,
) -> Result<f64, SurrogateError> {
    if train.is_empty() {
        return Err(SurrogateError::EmptyTrainingSet);
    }
    mll_from_gram(&train.gram(config.kernel), &train.signed_targets(), hp)
}

/// Search box for hyperparameter fitting, derived from the data range.
struct SearchSpace {
    mean_lo: f64,
    mean_hi: f64,
    ln_scale_lo: f64,
    ln_scale_hi: f64,
    ln_noise_lo: f64,
    ln_noise_hi: f64,
}

impl SearchSpace {
    fn from_targets(signed: &[f64]) -> Self {
        let lo = signed.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = signed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let range = (hi - lo).max(1e-6);
        SearchSpace {
            mean_lo: lo - range,
            mean_hi: hi + range,
            ln_scale_lo: (1e-4f64).ln(),
            ln_scale_hi: (1e2f64).ln(),
            ln_noise_lo: (1e-4f64).ln(),
            ln_noise_hi: (1e2f64).ln(),
        }
    }

    fn clamp(&self, x: [f64; 3]) -> [f64; 3] {
        [
            x[0].clamp(self.mean_lo, self.mean_hi),
            x[1].clamp(self.ln_scale_lo, self.ln_scale_hi),
            x[2].clamp(self.ln_noise_lo, self.ln_noise_hi),
        ]
    }

    fn to_hp(&self, x: [f64; 3]) -> GpHyperparams {
        let c = self.clamp(x);
        GpHyperparams {
            mean_const: c[0],
            output_scale: c[1].exp(),
            noise: c[2].exp().max(NOISE_FLOOR),
        }
    }
}

/// Nelder-Mead maximization of `f` from `start`; returns the best vertex and
/// value seen. Deterministic for a fixed start.
fn nelder_mead(
    f: &impl Fn([f64; 3]) -> Option<f64>,
    start: [f64; 3],
    step: [f64; 3],
    max_iter: usize,
) -> Option<([f64; 3], f64)> {
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    let v0 = f(start)?;
    simplex.push((start, v0));
    for d in 0..3 {
        let mut x = start;
        x[d] += step[d];
        let v = f(x)?;
        simplex.push((x, v));
    }
    let centroid = |s: &[([f64; 3], f64)]| {
        let mut c = [0.0; 3];
        for (x, _) in &s[..3] {
            for d in 0..3 {
                c[d] += x[d] / 3.0;
            }
        }
        c
    };
    for _ in 0..max_iter {
        // best first
        simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[3].1;
        if (best - worst).abs() <= 1e-12 * (1.0 + best.abs()) {
            break;
        }
        let c = centroid(&simplex);
        let xw = simplex[3].0;
        let reflect: [f64; 3] = std::array::from_fn(|d| c[d] + (c[d] - xw[d]));
        let fr = match f(reflect) {
            Some(v) => v,
            None => break,
        };
        if fr > simplex[0].1 {
            let expand: [f64; 3] = std::array::from_fn(|d| c[d] + 2.0 * (c[d] - xw[d]));
            let fe = f(expand).unwrap_or(f64::NEG_INFINITY);
            simplex[3] = if fe > fr { (expand, fe) } else { (reflect, fr) };
        } else if fr > simplex[2].1 {
            simplex[3] = (reflect, fr);
        } else {
            let contract: [f64; 3] = std::array::from_fn(|d| c[d] + 0.5 * (xw[d] - c[d]));
            let fc = f(contract).unwrap_or(f64::NEG_INFINITY);
            if fc > simplex[3].1 {
                simplex[3] = (contract, fc);
            } else {
                // shrink toward best
                let xb = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    let x: [f64; 3] = std::array::from_fn(|d| xb[d] + 0.5 * (v.0[d] - xb[d]));
                    match f(x) {
                        Some(val) => *v = (x, val),
                        None => return Some((simplex[0].0, simplex[0].1)),
                    }
                }
            }
        }
    }
    simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    Some((simplex[0].0, simplex[0].1))
}

/// Golden-section sweeps over each coordinate around `x`, keeping any
/// improvement. Polishes the simplex result.
fn coordinate_polish(
    f: &impl Fn([f64; 3]) -> Option<f64>,
    mut x: [f64; 3],
    mut fx: f64,
    half_width: [f64; 3],
) -> ([f64; 3], f64) {
    const PHI: f64 = 0.6180339887498949;
    for _sweep in 0..3 {
        for d in 0..3 {
            let mut lo = x[d] - half_width[d];
            let mut hi = x[d] + half_width[d];
            let eval = |v: f64, x: &[f64; 3]| {
                let mut y = *x;
                y[d] = v;
                f(y).unwrap_or(f64::NEG_INFINITY)
            };
            let mut x1 = hi - PHI * (hi - lo);
            let mut x2 = lo + PHI * (hi - lo);
            let mut f1 = eval(x1, &x);
            let mut f2 = eval(x2, &x);
            for _ in 0..32 {
                if f1 < f2 {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + PHI * (hi - lo);
                    f2 = eval(x2, &x);
                } else {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - PHI * (hi - lo);
                    f1 = eval(x1, &x);
                }
            }
            let (xv, fv) = if f1 > f2 { (x1, f1) } else { (x2, f2) };
            if fv > fx {
                x[d] = xv;
                fx = fv;
            }
        }
    }
    (x, fx)
}

/// Fit hyperparameters by maximizing the marginal log likelihood with
/// `restarts` seeded initializations. Deterministic given `seed`.
pub fn fit(train: &TrainingSet, restarts: usize, seed: u64) -> Result<GpHyperparams, SurrogateError> {
    fit_with(train, restarts, seed, SurrogateConfig::default())
}

pub fn fit_with(
    train: &TrainingSet,
    restarts: usize,
    seed: u64,
    config: SurrogateConfig,
) -> Result<GpHyperparams, SurrogateError> {
    if train.len() < 2 {
        return Err(SurrogateError::TooFewPoints { need: 2, got: train.len() });
    }
    let restarts = restarts.max(1);
    let signed = train.signed_targets();
    let gram = train.gram(config.kernel);
    let space = SearchSpace::from_targets(&signed);

    let objective = |x: [f64; 3]| -> Option<f64> {
        let hp = space.to_hp(x);
        mll_from_gram(&gram, &signed, &hp).ok().filter(|v| v.is_finite())
    };

    let n = signed.len() as f64;
    let data_mean = signed.iter().sum::<f64>() / n;
    let data_var = signed.iter().map(|y| (y - data_mean).powi(2)).sum::<f64>() / n;

    let start_for = |r: usize| -> [f64; 3] {
        if r == 0 {
            // moment-matched start
            space.clamp([
                data_mean,
                data_var.clamp(1e-4, 1e2).ln(),
                (0.1 * data_var).clamp(1e-3, 1e2).ln(),
            ])
        } else {
            let mut rng = stream_rng(seed, r as u64);
            space.clamp([
                rng.gen_range(space.mean_lo..=space.mean_hi),
                rng.gen_range(space.ln_scale_lo..=space.ln_scale_hi),
                rng.gen_range(space.ln_noise_lo..=space.ln_noise_hi),
            ])
        }
    };

    let run_restart = |r: usize| nelder_mead(&objective, start_for(r), [0.25, 0.5, 0.5], 200);

    #[cfg(feature = "parallel")]
    let results: Vec<Option<([f64; 3], f64)>> = (0..restarts).into_par_iter().map(run_restart).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Option<([f64; 3], f64)>> = (0..restarts).map(run_restart).collect();

    // best value wins; earlier restart wins ties because of strict >
    let mut best: Option<([f64; 3], f64)> = None;
    for r in results.into_iter().flatten() {
        if best.as_ref().map_or(true, |(_, fb)| r.1 > *fb) {
            best = Some(r);
        }
    }
    let Some((x, fx)) = best else {
        return Err(SurrogateError::AllRestartsFailed { best: None });
    };
    let (x, _fx) = coordinate_polish(&objective, x, fx, [0.5, 1.0, 1.0]);
    Ok(space.to_hp(x))
}

/// GP with a precomputed training factorization, shared by the prediction
/// calls within one loop iteration.
pub struct FittedSurrogate<'a> {
    train: &'a TrainingSet,
    hp: GpHyperparams,
    config: SurrogateConfig,
    chol_l: Matrix,
    alpha: Vec<f64>,
}

impl<'a> FittedSurrogate<'a> {
    pub fn build(
        train: &'a TrainingSet,
        hp: GpHyperparams,
        config: SurrogateConfig,
    ) -> Result<Self, SurrogateError> {
        if train.is_empty() {
            return Err(SurrogateError::EmptyTrainingSet);
        }
        let t = train.len();
        let gram = train.gram(config.kernel);
        let k = Matrix::from_fn(t, t, |i, j| {
            hp.output_scale * gram.get(i, j) + if i == j { hp.noise } else { 0.0 }
        });
        let (chol_l, _) = cholesky_with_jitter(&k)?;
        let signed = train.signed_targets();
        let r: Vec<f64> = signed.iter().map(|y| y - hp.mean_const).collect();
        let alpha = cholesky_solve(&chol_l, &r);
        Ok(FittedSurrogate { train, hp, config, chol_l, alpha })
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hp
    }

    fn cross_column(&self, fp: &CountFingerprint) -> Vec<f64> {
        self.train
            .inputs
            .iter()
            .map(|x| self.hp.output_scale * tanimoto_unchecked(x, fp, self.config.kernel))
            .collect()
    }

    fn check_subset(&self, pool: &CandidatePool, subset: &[usize]) -> Result<(), SurrogateError> {
        if subset.is_empty() {
            return Err(SurrogateError::EmptySubset);
        }
        for &i in subset {
            if i >= pool.len() {
                return Err(SurrogateError::IndexOutOfRange(i, pool.len()));
            }
        }
        if let Some(train_idx) = self.train.pool_indices() {
            let held: std::collections::HashSet<usize> = train_idx.iter().copied().collect();
            if let Some(&bad) = subset.iter().find(|i| held.contains(i)) {
                return Err(SurrogateError::SubsetOverlapsTraining(bad));
            }
        }
        Ok(())
    }

    /// Per-candidate predictive mean and variance (no cross-covariances);
    /// O(t^2) per candidate.
    pub fn marginals(
        &self,
        pool: &CandidatePool,
        subset: &[usize],
    ) -> Result<(Vec<f64>, Vec<f64>), SurrogateError> {
        self.check_subset(pool, subset)?;
        let prior_noise = if self.config.predictive_noise { self.hp.noise } else { 0.0 };
        let one = |&i: &usize| -> (f64, f64) {
            let fp = pool.fingerprint(i);
            let k = self.cross_column(fp);
            let mean = self.hp.mean_const + dot(&k, &self.alpha);
            let mut w = k;
            solve_lower(&self.chol_l, &mut w);
            let prior = self.hp.output_scale * tanimoto_unchecked(fp, fp, self.config.kernel);
            let var = (prior - dot(&w, &w) + prior_noise).max(0.0);
            (mean, var)
        };
        #[cfg(feature = "parallel")]
        let pairs: Vec<(f64, f64)> = subset.par_iter().map(one).collect();
        #[cfg(not(feature = "parallel"))]
        let pairs: Vec<(f64, f64)> = subset.iter().map(one).collect();
        Ok(pairs.into_iter().unzip())
    }

    /// Joint predictive posterior over `subset` (means and full covariance).
    pub fn joint(&self, pool: &CandidatePool, subset: &[usize]) -> Result<GaussianPosterior, SurrogateError> {
        self.check_subset(pool, subset)?;
        let t = self.train.len();
        let s = subset.len();

        // W = L^-1 K_cross, one subset candidate per row (s x t)
        let mut w = Matrix::zeros(s, t);
        let chol = &self.chol_l;
        let fill_row = |(j, row): (usize, &mut [f64])| {
            let k = self.cross_column(pool.fingerprint(subset[j]));
            row.copy_from_slice(&k);
            solve_lower(chol, row);
        };
        #[cfg(feature = "parallel")]
        w.as_mut_slice().par_chunks_mut(t.max(1)).enumerate().for_each(fill_row);
        #[cfg(not(feature = "parallel"))]
        w.as_mut_slice().chunks_mut(t.max(1)).enumerate().for_each(fill_row);

        let means: Vec<f64> = subset
            .iter()
            .map(|&i| self.hp.mean_const + dot(&self.cross_column(pool.fingerprint(i)), &self.alpha))
            .collect();

        let prior_noise = if self.config.predictive_noise { self.hp.noise } else { 0.0 };
        let mut cov = Matrix::zeros(s, s);
        for i in 0..s {
            let fi = pool.fingerprint(subset[i]);
            let prior_ii = self.hp.output_scale * tanimoto_unchecked(fi, fi, self.config.kernel);
            cov.set(i, i, prior_ii - dot(w.row(i), w.row(i)) + prior_noise);
            for j in (i + 1)..s {
                let prior = self.hp.output_scale
                    * tanimoto_unchecked(fi, pool.fingerprint(subset[j]), self.config.kernel);
                let v = prior - dot(w.row(i), w.row(j));
                cov.set(i, j, v);
                cov.set(j, i, v);
            }
        }
        Ok(GaussianPosterior::new(means, cov)?)
    }
}

/// Joint GP predictive posterior over `subset`. An empty training set yields
/// the prior, which is what a freshly seeded campaign starts from.
pub fn posterior(
    train: &TrainingSet,
    hp: &GpHyperparams,
    pool: &CandidatePool,
    subset: &[usize],
) -> Result<GaussianPosterior, SurrogateError> {
    posterior_with(train, hp, pool, subset, SurrogateConfig::default())
}

pub fn posterior_with(
    train: &TrainingSet,
    hp: &GpHyperparams,
    pool: &CandidatePool,
    subset: &[usize],
    config: SurrogateConfig,
) -> Result<GaussianPosterior, SurrogateError> {
    if train.is_empty() {
        if subset.is_empty() {
            return Err(SurrogateError::EmptySubset);
        }
        for &i in subset {
            if i >= pool.len() {
                return Err(SurrogateError::IndexOutOfRange(i, pool.len()));
            }
        }
        let s = subset.len();
        let mean = vec![hp.mean_const; s];
        let extra = if config.predictive_noise { hp.noise } else { 0.0 };
        let cov = Matrix::from_fn(s, s, |i, j| {
            hp.output_scale
                * tanimoto_unchecked(pool.fingerprint(subset[i]), pool.fingerprint(subset[j]), config.kernel)
                + if i == j { extra } else { 0.0 }
        });
        return Ok(GaussianPosterior::new(mean, cov)?);
    }
    FittedSurrogate::build(train, *hp, config)?.joint(pool, subset)
}
