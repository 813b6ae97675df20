//! Multivariate Gaussian machinery: Cholesky factorization with an
//! escalating jitter ladder, reproducible joint sampling, empirical moment
//! fitting, and closed-form / quadrature optimality probabilities for two and
//! three candidates.
//!
//! Sampling reproducibility contract: sample `m` is drawn from RNG stream
//! `(seed, m)`, so the same `(seed, M, n)` triple yields a bit-identical
//! matrix no matter how rows are scheduled across threads.

use std::sync::OnceLock;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cholesky, dot, ldl_min_pivot, CholeskyOutcome, Matrix};
use crate::rng::{stream_rng, SeedLineage};
use crate::ErrorClass;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Noise-like diagonal shifts attempted, as multiples of the mean diagonal.
const JITTER_LADDER_START: f64 = 1e-10;
const JITTER_LADDER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, Error)]
pub enum GaussianError {
    #[error("covariance is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("covariance contains non-finite entries")]
    NotFinite,
    #[error("mean length {0} does not match covariance size {1}")]
    ShapeMismatch(usize, usize),
    #[error("matrix indefinite at maximum jitter; most negative pivot {pivot:.6e}")]
    Indefinite { pivot: f64 },
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("analytic optimality probability supports n in {{2, 3}}, got {0}")]
    UnsupportedSize(usize),
    #[error("candidate index {0} out of range for posterior over {1}")]
    IndexOutOfRange(usize, usize),
}

impl GaussianError {
    pub fn class(&self) -> ErrorClass {
        match self {
            GaussianError::Indefinite { .. } => ErrorClass::Numeric,
            _ => ErrorClass::Usage,
        }
    }
}

/// Standard normal CDF via the complementary error function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Factor `cov + jitter * I = L L^T`, escalating `jitter` through decades of
/// the mean diagonal (from 1e-10 to 1e-4 of trace/n) until the factorization
/// succeeds. Returns the factor and the jitter that was needed.
pub fn cholesky_with_jitter(cov: &Matrix) -> Result<(Matrix, f64), GaussianError> {
    if cov.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(GaussianError::NotFinite);
    }
    let n = cov.rows().max(1);
    let scale = {
        let t = cov.trace() / n as f64;
        if t > 0.0 {
            t
        } else {
            1.0
        }
    };
    let mut shift = 0.0;
    loop {
        match cholesky(cov, shift) {
            CholeskyOutcome::Factor(l) => return Ok((l, shift)),
            CholeskyOutcome::Indefinite { pivot } => {
                let next = if shift == 0.0 {
                    JITTER_LADDER_START * scale
                } else {
                    shift * 10.0
                };
                if next > JITTER_LADDER_MAX * scale {
                    let worst = ldl_min_pivot(cov, 0.0).unwrap_or(pivot);
                    return Err(GaussianError::Indefinite { pivot: worst });
                }
                shift = next;
            }
        }
    }
}

/// Joint Gaussian over a candidate subset: mean vector, covariance, and a
/// lazily computed Cholesky factor (with the jitter it needed).
#[derive(Debug)]
pub struct GaussianPosterior {
    mean: Vec<f64>,
    covariance: Matrix,
    chol: OnceLock<Result<(Matrix, f64), GaussianError>>,
}

impl Clone for GaussianPosterior {
    fn clone(&self) -> Self {
        GaussianPosterior {
            mean: self.mean.clone(),
            covariance: self.covariance.clone(),
            chol: OnceLock::new(),
        }
    }
}

impl GaussianPosterior {
    /// Validates shape, finiteness, and symmetry (1e-10 relative tolerance).
    pub fn new(mean: Vec<f64>, covariance: Matrix) -> Result<Self, GaussianError> {
        if covariance.rows() != covariance.cols() || mean.len() != covariance.rows() {
            return Err(GaussianError::ShapeMismatch(mean.len(), covariance.rows()));
        }
        if mean.iter().any(|v| !v.is_finite()) || covariance.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(GaussianError::NotFinite);
        }
        let asym = covariance.asymmetry();
        if asym > 1e-10 {
            return Err(GaussianError::NotSymmetric(asym));
        }
        Ok(GaussianPosterior { mean, covariance, chol: OnceLock::new() })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    /// Marginal standard deviations (sqrt of the covariance diagonal,
    /// clamped at zero).
    pub fn stds(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.covariance.get(i, i).max(0.0).sqrt())
            .collect()
    }

    /// Lower Cholesky factor of covariance + jitter * I, computed on first
    /// use and cached.
    pub fn chol(&self) -> Result<&Matrix, GaussianError> {
        match self.chol.get_or_init(|| cholesky_with_jitter(&self.covariance)) {
            Ok((l, _)) => Ok(l),
            Err(e) => Err(e.clone()),
        }
    }

    /// Jitter the cached factorization needed; `None` before first use.
    pub fn jitter_used(&self) -> Option<f64> {
        self.chol.get().and_then(|r| r.as_ref().ok().map(|(_, j)| *j))
    }
}

/// M joint samples laid out one per row, with the stream addressing that
/// produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleMatrix {
    values: Matrix,
    seed_lineage: SeedLineage,
}

impl SampleMatrix {
    pub fn n_samples(&self) -> usize {
        self.values.rows()
    }

    pub fn n_candidates(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, m: usize) -> &[f64] {
        self.values.row(m)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn seed_lineage(&self) -> &SeedLineage {
        &self.seed_lineage
    }

    /// Wrap an explicit matrix (tests and conditional batch construction).
    pub fn from_matrix(values: Matrix, seed_lineage: SeedLineage) -> Self {
        SampleMatrix { values, seed_lineage }
    }
}

fn fill_sample_row(row: &mut [f64], mean: &[f64], l: &Matrix, seed: u64, stream: u64) {
    let n = mean.len();
    let mut rng = stream_rng(seed, stream);
    let mut eps = vec![0.0f64; n];
    for e in eps.iter_mut() {
        *e = StandardNormal.sample(&mut rng);
    }
    for i in 0..n {
        row[i] = mean[i] + dot(&l.row(i)[..=i], &eps[..=i]);
    }
}

/// Draw `m_samples` i.i.d. joint samples `mean + L eps` from the posterior.
///
/// Sample `m` comes from RNG stream `(seed, m)`; output is bit-identical for
/// a given `(seed, M, n)` regardless of thread count.
pub fn sample_joint(
    post: &GaussianPosterior,
    m_samples: usize,
    seed: u64,
) -> Result<SampleMatrix, GaussianError> {
    if m_samples == 0 {
        return Err(GaussianError::TooFewSamples { need: 1, got: 0 });
    }
    let l = post.chol()?;
    let n = post.len();
    let mut values = Matrix::zeros(m_samples, n);

    #[cfg(feature = "parallel")]
    {
        values
            .as_mut_slice()
            .par_chunks_mut(n.max(1))
            .enumerate()
            .for_each(|(m, row)| fill_sample_row(row, post.mean(), l, seed, m as u64));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (m, row) in values.as_mut_slice().chunks_mut(n.max(1)).enumerate() {
            fill_sample_row(row, post.mean(), l, seed, m as u64);
        }
    }

    Ok(SampleMatrix {
        values,
        seed_lineage: SeedLineage {
            base_seed: seed,
            first_stream: 0,
            stream_count: m_samples as u64,
        },
    })
}

/// Empirical mean and unbiased covariance (divisor M - 1) of the samples.
pub fn fit_gaussian(samples: &SampleMatrix) -> Result<GaussianPosterior, GaussianError> {
    let m = samples.n_samples();
    if m < 2 {
        return Err(GaussianError::TooFewSamples { need: 2, got: m });
    }
    let n = samples.n_candidates();
    let mut mean = vec![0.0f64; n];
    for r in 0..m {
        let row = samples.row(r);
        for i in 0..n {
            mean[i] += row[i];
        }
    }
    for v in mean.iter_mut() {
        *v /= m as f64;
    }
    let mut cov = Matrix::zeros(n, n);
    let mut centered = vec![0.0f64; n];
    for r in 0..m {
        let row = samples.row(r);
        for i in 0..n {
            centered[i] = row[i] - mean[i];
        }
        for i in 0..n {
            let ci = centered[i];
            let out = cov.row_mut(i);
            for j in i..n {
                out[j] += ci * centered[j];
            }
        }
    }
    let denom = (m - 1) as f64;
    for i in 0..n {
        for j in i..n {
            let v = cov.get(i, j) / denom;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    GaussianPosterior::new(mean, cov)
}

/// Adaptive Simpson integration on [a, b] to absolute tolerance `tol`.
fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Upper-quadrant probability P(Z1 > a, Z2 > b) for standard bivariate
/// normals with correlation `rho`, by quadrature over the conditional CDF.
fn bivariate_upper(a: f64, b: f64, rho: f64) -> f64 {
    const CUT: f64 = 9.5; // beyond this the tail mass is < 1e-20
    if rho >= 1.0 - 1e-12 {
        return 1.0 - std_normal_cdf(a.max(b));
    }
    if rho <= -1.0 + 1e-12 {
        // Z2 = -Z1: need a < Z1 < -b
        return (std_normal_cdf(-b) - std_normal_cdf(a)).max(0.0);
    }
    let denom = (1.0 - rho * rho).sqrt();
    let lo = a.max(-CUT);
    if lo >= CUT {
        return 0.0;
    }
    let integrand = move |u: f64| std_normal_pdf(u) * (1.0 - std_normal_cdf((b - rho * u) / denom));
    adaptive_simpson(&integrand, lo, CUT, 1e-9)
}

/// Probability that component `i` is the maximum of the joint Gaussian, for
/// posteriors over two or three candidates.
///
/// For n = 2 this is the closed-form normal CDF of the difference; for n = 3
/// the difference vector's upper-orthant probability is evaluated by
/// adaptive quadrature to absolute error below 1e-6. A zero-variance
/// difference degenerates to the indicator of the mean ordering (ties 0.5).
pub fn prob_max_analytic(post: &GaussianPosterior, i: usize) -> Result<f64, GaussianError> {
    let n = post.len();
    if i >= n {
        return Err(GaussianError::IndexOutOfRange(i, n));
    }
    let mu = post.mean();
    let cov = post.covariance();
    let diff_stats = |j: usize| -> (f64, f64) {
        // mean and variance of y_i - y_j
        (
            mu[i] - mu[j],
            cov.get(i, i) + cov.get(j, j) - 2.0 * cov.get(i, j),
        )
    };
    match n {
        2 => {
            let j = 1 - i;
            let (m, v) = diff_stats(j);
            Ok(degenerate_or(m, v, |m, s| std_normal_cdf(m / s)))
        }
        3 => {
            let others: Vec<usize> = (0..3).filter(|&j| j != i).collect();
            let (j, k) = (others[0], others[1]);
            let (m1, v1) = diff_stats(j);
            let (m2, v2) = diff_stats(k);
            // cov(y_i - y_j, y_i - y_k)
            let c12 = cov.get(i, i) - cov.get(i, k) - cov.get(i, j) + cov.get(j, k);
            let tiny = 1e-300;
            match (v1 > tiny, v2 > tiny) {
                (false, false) => Ok(half_indicator(m1) * half_indicator(m2)),
                (false, true) => Ok(half_indicator(m1) * std_normal_cdf(m2 / v2.sqrt())),
                (true, false) => Ok(half_indicator(m2) * std_normal_cdf(m1 / v1.sqrt())),
                (true, true) => {
                    let s1 = v1.sqrt();
                    let s2 = v2.sqrt();
                    let rho = (c12 / (s1 * s2)).clamp(-1.0, 1.0);
                    // P(z1 > 0, z2 > 0) in standardized coordinates
                    Ok(bivariate_upper(-m1 / s1, -m2 / s2, rho))
                }
            }
        }
        _ => Err(GaussianError::UnsupportedSize(n)),
    }
}

fn half_indicator(m: f64) -> f64 {
    if m > 0.0 {
        1.0
    } else if m < 0.0 {
        0.0
    } else {
        0.5
    }
}

/// Reference three-candidate posterior used by the diagnostic subcommand and
/// tests: two nearly duplicate high-mean candidates plus an independent long
/// shot. The mean ranking (1, 2, 3) is misleading here; the optimality mass
/// is roughly 84% / 0% / 16%, which makes it a sharp probe for batch rules
/// that do or do not account for covariance.
pub fn correlated_trio() -> GaussianPosterior {
    GaussianPosterior::new(
        vec![10.0, 5.0, 0.0],
        Matrix::from_rows(vec![
            vec![101.0, 100.0, 0.0],
            vec![100.0, 101.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]),
    )
    .expect("reference posterior is well formed")
}

fn degenerate_or(m: f64, v: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
    if v > 1e-300 {
        f(m, v.sqrt())
    } else {
        half_indicator(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::mix;

    fn toy_posterior() -> GaussianPosterior {
        correlated_trio()
    }

    #[test]
    fn identity_needs_no_jitter() {
        let (l, jitter) = cholesky_with_jitter(&Matrix::identity(3)).unwrap();
        assert_eq!(jitter, 0.0);
        assert_eq!(l, Matrix::identity(3));
    }

    #[test]
    fn toy_covariance_is_pd_without_jitter() {
        let post = toy_posterior();
        let (_, jitter) = cholesky_with_jitter(post.covariance()).unwrap();
        assert_eq!(jitter, 0.0);
    }

    #[test]
    fn rank_one_needs_jitter_and_reconstructs() {
        // ones(2,2) has eigenvalues {2, 0}
        let a = Matrix::from_rows(vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        let (l, jitter) = cholesky_with_jitter(&a).unwrap();
        assert!(jitter > 0.0);
        // L L^T should be a + jitter I within small relative error
        let mut err = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                let rec = dot(&l.row(i)[..=i.min(j)], &l.row(j)[..=i.min(j)]);
                let target = a.get(i, j) + if i == j { jitter } else { 0.0 };
                err = err.max((rec - target).abs());
            }
        }
        assert!(err / a.frobenius_norm() < 1e-8);
    }

    #[test]
    fn truly_indefinite_reports_most_negative_pivot() {
        let a = Matrix::from_rows(vec![vec![1.0, 4.0], vec![4.0, 1.0]]);
        match cholesky_with_jitter(&a) {
            Err(GaussianError::Indefinite { pivot }) => assert!(pivot < -10.0),
            other => panic!("expected indefinite, got {other:?}"),
        }
    }

    #[test]
    fn sampling_matches_univariate_moments() {
        let post = GaussianPosterior::new(vec![0.0], Matrix::identity(1)).unwrap();
        let s = sample_joint(&post, 100_000, 7).unwrap();
        let m = s.n_samples() as f64;
        let mean: f64 = (0..s.n_samples()).map(|r| s.row(r)[0]).sum::<f64>() / m;
        let var: f64 = (0..s.n_samples()).map(|r| (s.row(r)[0] - mean).powi(2)).sum::<f64>() / (m - 1.0);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn zero_covariance_samples_collapse_to_mean() {
        let post = GaussianPosterior::new(vec![3.0, -1.0], Matrix::zeros(2, 2)).unwrap();
        let s = sample_joint(&post, 64, 3).unwrap();
        for r in 0..s.n_samples() {
            assert!((s.row(r)[0] - 3.0).abs() < 1e-3);
            assert!((s.row(r)[1] + 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let post = toy_posterior();
        let a = sample_joint(&post, 257, 11).unwrap();
        let b = sample_joint(&post, 257, 11).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn thread_count_does_not_change_output() {
        let post = toy_posterior();
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = pool1.install(|| sample_joint(&post, 500, 21)).unwrap();
        let b = pool4.install(|| sample_joint(&post, 500, 21)).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn affine_equivariance_of_sampling() {
        let post = toy_posterior();
        let (a, c) = (2.0, -3.0);
        let scaled_cov = Matrix::from_fn(3, 3, |i, j| a * a * post.covariance().get(i, j));
        let scaled_mean: Vec<f64> = post.mean().iter().map(|m| a * m + c).collect();
        let scaled = GaussianPosterior::new(scaled_mean, scaled_cov).unwrap();
        let s0 = sample_joint(&post, 200, 5).unwrap();
        let s1 = sample_joint(&scaled, 200, 5).unwrap();
        for r in 0..200 {
            for i in 0..3 {
                let expect = a * s0.row(r)[i] + c;
                assert!((s1.row(r)[i] - expect).abs() < 1e-10 * (1.0 + expect.abs()));
            }
        }
    }

    #[test]
    fn fit_gaussian_on_constant_samples() {
        let v = vec![1.5, -2.0];
        let values = Matrix::from_rows(vec![v.clone(); 8]);
        let s = SampleMatrix::from_matrix(values, SeedLineage { base_seed: 0, first_stream: 0, stream_count: 8 });
        let g = fit_gaussian(&s).unwrap();
        assert_eq!(g.mean(), &v[..]);
        assert!(g.covariance().frobenius_norm() == 0.0);
    }

    #[test]
    fn fit_gaussian_two_points_hand_value() {
        let values = Matrix::from_rows(vec![vec![0.0], vec![2.0]]);
        let s = SampleMatrix::from_matrix(values, SeedLineage { base_seed: 0, first_stream: 0, stream_count: 2 });
        let g = fit_gaussian(&s).unwrap();
        assert_eq!(g.mean()[0], 1.0);
        assert_eq!(g.covariance().get(0, 0), 2.0); // divisor M-1 = 1
    }

    #[test]
    fn fit_gaussian_rejects_single_sample() {
        let s = SampleMatrix::from_matrix(
            Matrix::from_rows(vec![vec![1.0]]),
            SeedLineage { base_seed: 0, first_stream: 0, stream_count: 1 },
        );
        assert!(matches!(fit_gaussian(&s), Err(GaussianError::TooFewSamples { need: 2, got: 1 })));
    }

    #[test]
    fn fit_gaussian_recovers_toy_moments() {
        let post = toy_posterior();
        let s = sample_joint(&post, 100_000, 13).unwrap();
        let g = fit_gaussian(&s).unwrap();
        for i in 0..3 {
            assert!((g.mean()[i] - post.mean()[i]).abs() < 0.15, "mean {i}");
            for j in 0..3 {
                assert!(
                    (g.covariance().get(i, j) - post.covariance().get(i, j)).abs() < 2.0,
                    "cov {i}{j}"
                );
            }
        }
    }

    #[test]
    fn moment_error_shrinks_with_sample_count() {
        let post = toy_posterior();
        let err_at = |m: usize| {
            let s = sample_joint(&post, m, 17).unwrap();
            let g = fit_gaussian(&s).unwrap();
            let mut d = Matrix::zeros(3, 3);
            for i in 0..3 {
                for j in 0..3 {
                    d.set(i, j, g.covariance().get(i, j) - post.covariance().get(i, j));
                }
            }
            d.frobenius_norm()
        };
        let (e3, e4, e5) = (err_at(1_000), err_at(10_000), err_at(100_000));
        assert!(e4 < e3, "{e3} -> {e4}");
        assert!(e5 < e4, "{e4} -> {e5}");
        assert!(e3 / e5 > 3.0, "expected roughly 1/sqrt(M) decay, got {e3} -> {e5}");
    }

    #[test]
    fn prob_max_symmetric_pair_is_half() {
        let post = GaussianPosterior::new(vec![0.0, 0.0], Matrix::identity(2)).unwrap();
        assert!((prob_max_analytic(&post, 0).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn prob_max_closed_form_pair() {
        let post = GaussianPosterior::new(vec![1.0, 0.0], Matrix::identity(2)).unwrap();
        let expect = std_normal_cdf(1.0 / 2.0f64.sqrt()); // 0.7602499389065233
        assert!((prob_max_analytic(&post, 0).unwrap() - expect).abs() < 1e-14);
        assert!((expect - 0.7602499389065233).abs() < 1e-12);
    }

    #[test]
    fn prob_max_toy_posterior_quadrature() {
        // Pinned against a high-M Monte Carlo oracle (M = 10^7) prior to
        // freezing; candidate 3 carries roughly 16% of the optimality mass.
        let post = toy_posterior();
        let p3 = prob_max_analytic(&post, 2).unwrap();
        assert!((p3 - 0.161049).abs() < 2e-4, "p3 = {p3}");
        let p1 = prob_max_analytic(&post, 0).unwrap();
        assert!((p1 - 0.838793).abs() < 2e-4, "p1 = {p1}");
    }

    #[test]
    fn prob_max_sums_to_one() {
        for seed in 0..20u64 {
            for n in [2usize, 3] {
                let mut rng = stream_rng(mix(&[seed, n as u64]), 0);
                let mean: Vec<f64> = (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        4.0 * z
                    })
                    .collect();
                // random PSD: A A^T + small diag
                let a = Matrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
                let cov = Matrix::from_fn(n, n, |i, j| {
                    dot(a.row(i), a.row(j)) + if i == j { 0.3 } else { 0.0 }
                });
                let post = GaussianPosterior::new(mean, cov).unwrap();
                let total: f64 = (0..n).map(|i| prob_max_analytic(&post, i).unwrap()).sum();
                assert!((total - 1.0).abs() < 1e-5, "n={n} seed={seed} total={total}");
            }
        }
    }

    #[test]
    fn prob_max_degenerate_tie_is_half() {
        let post = GaussianPosterior::new(vec![1.0, 1.0], Matrix::zeros(2, 2)).unwrap();
        assert_eq!(prob_max_analytic(&post, 0).unwrap(), 0.5);
        let post = GaussianPosterior::new(vec![2.0, 1.0], Matrix::zeros(2, 2)).unwrap();
        assert_eq!(prob_max_analytic(&post, 0).unwrap(), 1.0);
        assert_eq!(prob_max_analytic(&post, 1).unwrap(), 0.0);
    }

    #[test]
    fn prob_max_rejects_large_n() {
        let post = GaussianPosterior::new(vec![0.0; 4], Matrix::identity(4)).unwrap();
        assert!(matches!(prob_max_analytic(&post, 0), Err(GaussianError::UnsupportedSize(4))));
    }
}
