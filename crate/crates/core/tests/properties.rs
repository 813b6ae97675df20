//! Cross-module invariants: similarity axioms, Gram factorizability, score
//! normalization, and the statistical structure of the synthetic pools.

use proptest::prelude::*;

use qpo_core::campaign::{synthetic_pool, SyntheticKind};
use qpo_core::fingerprints::{pairwise_tanimoto, tanimoto, CandidatePool, CountFingerprint};
use qpo_core::gaussian::{cholesky_with_jitter, sample_joint, GaussianPosterior, SampleMatrix};
use qpo_core::linalg::Matrix;
use qpo_core::rng::{mix, SeedLineage};

const DIM: usize = 256;

fn fingerprint_strategy() -> impl Strategy<Value = CountFingerprint> {
    proptest::collection::vec((0..DIM as u32, 1..5u32), 0..12)
        .prop_map(|pairs| CountFingerprint::from_counts(pairs, DIM).unwrap())
}

proptest! {
    #[test]
    fn tanimoto_is_symmetric(a in fingerprint_strategy(), b in fingerprint_strategy()) {
        let ab = tanimoto(&a, &b).unwrap();
        let ba = tanimoto(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn tanimoto_self_is_one_and_range_holds(a in fingerprint_strategy(), b in fingerprint_strategy()) {
        prop_assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
        let ab = tanimoto(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn gram_matrices_factor_with_jitter(fps in proptest::collection::vec(fingerprint_strategy(), 2..24)) {
        let n = fps.len();
        let pool = CandidatePool::new(fps, None, None, DIM).unwrap();
        let subset: Vec<usize> = (0..n).collect();
        let gram = pairwise_tanimoto(&pool, &subset).unwrap();
        // PSD up to numerical jitter: the ladder must succeed
        let (_, jitter) = cholesky_with_jitter(&gram).unwrap();
        prop_assert!(jitter <= 1e-4);
    }

    #[test]
    fn qpo_scores_sum_to_one(rows in proptest::collection::vec(
        proptest::collection::vec(-1e3f64..1e3, 5), 1..60)) {
        let m = rows.len() as u64;
        let samples = SampleMatrix::from_matrix(
            Matrix::from_rows(rows),
            SeedLineage { base_seed: 0, first_stream: 0, stream_count: m },
        );
        let scores = qpo_core::acquisition::qpo_scores(&samples);
        let total: f64 = scores.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(scores.iter().all(|&s| s >= 0.0));
    }
}

/// Spearman rank correlation between two equally long slices.
fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(x: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
        let mut r = vec![0.0; x.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }
    let ra = ranks(a);
    let rb = ranks(b);
    let n = a.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for i in 0..a.len() {
        let xa = ra[i] - mean;
        let xb = rb[i] - mean;
        num += xa * xb;
        da += xa * xa;
        db += xb * xb;
    }
    num / (da.sqrt() * db.sqrt())
}

/// gp-draw objectives must echo the Tanimoto correlation structure: across
/// pairs, similarity and the product of centered objective values correlate
/// positively (a Mantel-style check averaged over seeds).
#[test]
fn gp_draw_objective_tracks_similarity_structure() {
    let n = 500usize;
    let mut correlations = Vec::new();
    for seed in 0..10u64 {
        let pool = synthetic_pool(SyntheticKind::GpDraw, n, 128, mix(&[seed, 2024])).unwrap();
        let vals = pool.oracle_values().unwrap();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let all: Vec<usize> = (0..n).collect();
        let gram = pairwise_tanimoto(&pool, &all).unwrap();
        let mut sims = Vec::with_capacity(n * (n - 1) / 2);
        let mut prods = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                sims.push(gram.get(i, j));
                prods.push((vals[i] - mean) * (vals[j] - mean));
            }
        }
        correlations.push(spearman(&sims, &prods));
    }
    let avg = correlations.iter().sum::<f64>() / correlations.len() as f64;
    assert!(avg > 0.0, "average Mantel-style correlation {avg} (per-seed: {correlations:?})");
}

/// Joint sampling must agree with the analytic optimality probabilities on
/// fresh bivariate posteriors (dual-route smoke; the full-size version runs
/// in the acceptance suite).
#[test]
fn sampling_agrees_with_closed_form_bivariate() {
    for trial in 0..5u64 {
        let mut delta = [0.0f64; 2];
        let mean = vec![0.3 * trial as f64, 0.1];
        let cov = Matrix::from_rows(vec![vec![1.0 + trial as f64 * 0.2, 0.3], vec![0.3, 0.8]]);
        let post = GaussianPosterior::new(mean, cov).unwrap();
        let m = 200_000;
        let samples = sample_joint(&post, m, mix(&[trial, 3])).unwrap();
        let scores = qpo_core::acquisition::qpo_scores(&samples);
        for i in 0..2 {
            let p = qpo_core::gaussian::prob_max_analytic(&post, i).unwrap();
            let tol = 4.0 * (p * (1.0 - p) / m as f64).sqrt() + 1e-9;
            delta[i] = (scores[i] - p).abs();
            assert!(delta[i] <= tol, "trial {trial} cand {i}: |{} - {p}| > {tol}", scores[i]);
        }
    }
}
