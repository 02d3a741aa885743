use nalgebra::DMatrix;
use pcv_core::baselines::{chi2_scores, Chi2Selector, SparseMatrix, TruncatedSvd};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn seeded_matrix(rows: usize, cols: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(0.0..1.0)).collect()).collect()
}

fn best_rank_k_error(x: &[Vec<f64>], k: usize) -> f64 {
    let m = DMatrix::from_fn(x.len(), x[0].len(), |i, j| x[i][j]);
    let sv = m.singular_values();
    let mut s: Vec<f64> = sv.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s[k..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn reconstruction_error(x: &[Vec<f64>], svd: &TruncatedSvd, reduced: &[Vec<f64>]) -> f64 {
    let mut err = 0.0;
    for (row, z) in x.iter().zip(reduced) {
        for (c, &v) in row.iter().enumerate() {
            let approx: f64 = z.iter().zip(&svd.components).map(|(zk, comp)| zk * comp[c]).sum();
            err += (v - approx).powi(2);
        }
    }
    err.sqrt()
}

#[test]
fn svd_matches_dense_oracle() {
    for seed in 0..5 {
        let x = seeded_matrix(20, 50, seed);
        let (svd, reduced) = TruncatedSvd::fit(&SparseMatrix::from_dense(&x), 5, seed).unwrap();
        let ours = reconstruction_error(&x, &svd, &reduced);
        let best = best_rank_k_error(&x, 5);
        assert!((ours - best).abs() < 1e-6, "seed {seed}: {ours} vs {best}");
        assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn svd_full_rank_reconstructs() {
    let x = seeded_matrix(8, 12, 3);
    let (svd, reduced) = TruncatedSvd::fit(&SparseMatrix::from_dense(&x), 8, 1).unwrap();
    assert!(reconstruction_error(&x, &svd, &reduced) < 1e-8);
}

#[test]
fn svd_zero_column_does_not_move_values() {
    let x = seeded_matrix(15, 10, 4);
    let padded: Vec<Vec<f64>> = x.iter().map(|r| r.iter().copied().chain([0.0]).collect()).collect();
    let (a, _) = TruncatedSvd::fit(&SparseMatrix::from_dense(&x), 4, 2).unwrap();
    let (b, _) = TruncatedSvd::fit(&SparseMatrix::from_dense(&padded), 4, 2).unwrap();
    for (u, v) in a.singular_values.iter().zip(&b.singular_values) {
        assert!((u - v).abs() < 1e-8);
    }
}

/// Per-feature contingency over class sums, written out longhand.
fn brute_chi2(x: &[Vec<f64>], y: &[u8]) -> Vec<f64> {
    let d = x[0].len();
    let n = y.len() as f64;
    (0..d)
        .map(|f| {
            let mut stat = 0.0;
            for class in [0u8, 1] {
                let mut observed = 0.0;
                let mut members = 0.0;
                let mut total = 0.0;
                for (row, &label) in x.iter().zip(y) {
                    total += row[f];
                    if label == class {
                        observed += row[f];
                        members += 1.0;
                    }
                }
                let expected = total * members / n;
                if expected > 0.0 {
                    stat += (observed - expected) * (observed - expected) / expected;
                }
            }
            stat
        })
        .collect()
}

#[test]
fn chi2_hand_fixture() {
    let x = vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![0.0, 3.0], vec![1.0, 1.0]];
    let y = [0, 0, 1, 1];
    let ours = chi2_scores(&SparseMatrix::from_dense(&x), &y).unwrap();
    // feature 0: totals 4, observed (3, 1), expected (2, 2) -> 0.5 + 0.5
    assert!((ours[0] - 1.0).abs() < 1e-12);
    assert_eq!(ours, brute_chi2(&x, &y));
}

proptest! {
    #[test]
    fn chi2_equals_brute_force(
        n in 2usize..=20,
        d in 1usize..=10,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..5.0) }).collect()).collect();
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.5))).collect();
        let ours = chi2_scores(&SparseMatrix::from_dense(&x), &y).unwrap();
        for (a, b) in ours.iter().zip(brute_chi2(&x, &y)) {
            prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
        let k = 1 + (seed as usize % d);
        let (sel, _) = Chi2Selector::fit(&SparseMatrix::from_dense(&x), &y, k).unwrap();
        prop_assert_eq!(sel.selected.len(), k);
    }
}
