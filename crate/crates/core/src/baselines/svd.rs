//! Truncated SVD by block subspace iteration with Rayleigh-Ritz extraction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::sparse::SparseMatrix;
use crate::error::{Error, Result};
use crate::par;

pub const MAX_ITERATIONS: usize = 1000;
const OVERSAMPLE: usize = 10;
const RITZ_TOL: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedSvd {
    /// `k` right singular vectors, each of length `n_cols`.
    pub components: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_vector(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// Modified Gram-Schmidt with reorthogonalization. Columns that collapse
/// (rank deficiency) are replaced with fresh random directions.
fn orthonormalize(cols: &mut [Vec<f64>], rng: &mut ChaCha8Rng) {
    for j in 0..cols.len() {
        let mut attempts = 0;
        loop {
            let before = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
            for _ in 0..2 {
                for i in 0..j {
                    let (done, rest) = cols.split_at_mut(j);
                    let c = dot(&done[i], &rest[0]);
                    for (v, q) in rest[0].iter_mut().zip(&done[i]) {
                        *v -= c * q;
                    }
                }
            }
            let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-10 * before && norm > 1e-300 {
                cols[j].iter_mut().for_each(|v| *v /= norm);
                break;
            }
            attempts += 1;
            assert!(attempts < 100, "cannot extend orthonormal basis");
            cols[j] = random_vector(cols[j].len(), rng);
        }
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues descending and matching eigenvectors as columns.
pub fn symmetric_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let total: f64 = a.iter().flatten().map(|x| x * x).sum();
        if off <= 1e-30 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = (0..n).map(|r| order.iter().map(|&i| v[r][i]).collect()).collect();
    (values, vectors)
}

/// `A q` for each basis column, as n rows of p values.
fn times_basis(m: &SparseMatrix, q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    par::map(&m.rows, |row| q.iter().map(|col| row.iter().map(|&(c, v)| v * col[c]).sum()).collect())
}

/// `A^T y_j` for each column j of `y` (n rows of p values).
fn transpose_times(m: &SparseMatrix, y: &[Vec<f64>], p: usize) -> Vec<Vec<f64>> {
    par::map_range(p, |j| {
        let mut z = vec![0.0; m.n_cols];
        for (row, yi) in m.rows.iter().zip(y) {
            for &(c, v) in row {
                z[c] += v * yi[j];
            }
        }
        z
    })
}

impl TruncatedSvd {
    pub fn fit(m: &SparseMatrix, k: usize, seed: u64) -> Result<(Self, Vec<Vec<f64>>)> {
        let r = m.n_rows().min(m.n_cols);
        if k == 0 || k > r {
            return Err(Error::invalid(format!(
                "svd rank {k} must be in 1..={r} for a {}x{} matrix",
                m.n_rows(),
                m.n_cols
            )));
        }
        let p = (k + OVERSAMPLE).min(r);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q: Vec<Vec<f64>> = (0..p).map(|_| random_vector(m.n_cols, &mut rng)).collect();
        orthonormalize(&mut q, &mut rng);

        let mut prev: Option<Vec<f64>> = None;
        for it in 1..=MAX_ITERATIONS {
            let y = times_basis(m, &q);
            let mut z = transpose_times(m, &y, p);
            orthonormalize(&mut z, &mut rng);
            q = z;

            // Rayleigh-Ritz on span(q): eigenpairs of (AQ)^T (AQ).
            let b = times_basis(m, &q);
            let gram: Vec<Vec<f64>> = (0..p)
                .map(|i| (0..p).map(|j| b.iter().map(|row| row[i] * row[j]).sum()).collect())
                .collect();
            let (vals, w) = symmetric_eigen(gram);
            q = (0..p)
                .map(|j| (0..m.n_cols).map(|c| (0..p).map(|i| q[i][c] * w[i][j]).sum()).collect())
                .collect();

            let top = vals[0].max(0.0);
            let converged = prev
                .as_ref()
                .is_some_and(|pv| (0..k).all(|i| (vals[i] - pv[i]).abs() <= RITZ_TOL * top));
            if converged {
                let mut components: Vec<Vec<f64>> = q.into_iter().take(k).collect();
                for v in &mut components {
                    // Sign convention: largest-magnitude entry positive.
                    let big = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
                    if big < 0.0 {
                        v.iter_mut().for_each(|x| *x = -*x);
                    }
                }
                let svd = TruncatedSvd {
                    components,
                    singular_values: vals[..k].iter().map(|l| l.max(0.0).sqrt()).collect(),
                    iterations: it,
                };
                let reduced = svd.transform(m);
                return Ok((svd, reduced));
            }
            prev = Some(vals);
        }
        Err(Error::Convergence(format!("truncated svd after {MAX_ITERATIONS} iterations")))
    }

    /// Projects rows onto the components (n x k).
    pub fn transform(&self, m: &SparseMatrix) -> Vec<Vec<f64>> {
        times_basis(m, &self.components)
    }
}
