//! Exact t-SNE (O(n^2)) for two-dimensional views of vector datasets.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::par;
use crate::vectorize::VectorDataset;

pub const ENTROPY_TOL: f64 = 1e-5;
const MAX_SEARCH_STEPS: usize = 200;
const P_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub seed: u64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
}

impl Default for TsneParams {
    fn default() -> Self {
        TsneParams {
            perplexity: 30.0,
            iterations: 1000,
            seed: 0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            learning_rate: 200.0,
            momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub perplexity: f64,
    pub iterations: usize,
    /// KL(P || Q) against the unexaggerated P, every 50 iterations and at
    /// the end.
    pub kl_history: Vec<(usize, f64)>,
    pub final_kl: f64,
    /// Rows whose bandwidth search missed the entropy target.
    pub flagged: Vec<usize>,
    pub max_entropy_error: f64,
}

impl Diagnostics {
    pub fn kl_at(&self, iteration: usize) -> Option<f64> {
        self.kl_history.iter().find(|(i, _)| *i == iteration).map(|p| p.1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub points: Vec<[f64; 2]>,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResult {
    pub doc_ids: Vec<String>,
    pub labels: Vec<Label>,
    pub points: Vec<[f64; 2]>,
    pub diagnostics: Diagnostics,
}

/// Per-row conditional distributions and their entropy errors.
pub struct Affinities {
    pub conditional: Vec<Vec<f64>>,
    pub entropy_error: Vec<f64>,
}

fn sq_distances(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    par::map(x, |a| x.iter().map(|b| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()).collect())
}

/// Row `i` of the Gaussian conditional at precision `beta`, with its
/// natural-log entropy. Distances are shifted by the row minimum so the
/// exponentials cannot all underflow.
fn conditional_row(d: &[f64], i: usize, beta: f64, dmin: f64) -> (Vec<f64>, f64) {
    let mut p: Vec<f64> = d
        .iter()
        .enumerate()
        .map(|(j, &dij)| if j == i { 0.0 } else { (-beta * (dij - dmin)).exp() })
        .collect();
    let sum: f64 = p.iter().sum();
    let weighted: f64 = p.iter().zip(d).map(|(pj, dj)| pj * (dj - dmin)).sum();
    let h = sum.ln() + beta * weighted / sum;
    p.iter_mut().for_each(|v| *v /= sum);
    (p, h)
}

/// Binary search on each row's precision until the conditional entropy is
/// within [`ENTROPY_TOL`] of `ln(perplexity)`.
pub fn conditional_affinities(x: &[Vec<f64>], perplexity: f64) -> Affinities {
    let d = sq_distances(x);
    let target = perplexity.ln();
    let rows = par::map_range(x.len(), |i| {
        let dmin = d[i].iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).fold(f64::INFINITY, f64::min);
        let (mut lo, mut hi, mut beta) = (0.0f64, f64::INFINITY, 1.0f64);
        let mut best = conditional_row(&d[i], i, beta, dmin);
        for _ in 0..MAX_SEARCH_STEPS {
            let (p, h) = conditional_row(&d[i], i, beta, dmin);
            let err = (h - target).abs();
            if err < (best.1 - target).abs() || best.1.is_nan() {
                best = (p, h);
            }
            if err <= ENTROPY_TOL {
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        let err = (best.1 - target).abs();
        (best.0, err)
    });
    let (conditional, entropy_error) = rows.into_iter().unzip();
    Affinities {
        conditional,
        entropy_error,
    }
}

/// Symmetrized joint P: `(p_j|i + p_i|j) / 2n`, floored and renormalized.
pub fn joint_probabilities(conditional: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = conditional.len();
    let mut p: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        ((conditional[i][j] + conditional[j][i]) / (2.0 * n as f64)).max(P_FLOOR)
                    }
                })
                .collect()
        })
        .collect();
    let total: f64 = p.iter().map(|r| r.iter().sum::<f64>()).sum();
    p.iter_mut().flatten().for_each(|v| *v /= total);
    p
}

fn kl_divergence(p: &[Vec<f64>], y: &[[f64; 2]]) -> f64 {
    let num: Vec<Vec<f64>> = par::map(y, |a| y.iter().map(|b| 1.0 / (1.0 + (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))).collect());
    let z: f64 = num.iter().enumerate().map(|(i, r)| r.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).sum::<f64>()).sum();
    let per_row = par::map_range(y.len(), |i| {
        (0..y.len())
            .filter(|&j| j != i && p[i][j] > 0.0)
            .map(|j| p[i][j] * (p[i][j] / (num[i][j] / z).max(f64::MIN_POSITIVE)).ln())
            .sum::<f64>()
    });
    per_row.iter().sum()
}

/// Embeds raw rows. Results depend only on the inputs and the seed; row
/// sums are accumulated in a fixed order so thread count does not matter.
pub fn tsne(x: &[Vec<f64>], params: &TsneParams) -> Result<Embedding> {
    let n = x.len();
    if !(params.perplexity > 0.0) {
        return Err(Error::invalid("perplexity must be positive"));
    }
    if (n as f64) < 3.0 * params.perplexity || n < 2 {
        return Err(Error::invalid(format!(
            "perplexity {} is too large for {n} points (need n >= 3 * perplexity)",
            params.perplexity
        )));
    }
    crate::learn::knn::check_matrix(x, None)?;

    let aff = conditional_affinities(x, params.perplexity);
    let flagged: Vec<usize> = aff.entropy_error.iter().enumerate().filter(|(_, e)| **e > ENTROPY_TOL).map(|(i, _)| i).collect();
    if !flagged.is_empty() {
        tracing::warn!(points = flagged.len(), "bandwidth search missed the entropy target");
    }
    let max_entropy_error = aff.entropy_error.iter().copied().fold(0.0, f64::max);
    let p = joint_probabilities(&aff.conditional);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let init = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [init.sample(&mut rng), init.sample(&mut rng)]).collect();
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl_history = Vec::new();

    for it in 1..=params.iterations {
        let exaggeration = if it <= params.exaggeration_iterations { params.early_exaggeration } else { 1.0 };
        let momentum = if it <= params.momentum_switch { params.momentum } else { params.final_momentum };
        let row_z = par::map_range(n, |i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| 1.0 / (1.0 + (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2)))
                .sum::<f64>()
        });
        let z: f64 = row_z.iter().sum();
        let grad = par::map_range(n, |i| {
            let mut g = [0.0f64; 2];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let dy = [y[i][0] - y[j][0], y[i][1] - y[j][1]];
                let num = 1.0 / (1.0 + dy[0] * dy[0] + dy[1] * dy[1]);
                let mult = (exaggeration * p[i][j] - num / z) * num;
                g[0] += 4.0 * mult * dy[0];
                g[1] += 4.0 * mult * dy[1];
            }
            g
        });
        for i in 0..n {
            for k in 0..2 {
                gains[i][k] = if (grad[i][k] > 0.0) != (update[i][k] > 0.0) {
                    gains[i][k] + 0.2
                } else {
                    (gains[i][k] * 0.8).max(0.01)
                };
                update[i][k] = momentum * update[i][k] - params.learning_rate * gains[i][k] * grad[i][k];
                y[i][k] += update[i][k];
            }
        }
        let mean = [y.iter().map(|p| p[0]).sum::<f64>() / n as f64, y.iter().map(|p| p[1]).sum::<f64>() / n as f64];
        for pt in &mut y {
            pt[0] -= mean[0];
            pt[1] -= mean[1];
        }
        if it % 50 == 0 || it == params.iterations {
            kl_history.push((it, kl_divergence(&p, &y)));
        }
    }
    if y.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::Convergence("t-SNE produced non-finite coordinates".into()));
    }
    let final_kl = kl_history.last().map_or_else(|| kl_divergence(&p, &y), |h| h.1);
    Ok(Embedding {
        points: y,
        diagnostics: Diagnostics {
            perplexity: params.perplexity,
            iterations: params.iterations,
            kl_history,
            final_kl,
            flagged,
            max_entropy_error,
        },
    })
}

pub fn tsne_embed(dataset: &VectorDataset, params: &TsneParams) -> Result<EmbeddingResult> {
    let x: Vec<Vec<f64>> = dataset.rows().iter().map(|r| r.values.clone()).collect();
    let e = tsne(&x, params)?;
    Ok(EmbeddingResult {
        doc_ids: dataset.rows().iter().map(|r| r.doc_id.clone()).collect(),
        labels: dataset.rows().iter().map(|r| r.label).collect(),
        points: e.points,
        diagnostics: e.diagnostics,
    })
}

/// Writes `doc_id,x,y,label` with six-decimal coordinates.
pub fn emit_plot_data(result: &EmbeddingResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["doc_id", "x", "y", "label"])?;
    for ((id, p), label) in result.doc_ids.iter().zip(&result.points).zip(&result.labels) {
        w.write_record([id.as_str(), &format!("{:.6}", p[0]), &format!("{:.6}", p[1]), label.as_str()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
