use serde::{Deserialize, Serialize};

use super::forest::check_xy;
use super::knn::check_matrix;
use super::tree::{fit_newton_tree, Tree};
use crate::error::{Error, Result};
use crate::providers::logistic;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            rounds: 200,
            learning_rate: 0.1,
            max_depth: 2,
            lambda: 1.0,
        }
    }
}

/// Gradient-boosted regression trees on the logistic loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub dim: usize,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Mean training log-loss after each round.
    pub train_loss: Vec<f64>,
    #[serde(default)]
    pub degenerate: bool,
}

fn log_loss(y: &[u8], f: &[f64]) -> f64 {
    // log(1 + e^f) - y f, computed stably.
    let s: f64 = y
        .iter()
        .zip(f)
        .map(|(&yi, &fi)| fi.max(0.0) + (-fi.abs()).exp().ln_1p() - f64::from(yi) * fi)
        .sum();
    s / y.len() as f64
}

impl BoostedModel {
    pub fn fit(x: &[Vec<f64>], y: &[u8], params: &BoostParams) -> Result<Self> {
        if params.rounds == 0 || !(params.learning_rate > 0.0) {
            return Err(Error::invalid("boosting needs rounds >= 1 and a positive learning rate"));
        }
        let dim = check_xy(x, y)?;
        let n = y.len() as f64;
        let pos = y.iter().filter(|&&v| v != 0).count() as f64;
        let degenerate = pos == 0.0 || pos == n;
        if degenerate {
            tracing::warn!(rows = y.len(), "single-class training set; boosted model is a constant scorer");
        }
        let base_score = if degenerate {
            if pos == 0.0 {
                -30.0
            } else {
                30.0
            }
        } else {
            (pos / (n - pos)).ln()
        };
        let mut f = vec![base_score; y.len()];
        let mut trees = Vec::with_capacity(params.rounds);
        let mut train_loss = Vec::with_capacity(params.rounds);
        if !degenerate {
            for _ in 0..params.rounds {
                let p: Vec<f64> = f.iter().map(|&v| logistic(v)).collect();
                let g: Vec<f64> = p.iter().zip(y).map(|(pi, &yi)| pi - f64::from(yi)).collect();
                let h: Vec<f64> = p.iter().map(|pi| (pi * (1.0 - pi)).max(1e-16)).collect();
                let tree = fit_newton_tree(x, &g, &h, params.max_depth, params.lambda);
                for (fi, row) in f.iter_mut().zip(x) {
                    *fi += params.learning_rate * tree.eval(row);
                }
                trees.push(tree);
                train_loss.push(log_loss(y, &f));
            }
        }
        Ok(BoostedModel {
            dim,
            base_score,
            learning_rate: params.learning_rate,
            trees,
            train_loss,
            degenerate,
        })
    }

    pub fn decision(&self, row: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| self.learning_rate * t.eval(row)).sum::<f64>()
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_matrix(x, Some(self.dim))?;
        Ok(crate::par::map(x, |row| logistic(self.decision(row))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<Vec<f64>>, Vec<u8>) {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 40.0, ((i * 7) % 11) as f64]).collect();
        let y = (0..40).map(|i| u8::from(i >= 25)).collect();
        (x, y)
    }

    #[test]
    fn depth_zero_single_round_is_prior() {
        let (x, y) = fixture();
        let p = BoostParams {
            rounds: 1,
            max_depth: 0,
            ..BoostParams::default()
        };
        let m = BoostedModel::fit(&x, &y, &p).unwrap();
        let s = m.predict(&x).unwrap();
        assert!(s.iter().all(|&v| v == s[0]));
        assert_eq!(m.base_score, (15.0f64 / 25.0).ln());
        assert!((s[0] - 15.0 / 40.0).abs() < 1e-12);
    }

    #[test]
    fn training_loss_nonincreasing() {
        let (x, y) = fixture();
        let m = BoostedModel::fit(&x, &y, &BoostParams { rounds: 100, ..BoostParams::default() }).unwrap();
        assert!(m.train_loss.windows(2).all(|w| w[1] <= w[0]));
        let s = m.predict(&x).unwrap();
        assert!(s.iter().zip(&y).all(|(&p, &t)| (p >= 0.5) == (t == 1)));
    }

    #[test]
    fn deterministic() {
        let (x, y) = fixture();
        let a = BoostedModel::fit(&x, &y, &BoostParams::default()).unwrap();
        let b = BoostedModel::fit(&x, &y, &BoostParams::default()).unwrap();
        assert_eq!(a, b);
    }
}
