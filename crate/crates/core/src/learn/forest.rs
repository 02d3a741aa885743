use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::knn::check_matrix;
use super::tree::{fit_class_tree, ClassTreeParams, SplitMode, Tree};
use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestMode {
    /// Bootstrap rows, best split per sampled feature.
    Bagged,
    /// All rows, random split per sampled feature.
    Extra,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub mode: ForestMode,
    pub dim: usize,
    pub trees: Vec<Tree>,
    /// Set when training saw a single class; every score is this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
}

pub(crate) fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub(crate) fn check_xy(x: &[Vec<f64>], y: &[u8]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if x.len() != y.len() {
        return Err(Error::invalid("features and labels differ in length"));
    }
    check_matrix(x, None)
}

impl ForestModel {
    pub fn fit(x: &[Vec<f64>], y: &[u8], n_trees: usize, mode: ForestMode, seed: u64) -> Result<Self> {
        if n_trees == 0 {
            return Err(Error::invalid("forest needs at least one tree"));
        }
        let dim = check_xy(x, y)?;
        let pos = y.iter().filter(|&&v| v != 0).count();
        if pos == 0 || pos == y.len() {
            tracing::warn!(rows = y.len(), "single-class training set; forest is a constant scorer");
            return Ok(ForestModel {
                mode,
                dim,
                trees: Vec::new(),
                constant: Some(if pos == 0 { 0.0 } else { 1.0 }),
            });
        }
        let params = ClassTreeParams {
            max_features: ((dim as f64).sqrt().floor() as usize).max(1),
            max_depth: 64,
            mode: match mode {
                ForestMode::Bagged => SplitMode::Best,
                ForestMode::Extra => SplitMode::Random,
            },
        };
        let n = x.len();
        let trees = par::map_range(n_trees, |t| {
            let mut rng = tree_rng(seed, t);
            let rows = match mode {
                ForestMode::Bagged => (0..n).map(|_| rng.gen_range(0..n)).collect(),
                ForestMode::Extra => (0..n).collect(),
            };
            fit_class_tree(x, y, rows, &params, &mut rng)
        });
        Ok(ForestModel {
            mode,
            dim,
            trees,
            constant: None,
        })
    }

    /// Mean of per-tree hard votes; a leaf at exactly one half votes one half.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_matrix(x, Some(self.dim))?;
        if let Some(c) = self.constant {
            return Ok(vec![c; x.len()]);
        }
        Ok(par::map(x, |row| {
            let votes: f64 = self
                .trees
                .iter()
                .map(|t| {
                    let p = t.eval(row);
                    if p > 0.5 {
                        1.0
                    } else if p < 0.5 {
                        0.0
                    } else {
                        0.5
                    }
                })
                .sum();
            votes / self.trees.len() as f64
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::metrics::compute_metrics_scored;

    fn separable() -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..80 {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let b: f64 = rng.gen_range(-1.0..1.0);
            if (a + b).abs() < 0.1 {
                continue;
            }
            x.push(vec![a, b]);
            y.push(u8::from(a + b > 0.0));
        }
        (x, y)
    }

    #[test]
    fn separable_training_f1_is_one() {
        let (x, y) = separable();
        for mode in [ForestMode::Bagged, ForestMode::Extra] {
            let m = ForestModel::fit(&x, &y, 50, mode, 1).unwrap();
            let s = m.predict(&x).unwrap();
            assert_eq!(compute_metrics_scored(&y, &s, 0.5).unwrap().f1, 1.0, "{mode:?}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let (x, y) = separable();
        let a = ForestModel::fit(&x, &y, 20, ForestMode::Extra, 9).unwrap();
        let b = ForestModel::fit(&x, &y, 20, ForestMode::Extra, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
    }

    #[test]
    fn single_class_is_constant() {
        let x = vec![vec![0.0], vec![1.0]];
        let m = ForestModel::fit(&x, &[1, 1], 5, ForestMode::Bagged, 0).unwrap();
        assert_eq!(m.predict(&[vec![-3.0], vec![3.0]]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(m.constant, Some(1.0));
    }
}
