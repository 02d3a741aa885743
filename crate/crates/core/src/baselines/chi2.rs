use serde::{Deserialize, Serialize};

use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

/// Chi-square statistic of each feature against binary labels, computed
/// from observed class-conditional feature sums against the sums expected
/// under independence. A feature with zero total scores 0.
pub fn chi2_scores(m: &SparseMatrix, y: &[u8]) -> Result<Vec<f64>> {
    if m.n_rows() != y.len() {
        return Err(Error::invalid("matrix and labels differ in length"));
    }
    let mut observed = [vec![0.0; m.n_cols], vec![0.0; m.n_cols]];
    for (row, &yi) in m.rows.iter().zip(y) {
        for &(c, v) in row {
            if v < 0.0 {
                return Err(Error::invalid("chi-square needs nonnegative features"));
            }
            observed[usize::from(yi != 0)][c] += v;
        }
    }
    let n = y.len() as f64;
    let pos = y.iter().filter(|&&v| v != 0).count() as f64;
    let class_prob = [(n - pos) / n, pos / n];
    Ok((0..m.n_cols)
        .map(|c| {
            let total = observed[0][c] + observed[1][c];
            (0..2)
                .map(|k| {
                    let expected = class_prob[k] * total;
                    if expected > 0.0 {
                        (observed[k][c] - expected).powi(2) / expected
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chi2Selector {
    /// Kept columns in ascending column order.
    pub selected: Vec<usize>,
    pub scores: Vec<f64>,
}

impl Chi2Selector {
    /// Keeps the `k` highest-scoring columns; equal scores favor the lower
    /// column index.
    pub fn fit(m: &SparseMatrix, y: &[u8], k: usize) -> Result<(Self, SparseMatrix)> {
        if k == 0 || k > m.n_cols {
            return Err(Error::invalid(format!("chi2 k must be in 1..={}, got {k}", m.n_cols)));
        }
        let scores = chi2_scores(m, y)?;
        let mut order: Vec<usize> = (0..m.n_cols).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut selected: Vec<usize> = order.into_iter().take(k).collect();
        selected.sort_unstable();
        let sel = Chi2Selector { selected, scores };
        let reduced = sel.transform(m);
        Ok((sel, reduced))
    }

    pub fn transform(&self, m: &SparseMatrix) -> SparseMatrix {
        m.select_columns(&self.selected)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_across_classes_is_zero() {
        let m = SparseMatrix::from_dense(&[vec![1.0, 3.0], vec![1.0, 0.0]]);
        let s = chi2_scores(&m, &[0, 1]).unwrap();
        assert_eq!(s[0], 0.0);
        assert!(s[1] > 0.0);
    }

    #[test]
    fn k_equals_features_is_identity() {
        let m = SparseMatrix::from_dense(&[vec![1.0, 0.0, 2.0], vec![0.0, 1.0, 1.0]]);
        let (sel, r) = Chi2Selector::fit(&m, &[0, 1], 3).unwrap();
        assert_eq!(sel.selected, vec![0, 1, 2]);
        assert_eq!(r, m);
        assert!(Chi2Selector::fit(&m, &[0, 1], 4).is_err());
    }

    #[test]
    fn ties_keep_lower_index() {
        let m = SparseMatrix::from_dense(&[vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let (sel, _) = Chi2Selector::fit(&m, &[1, 0], 1).unwrap();
        assert_eq!(sel.selected, vec![0]);
    }
}
