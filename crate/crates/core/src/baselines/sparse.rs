use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major sparse matrix of nonnegative weights. Each row is sorted by
/// column with no repeats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    pub n_cols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn from_dense(x: &[Vec<f64>]) -> Self {
        SparseMatrix {
            n_cols: x.first().map_or(0, Vec::len),
            rows: x
                .iter()
                .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(c, &v)| (c, v)).collect())
                .collect(),
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut d = vec![0.0; self.n_cols];
                for &(c, v) in r {
                    d[c] = v;
                }
                d
            })
            .collect()
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    /// Keeps the listed columns, renumbered in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> SparseMatrix {
        let remap: BTreeMap<usize, usize> = cols.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        SparseMatrix {
            n_cols: cols.len(),
            rows: self
                .rows
                .iter()
                .map(|r| {
                    let mut out: Vec<(usize, f64)> = r.iter().filter_map(|&(c, v)| remap.get(&c).map(|&n| (n, v))).collect();
                    out.sort_by_key(|p| p.0);
                    out
                })
                .collect(),
        }
    }
}

/// Term-count vectorizer with a sorted vocabulary learned from training
/// documents only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountVectorizer {
    pub vocabulary: BTreeMap<String, usize>,
}

impl CountVectorizer {
    pub fn fit(docs: &[Vec<String>]) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::invalid("cannot fit a vectorizer on zero documents"));
        }
        let mut terms: Vec<&str> = docs.iter().flatten().map(String::as_str).collect();
        terms.sort_unstable();
        terms.dedup();
        if terms.is_empty() {
            return Err(Error::invalid("empty vocabulary"));
        }
        Ok(CountVectorizer {
            vocabulary: terms.into_iter().enumerate().map(|(i, t)| (t.to_string(), i)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    /// Counts known terms; unseen terms are dropped.
    pub fn transform(&self, docs: &[Vec<String>]) -> SparseMatrix {
        let rows = crate::par::map(docs, |d| {
            let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
            for t in d {
                if let Some(&c) = self.vocabulary.get(t) {
                    *counts.entry(c).or_default() += 1.0;
                }
            }
            counts.into_iter().collect()
        });
        SparseMatrix {
            n_cols: self.vocabulary.len(),
            rows,
        }
    }
}

/// TF-IDF with smoothed idf `ln((1 + N) / (1 + df)) + 1` and L2-normalized
/// rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    pub counts: CountVectorizer,
    pub idf: Vec<f64>,
}

impl TfidfVectorizer {
    pub fn fit(docs: &[Vec<String>]) -> Result<Self> {
        let counts = CountVectorizer::fit(docs)?;
        let m = counts.transform(docs);
        let mut df = vec![0usize; counts.len()];
        for r in &m.rows {
            for &(c, _) in r {
                df[c] += 1;
            }
        }
        let n = docs.len() as f64;
        let idf = df.iter().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
        Ok(TfidfVectorizer { counts, idf })
    }

    pub fn transform(&self, docs: &[Vec<String>]) -> SparseMatrix {
        let mut m = self.counts.transform(docs);
        for r in &mut m.rows {
            for (c, v) in r.iter_mut() {
                *v *= self.idf[*c];
            }
            let norm = r.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (_, v) in r.iter_mut() {
                    *v /= norm;
                }
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(docs: &[&str]) -> Vec<Vec<String>> {
        docs.iter().map(|d| d.split_whitespace().map(String::from).collect()).collect()
    }

    #[test]
    fn count_hand_fixture() {
        let docs = toks(&["a b a", "b"]);
        let cv = CountVectorizer::fit(&docs).unwrap();
        assert_eq!(cv.vocabulary.keys().collect::<Vec<_>>(), vec!["a", "b"]);
        assert_eq!(cv.transform(&docs).to_dense(), vec![vec![2.0, 1.0], vec![0.0, 1.0]]);
        assert_eq!(cv.transform(&toks(&["c"])).to_dense(), vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn empty_vocabulary() {
        assert!(CountVectorizer::fit(&[vec![]]).is_err());
        assert!(CountVectorizer::fit(&[]).is_err());
    }

    #[test]
    fn tfidf_hand_fixture() {
        let docs = toks(&["a b", "b"]);
        let tf = TfidfVectorizer::fit(&docs).unwrap();
        assert!((tf.idf[0] - (1.5f64.ln() + 1.0)).abs() < 1e-15);
        assert!((tf.idf[0] - 1.405).abs() < 1e-3);
        assert_eq!(tf.idf[1], 1.0);
        let m = tf.transform(&docs);
        for i in 0..m.n_rows() {
            assert!((m.row_norm(i) - 1.0).abs() < 1e-9);
        }
        assert_eq!(m.to_dense()[1], vec![0.0, 1.0]);
    }
}
