use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
    Manhattan,
}

impl Metric {
    /// Distance used for ranking. Euclidean is left squared; the ordering is
    /// the same.
    pub fn rank_distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "manhattan" => Ok(Metric::Manhattan),
            _ => Err(Error::invalid(format!("unknown metric `{s}` (euclidean, manhattan)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub metric: Metric,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
}

/// Fraction of positives among the `k` smallest `(distance, row)` pairs.
/// Equal distances rank the lower row first.
pub fn vote(dists: &mut [(f64, usize)], k: usize, y: &[u8]) -> f64 {
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dists.len() {
        dists.select_nth_unstable_by(k - 1, cmp);
    }
    let pos = dists[..k].iter().filter(|(_, i)| y[*i] != 0).count();
    pos as f64 / k as f64
}

pub fn check_fit(n: usize, k: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("kNN needs at least one training row"));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k must be in 1..={n}, got {k}")));
    }
    Ok(())
}

pub(crate) fn check_matrix(x: &[Vec<f64>], dim: Option<usize>) -> Result<usize> {
    let d = dim.or_else(|| x.first().map(Vec::len)).unwrap_or(0);
    for (i, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(Error::invalid(format!("row {i} has {} columns, expected {d}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("row {i} has a non-finite value")));
        }
    }
    Ok(d)
}

impl KnnModel {
    pub fn fit(x: &[Vec<f64>], y: &[u8], k: usize, metric: Metric) -> Result<Self> {
        check_fit(x.len(), k)?;
        if x.len() != y.len() {
            return Err(Error::invalid("features and labels differ in length"));
        }
        check_matrix(x, None)?;
        Ok(KnnModel {
            k,
            metric,
            x: x.to_vec(),
            y: y.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn predict(&self, queries: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_matrix(queries, Some(self.dim()))?;
        Ok(par::map(queries, |q| {
            let mut d: Vec<(f64, usize)> = self
                .x
                .iter()
                .enumerate()
                .map(|(i, row)| (self.metric.rank_distance(q, row), i))
                .collect();
            vote(&mut d, self.k, &self.y)
        }))
    }
}
