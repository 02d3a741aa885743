//! Downstream classifiers, decision thresholds and metrics.

pub mod boost;
pub mod forest;
pub mod knn;
pub mod metrics;
pub mod threshold;
pub mod tree;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use boost::{BoostParams, BoostedModel};
pub use forest::{ForestMode, ForestModel};
pub use knn::{KnnModel, Metric};
pub use metrics::{apply_threshold, compute_metrics, compute_metrics_scored, Confusion, Metrics};
pub use threshold::{candidate_thresholds, optimize_threshold, Objective, ThresholdRule};

use crate::corpus::Label;
use crate::error::{Error, Result};

/// 1 for phishing, spear phishing and smishing; 0 for ham and benign SMS.
pub fn binary_label(label: Label) -> u8 {
    u8::from(label.is_malicious())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Knn,
    Forest,
    Extra,
    Boosted,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Knn, ModelKind::Forest, ModelKind::Extra, ModelKind::Boosted];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::Forest => "forest",
            ModelKind::Extra => "extra",
            ModelKind::Boosted => "boosted",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            Error::invalid(format!("unknown model `{s}`; valid models: knn, forest, extra, boosted"))
        })
    }
}

fn default_k() -> usize {
    5
}
fn default_trees() -> usize {
    100
}
fn default_rounds() -> usize {
    200
}
fn default_lr() -> f64 {
    0.1
}
fn default_depth() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierConfig {
    Knn {
        #[serde(default = "default_k")]
        k: usize,
        #[serde(default)]
        metric: Metric,
    },
    Forest {
        #[serde(default = "default_trees")]
        trees: usize,
        #[serde(default)]
        seed: u64,
    },
    Extra {
        #[serde(default = "default_trees")]
        trees: usize,
        #[serde(default)]
        seed: u64,
    },
    Boosted {
        #[serde(default = "default_rounds")]
        rounds: usize,
        #[serde(default = "default_lr")]
        learning_rate: f64,
        #[serde(default = "default_depth")]
        max_depth: usize,
    },
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig::knn(5)
    }
}

impl ClassifierConfig {
    pub fn knn(k: usize) -> Self {
        ClassifierConfig::Knn {
            k,
            metric: Metric::Euclidean,
        }
    }

    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Knn => ClassifierConfig::knn(default_k()),
            ModelKind::Forest => ClassifierConfig::Forest {
                trees: default_trees(),
                seed: 0,
            },
            ModelKind::Extra => ClassifierConfig::Extra {
                trees: default_trees(),
                seed: 0,
            },
            ModelKind::Boosted => ClassifierConfig::Boosted {
                rounds: default_rounds(),
                learning_rate: default_lr(),
                max_depth: default_depth(),
            },
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ClassifierConfig::Knn { .. } => ModelKind::Knn,
            ClassifierConfig::Forest { .. } => ModelKind::Forest,
            ClassifierConfig::Extra { .. } => ModelKind::Extra,
            ClassifierConfig::Boosted { .. } => ModelKind::Boosted,
        }
    }

    pub fn fit(&self, x: &[Vec<f64>], y: &[u8]) -> Result<Model> {
        Ok(match *self {
            ClassifierConfig::Knn { k, metric } => Model::Knn(KnnModel::fit(x, y, k, metric)?),
            ClassifierConfig::Forest { trees, seed } => Model::Forest(ForestModel::fit(x, y, trees, ForestMode::Bagged, seed)?),
            ClassifierConfig::Extra { trees, seed } => Model::Forest(ForestModel::fit(x, y, trees, ForestMode::Extra, seed)?),
            ClassifierConfig::Boosted {
                rounds,
                learning_rate,
                max_depth,
            } => Model::Boosted(BoostedModel::fit(
                x,
                y,
                &BoostParams {
                    rounds,
                    learning_rate,
                    max_depth,
                    ..BoostParams::default()
                },
            )?),
        })
    }
}

pub const MODEL_FORMAT: &str = "pcv-model/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Knn(KnnModel),
    Forest(ForestModel),
    Boosted(BoostedModel),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    /// Threshold chosen at training time, used when evaluation does not
    /// override it.
    threshold: f64,
    model: Model,
}

impl Model {
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            Model::Knn(m) => m.predict(x),
            Model::Forest(m) => m.predict(x),
            Model::Boosted(m) => m.predict(x),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::Knn(m) => m.dim(),
            Model::Forest(m) => m.dim,
            Model::Boosted(m) => m.dim,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>, threshold: f64) -> Result<()> {
        let path = path.as_ref();
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            threshold,
            model: self.clone(),
        };
        fs::write(path, serde_json::to_vec(&file)?).map_err(|e| Error::io(path, e))
    }

    /// Returns the model and its stored threshold.
    pub fn load(path: impl AsRef<Path>) -> Result<(Model, f64)> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_slice(&bytes)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::invalid(format!("unsupported model format `{}`", file.format)));
        }
        Ok((file.model, file.threshold))
    }
}

/// Folds used for out-of-fold threshold search.
pub const THRESHOLD_FOLDS: usize = 3;

/// Out-of-fold training scores: rows are dealt round-robin into folds
/// within each class, so each fold keeps the class balance.
pub fn out_of_fold_scores(config: &ClassifierConfig, x: &[Vec<f64>], y: &[u8], folds: usize) -> Result<Vec<f64>> {
    let mut fold_of = vec![0usize; y.len()];
    let (mut neg, mut pos) = (0usize, 0usize);
    for (i, &yi) in y.iter().enumerate() {
        let c = if yi != 0 { &mut pos } else { &mut neg };
        fold_of[i] = *c % folds;
        *c += 1;
    }
    let mut scores = vec![0.0; y.len()];
    for f in 0..folds {
        let (tr, te): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| fold_of[i] != f);
        if te.is_empty() {
            continue;
        }
        let tx: Vec<Vec<f64>> = tr.iter().map(|&i| x[i].clone()).collect();
        let ty: Vec<u8> = tr.iter().map(|&i| y[i]).collect();
        let model = config.fit(&tx, &ty)?;
        let qx: Vec<Vec<f64>> = te.iter().map(|&i| x[i].clone()).collect();
        for (&i, s) in te.iter().zip(model.predict(&qx)?) {
            scores[i] = s;
        }
    }
    Ok(scores)
}

/// Resolves a threshold rule against training data. Optimized thresholds
/// are searched on out-of-fold scores so the training rows' own fit does
/// not inflate them.
pub fn resolve_threshold(rule: ThresholdRule, config: &ClassifierConfig, x: &[Vec<f64>], y: &[u8]) -> Result<f64> {
    match rule {
        ThresholdRule::Fixed(t) => Ok(t),
        ThresholdRule::Optimize(obj) => {
            let oof = out_of_fold_scores(config, x, y, THRESHOLD_FOLDS)?;
            optimize_threshold(&oof, y, obj)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_mapping_total() {
        for &l in Label::ALL.iter() {
            let expect = matches!(l, Label::Phishing | Label::SpearPhishing | Label::Smishing);
            assert_eq!(binary_label(l), u8::from(expect));
        }
    }

    #[test]
    fn model_round_trip() {
        let x = vec![vec![0.0, 0.1], vec![0.3, 0.9], vec![0.8, 0.7], vec![1.0, 0.2]];
        let y = vec![0, 0, 1, 1];
        let dir = tempfile::tempdir().unwrap();
        for kind in ModelKind::ALL {
            let cfg = match kind {
                ModelKind::Knn => ClassifierConfig::knn(3),
                k => ClassifierConfig::default_for(k),
            };
            let m = cfg.fit(&x, &y).unwrap();
            let p = dir.path().join(format!("{kind}.json"));
            m.save(&p, 0.25).unwrap();
            let (back, t) = Model::load(&p).unwrap();
            assert_eq!(t, 0.25);
            assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());
        }
    }

    #[test]
    fn unknown_model_lists_valid() {
        let e = "bogus".parse::<ModelKind>().unwrap_err().to_string();
        assert!(e.contains("knn, forest, extra, boosted"));
    }

    #[test]
    fn config_json_defaults() {
        let c: ClassifierConfig = serde_json::from_str(r#"{"model":"knn"}"#).unwrap();
        assert_eq!(c, ClassifierConfig::knn(5));
        let c: ClassifierConfig = serde_json::from_str(r#"{"model":"boosted"}"#).unwrap();
        assert_eq!(c, ClassifierConfig::default_for(ModelKind::Boosted));
    }
}
