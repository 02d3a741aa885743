//! Classical text baselines: preprocessing, count and TF-IDF vectorizers,
//! truncated SVD, chi-square selection, the two TF-IDF pipelines used for
//! comparison, and import of externally computed embeddings.

pub mod chi2;
pub mod sparse;
pub mod svd;
pub mod text;

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use chi2::{chi2_scores, Chi2Selector};
pub use sparse::{CountVectorizer, SparseMatrix, TfidfVectorizer};
pub use svd::TruncatedSvd;
pub use text::preprocess_text;

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::learn::{self, binary_label, BoostParams, BoostedModel, ClassifierConfig, ForestMode, ForestModel, Metric, Metrics, ThresholdRule};
use crate::par;
use crate::vectorize::{CellStatus, DatasetHeader, VectorDataset, VectorRow};

pub const LSA_COMPONENTS: usize = 25;
pub const CHI2_FEATURES: usize = 100;
/// Largest dense matrix (rows x columns) a baseline will materialize.
const DENSE_LIMIT: usize = 50_000_000;

/// Text representation used in place of prompted vectors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Baseline {
    CountVec,
    Tfidf,
    Lsa25,
    Chi2_100,
    Import(PathBuf),
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Baseline::CountVec => f.write_str("countvec"),
            Baseline::Tfidf => f.write_str("tfidf"),
            Baseline::Lsa25 => f.write_str("lsa25"),
            Baseline::Chi2_100 => f.write_str("chi2-100"),
            Baseline::Import(p) => write!(f, "import:{}", p.display()),
        }
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "countvec" => Ok(Baseline::CountVec),
            "tfidf" => Ok(Baseline::Tfidf),
            "lsa25" => Ok(Baseline::Lsa25),
            "chi2-100" => Ok(Baseline::Chi2_100),
            _ => match s.strip_prefix("import:") {
                Some(p) if !p.is_empty() => Ok(Baseline::Import(PathBuf::from(p))),
                _ => Err(Error::invalid(format!(
                    "unknown baseline `{s}`; valid: countvec, tfidf, lsa25, chi2-100, import:<path>"
                ))),
            },
        }
    }
}

impl From<Baseline> for String {
    fn from(b: Baseline) -> String {
        b.to_string()
    }
}

impl TryFrom<String> for Baseline {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GualbertoVariant {
    /// TF-IDF, SVD to 25 components, gradient boosting.
    Lsa25Boosted,
    /// TF-IDF, top 100 chi-square features, random forest.
    Chi2_100Forest,
}

impl GualbertoVariant {
    pub const ALL: [GualbertoVariant; 2] = [GualbertoVariant::Lsa25Boosted, GualbertoVariant::Chi2_100Forest];

    pub fn as_str(self) -> &'static str {
        match self {
            GualbertoVariant::Lsa25Boosted => "lsa_25_boosted",
            GualbertoVariant::Chi2_100Forest => "chi2_100_forest",
        }
    }
}

/// Scores for a test split plus the threshold and metrics they produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredRun {
    pub scores: Vec<f64>,
    pub threshold: f64,
    pub metrics: Metrics,
}

pub fn tokenize_all(docs: &[&Document]) -> Vec<Vec<String>> {
    par::map(docs, |d| preprocess_text(&d.text))
}

fn labels(docs: &[&Document]) -> Vec<u8> {
    docs.iter().map(|d| binary_label(d.label)).collect()
}

fn densify(m: &SparseMatrix) -> Result<Vec<Vec<f64>>> {
    if m.n_rows().saturating_mul(m.n_cols) > DENSE_LIMIT {
        return Err(Error::invalid(format!(
            "{}x{} matrix is too large to densify; use knn or a reducing baseline",
            m.n_rows(),
            m.n_cols
        )));
    }
    Ok(m.to_dense())
}

fn sparse_distance(a: &[(usize, f64)], b: &[(usize, f64)], metric: Metric) -> f64 {
    let term = |d: f64| match metric {
        Metric::Euclidean => d * d,
        Metric::Manhattan => d.abs(),
    };
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() || j < b.len() {
        let ca = a.get(i).map_or(usize::MAX, |p| p.0);
        let cb = b.get(j).map_or(usize::MAX, |p| p.0);
        if ca == cb {
            s += term(a[i].1 - b[j].1);
            i += 1;
            j += 1;
        } else if ca < cb {
            s += term(a[i].1);
            i += 1;
        } else {
            s += term(b[j].1);
            j += 1;
        }
    }
    s
}

/// kNN scores computed directly on sparse rows.
pub fn sparse_knn_scores(train: &SparseMatrix, y: &[u8], test: &SparseMatrix, k: usize, metric: Metric) -> Result<Vec<f64>> {
    learn::knn::check_fit(train.n_rows(), k)?;
    Ok(par::map(&test.rows, |q| {
        let mut d: Vec<(f64, usize)> = train.rows.iter().enumerate().map(|(i, r)| (sparse_distance(q, r, metric), i)).collect();
        learn::knn::vote(&mut d, k, y)
    }))
}

fn score_features(
    config: &ClassifierConfig,
    threshold: ThresholdRule,
    train_x: &[Vec<f64>],
    train_y: &[u8],
    test_x: &[Vec<f64>],
    test_y: &[u8],
) -> Result<ScoredRun> {
    let model = config.fit(train_x, train_y)?;
    let t = learn::resolve_threshold(threshold, config, train_x, train_y)?;
    let scores = model.predict(test_x)?;
    let metrics = learn::compute_metrics_scored(test_y, &scores, t)?;
    Ok(ScoredRun {
        scores,
        threshold: t,
        metrics,
    })
}

/// Fits `baseline` on the training documents only and scores the test
/// documents with `config`. Imported embeddings go through the vector
/// path instead.
pub fn run_text_baseline(
    baseline: &Baseline,
    train: &[&Document],
    test: &[&Document],
    config: &ClassifierConfig,
    threshold: ThresholdRule,
) -> Result<ScoredRun> {
    let (train_tok, test_tok) = (tokenize_all(train), tokenize_all(test));
    let (train_y, test_y) = (labels(train), labels(test));
    let (tr, te) = match baseline {
        Baseline::CountVec => {
            let cv = CountVectorizer::fit(&train_tok)?;
            (cv.transform(&train_tok), cv.transform(&test_tok))
        }
        Baseline::Tfidf => {
            let tf = TfidfVectorizer::fit(&train_tok)?;
            (tf.transform(&train_tok), tf.transform(&test_tok))
        }
        Baseline::Lsa25 => {
            let tf = TfidfVectorizer::fit(&train_tok)?;
            let (svd, tr) = TruncatedSvd::fit(&tf.transform(&train_tok), LSA_COMPONENTS, 0)?;
            let te = svd.transform(&tf.transform(&test_tok));
            return score_features(config, threshold, &tr, &train_y, &te, &test_y);
        }
        Baseline::Chi2_100 => {
            let tf = TfidfVectorizer::fit(&train_tok)?;
            let (sel, tr) = Chi2Selector::fit(&tf.transform(&train_tok), &train_y, CHI2_FEATURES)?;
            (tr, sel.transform(&tf.transform(&test_tok)))
        }
        Baseline::Import(_) => {
            return Err(Error::invalid("imported embeddings are scored as a vector dataset, not a text baseline"))
        }
    };
    match (config, threshold) {
        (ClassifierConfig::Knn { k, metric }, ThresholdRule::Fixed(t)) => {
            let scores = sparse_knn_scores(&tr, &train_y, &te, *k, *metric)?;
            let metrics = learn::compute_metrics_scored(&test_y, &scores, t)?;
            Ok(ScoredRun {
                scores,
                threshold: t,
                metrics,
            })
        }
        _ => score_features(config, threshold, &densify(&tr)?, &train_y, &densify(&te)?, &test_y),
    }
}

/// Runs one of the two TF-IDF comparison pipelines at threshold 0.5.
pub fn gualberto_pipeline(variant: GualbertoVariant, train: &[&Document], test: &[&Document], seed: u64) -> Result<ScoredRun> {
    let (train_tok, test_tok) = (tokenize_all(train), tokenize_all(test));
    let (train_y, test_y) = (labels(train), labels(test));
    let tf = TfidfVectorizer::fit(&train_tok)?;
    let (train_m, test_m) = (tf.transform(&train_tok), tf.transform(&test_tok));
    let scores = match variant {
        GualbertoVariant::Lsa25Boosted => {
            let (svd, tr) = TruncatedSvd::fit(&train_m, LSA_COMPONENTS, seed)?;
            let model = BoostedModel::fit(&tr, &train_y, &BoostParams::default())?;
            model.predict(&svd.transform(&test_m))?
        }
        GualbertoVariant::Chi2_100Forest => {
            let (sel, tr) = Chi2Selector::fit(&train_m, &train_y, CHI2_FEATURES)?;
            let model = ForestModel::fit(&tr.to_dense(), &train_y, 100, ForestMode::Bagged, seed)?;
            model.predict(&sel.transform(&test_m).to_dense())?
        }
    };
    let metrics = learn::compute_metrics_scored(&test_y, &scores, 0.5)?;
    Ok(ScoredRun {
        scores,
        threshold: 0.5,
        metrics,
    })
}

#[derive(Deserialize)]
struct EmbeddingRow {
    doc_id: String,
    values: Vec<f64>,
}

/// Loads `{doc_id, values}` JSON lines as an imported vector dataset,
/// taking labels from `corpus`.
pub fn import_external_embeddings(path: impl AsRef<Path>, corpus: &Corpus) -> Result<VectorDataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut dim = None;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: EmbeddingRow = serde_json::from_str(&line)?;
        let d = *dim.get_or_insert(r.values.len());
        if r.values.len() != d || d == 0 {
            return Err(Error::invalid(format!(
                "line {}: `{}` has {} values, expected {d}",
                n + 1,
                r.doc_id,
                r.values.len()
            )));
        }
        let doc = corpus
            .get(&r.doc_id)
            .ok_or_else(|| Error::invalid(format!("embedding for unknown document `{}`", r.doc_id)))?;
        rows.push(VectorRow {
            doc_id: r.doc_id,
            label: doc.label,
            cell_status: vec![CellStatus::Answered; d],
            values: r.values,
            reasoning: Vec::new(),
        });
    }
    let dim = dim.ok_or_else(|| Error::invalid(format!("{}: no embeddings", path.display())))?;
    let mut header = DatasetHeader::imported(dim);
    header.corpus_manifest = corpus.manifest().clone();
    VectorDataset::new(header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, Source};

    #[test]
    fn baseline_names_round_trip() {
        for s in ["countvec", "tfidf", "lsa25", "chi2-100", "import:/tmp/e.jsonl"] {
            assert_eq!(s.parse::<Baseline>().unwrap().to_string(), s);
        }
        assert!("bert".parse::<Baseline>().is_err());
    }

    #[test]
    fn sparse_distance_matches_dense() {
        let a = vec![(0, 1.0), (3, 2.0)];
        let b = vec![(1, 0.5), (3, 1.0)];
        assert_eq!(sparse_distance(&a, &b, Metric::Euclidean), 1.0 + 0.25 + 1.0);
        assert_eq!(sparse_distance(&a, &b, Metric::Manhattan), 1.0 + 0.5 + 1.0);
    }

    #[test]
    fn pipeline_k_exceeding_vocabulary_errors() {
        let docs: Vec<Document> = (0..30)
            .map(|i| {
                let (text, label) = if i % 2 == 0 { ("alpha beta", Label::Ham) } else { ("gamma delta", Label::Phishing) };
                Document::new(format!("d{i}"), text, label, Source::Synthetic).unwrap()
            })
            .collect();
        let refs: Vec<&Document> = docs.iter().collect();
        for v in GualbertoVariant::ALL {
            assert!(gualberto_pipeline(v, &refs, &refs, 0).is_err(), "{v:?}");
        }
    }

    #[test]
    fn import_shapes_and_errors() {
        let corpus = Corpus::new(
            (0..3)
                .map(|i| Document::new(format!("d{i}"), "x", Label::Ham, Source::Synthetic).unwrap())
                .collect(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        let line = |id: &str, d: usize| serde_json::json!({"doc_id": id, "values": vec![0.25; d]}).to_string();
        fs::write(&p, [line("d0", 768), line("d1", 768), line("d2", 768)].join("\n")).unwrap();
        let ds = import_external_embeddings(&p, &corpus).unwrap();
        assert_eq!((ds.len(), ds.dim()), (3, 768));
        fs::write(&p, [line("d0", 4), line("nope", 4)].join("\n")).unwrap();
        assert!(import_external_embeddings(&p, &corpus).unwrap_err().to_string().contains("nope"));
        fs::write(&p, [line("d0", 4), line("d1", 5)].join("\n")).unwrap();
        assert!(import_external_embeddings(&p, &corpus).is_err());
    }
}
