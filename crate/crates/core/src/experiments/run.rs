//! Config-driven experiment runs with persisted, hash-stamped reports.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    crossval_holdout, disagreement_report, evaluate_split, llm_ablation, main_split_with, question_ablation, smishing_split,
    EvalConfig, Finding, ProviderAblationRow, QuestionAblation, SplitManifest, SplitSpec, MAIN_BENIGN_TEST,
};
use crate::baselines::{import_external_embeddings, run_text_baseline, Baseline, ScoredRun};
use crate::corpus::{load_corpus, Corpus, CorpusFormat, Document, IngestOptions, Manifest};
use crate::digest::{sha256_hex, sha256_parts};
use crate::error::{Error, Result};
use crate::learn::{ClassifierConfig, Confusion, Metrics, ThresholdRule};
use crate::par;
use crate::providers::{default_mock_ensemble, load_providers, AskContext, Provider, ResponseCache};
use crate::questions::{default_question_bank, PromptTemplate, QuestionBank};
use crate::vectorize::{impute_cells, vectorize_corpus, DatasetKind, ImputePolicy, VectorDataset, VectorizeOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Main,
    Crossval,
    Smishing,
    LlmAblation,
    QuestionAblation,
    Disagreement,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Main,
        ExperimentKind::Crossval,
        ExperimentKind::Smishing,
        ExperimentKind::LlmAblation,
        ExperimentKind::QuestionAblation,
        ExperimentKind::Disagreement,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Main => "main",
            ExperimentKind::Crossval => "crossval",
            ExperimentKind::Smishing => "smishing",
            ExperimentKind::LlmAblation => "llm_ablation",
            ExperimentKind::QuestionAblation => "question_ablation",
            ExperimentKind::Disagreement => "disagreement",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.as_str()).collect();
            Error::Config(format!("unknown experiment `{s}`; valid experiments: {}", names.join(", ")))
        })
    }
}

fn default_folds() -> usize {
    5
}
fn default_top_n() -> usize {
    20
}

/// Experiment configuration file. Relative paths resolve against the
/// directory holding the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub corpus: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_format: Option<CorpusFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<PathBuf>,
    /// Provider file; the default mock ensemble when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub providers: Option<PathBuf>,
    /// Precomputed vector file; skips vectorization when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vectors: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub threshold: ThresholdRule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Benign documents sampled into the main test set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benign_test: Option<usize>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Split used by ablations: `main` (default) or `smishing`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub baselines: Vec<Baseline>,
    #[serde(default)]
    pub impute: ImputePolicy,
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_failure_fraction: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, corpus: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            experiment: experiment.as_str().to_string(),
            corpus: corpus.into(),
            corpus_format: None,
            bank: None,
            template: None,
            providers: None,
            vectors: None,
            cache: None,
            classifier: ClassifierConfig::default(),
            threshold: ThresholdRule::default(),
            seed: 0,
            output: None,
            benign_test: None,
            folds: default_folds(),
            split: None,
            baselines: Vec::new(),
            impute: ImputePolicy::default(),
            top_n: default_top_n(),
            max_failure_fraction: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn kind(&self) -> Result<ExperimentKind> {
        self.experiment.parse()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub split: String,
    pub representation: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub questions: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub providers: Vec<String>,
    pub classifier: ClassifierConfig,
    pub threshold_rule: ThresholdRule,
    pub threshold: f64,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub corpus_digest: String,
    pub corpus_manifest: Manifest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble_signature: Option<String>,
    pub dataset_digest: String,
    pub vector_dim: usize,
    pub tool_version: String,
}

/// Cell outcome counts of the vectorization behind the report. Cache
/// traffic is logged rather than reported, so cold and warm runs produce
/// the same report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorSummary {
    pub documents: usize,
    pub cells: usize,
    pub answered: usize,
    pub parse_fallback: usize,
    pub failed: usize,
    pub imputed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    pub splits: Vec<SplitManifest>,
    pub rows: Vec<MetricRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_ablation: Option<Vec<ProviderAblationRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_ablation: Option<QuestionAblation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disagreement: Option<Vec<Finding>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vectorization: Option<VectorSummary>,
    /// SHA-256 of the report serialized with this field empty.
    pub report_hash: String,
}

impl ExperimentReport {
    fn seal(mut self) -> Result<Self> {
        self.report_hash.clear();
        self.report_hash = sha256_hex(serde_json::to_vec(&self)?);
        Ok(self)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&raw)?)
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn corpus_digest(corpus: &Corpus) -> String {
    let parts: Vec<String> = corpus
        .documents()
        .iter()
        .map(|d| format!("{}\u{1f}{}\u{1f}{}", d.id, d.label, d.content_hash()))
        .collect();
    sha256_parts(parts.iter().map(String::as_bytes))
}

struct Prepared {
    corpus: Corpus,
    dataset: VectorDataset,
    summary: Option<VectorSummary>,
}

fn prepare(cfg: &ExperimentConfig, base: &Path, cache_override: Option<&Path>) -> Result<Prepared> {
    let corpus_path = resolve(base, &cfg.corpus);
    let format = cfg.corpus_format.unwrap_or(CorpusFormat::Jsonl);
    let (corpus, load) = load_corpus(&corpus_path, format, &IngestOptions::default())?;
    if load.skipped > 0 {
        tracing::warn!(skipped = load.skipped, "corpus rows skipped");
    }
    if let Some(v) = &cfg.vectors {
        let dataset = VectorDataset::load(resolve(base, v))?;
        let (dataset, rep) = impute_cells(&dataset, &cfg.impute)?;
        if rep.imputed > 0 {
            tracing::info!(imputed = rep.imputed, "imputed failed cells");
        }
        return Ok(Prepared {
            corpus,
            dataset,
            summary: None,
        });
    }
    let template = match &cfg.template {
        Some(p) => PromptTemplate::load(resolve(base, p))?,
        None => PromptTemplate::default_template(),
    };
    let bank = match &cfg.bank {
        Some(p) => QuestionBank::load(resolve(base, p), &template.id)?,
        None => default_question_bank(),
    };
    let specs = match &cfg.providers {
        Some(p) => load_providers(resolve(base, p))?,
        None => default_mock_ensemble(),
    };
    let ensemble = Provider::from_specs(&specs)?;
    let cache = match cache_override.map(Path::to_path_buf).or_else(|| cfg.cache.as_ref().map(|c| resolve(base, c))) {
        Some(p) => ResponseCache::open(p)?,
        None => ResponseCache::in_memory(),
    };
    let digest = bank.digest();
    let ctx = AskContext::new(&template, &digest).with_cache(&cache);
    let opts = VectorizeOptions {
        max_failure_fraction: cfg.max_failure_fraction.unwrap_or(0.10),
        seed: Some(cfg.seed),
        ..VectorizeOptions::default()
    };
    let (dataset, report) = vectorize_corpus(&corpus, &bank, &ensemble, &ctx, &opts)?;
    tracing::info!(
        cache_hits = report.cache_hits,
        requests = report.requests,
        "vectorization traffic"
    );
    let (dataset, imp) = impute_cells(&dataset, &cfg.impute)?;
    Ok(Prepared {
        corpus,
        dataset,
        summary: Some(VectorSummary {
            documents: report.documents,
            cells: report.cells,
            answered: report.answered,
            parse_fallback: report.parse_fallback,
            failed: report.failed,
            imputed: imp.imputed,
        }),
    })
}

fn docs<'a>(corpus: &'a Corpus, ids: &[String]) -> Result<Vec<&'a Document>> {
    ids.iter()
        .map(|id| corpus.get(id).ok_or_else(|| Error::invalid(format!("unknown document `{id}`"))))
        .collect()
}

fn prompted_row(split: &SplitSpec, dataset: &VectorDataset, eval: &EvalConfig, run: ScoredRun) -> MetricRow {
    let prompted = dataset.header().kind == DatasetKind::Prompted;
    MetricRow {
        split: split.name.clone(),
        representation: if prompted { "prompted" } else { "imported" }.into(),
        questions: dataset.header().questions.clone(),
        providers: dataset.header().providers.clone(),
        classifier: eval.classifier.clone(),
        threshold_rule: eval.threshold,
        threshold: run.threshold,
        metrics: run.metrics,
    }
}

fn baseline_rows(
    cfg: &ExperimentConfig,
    base: &Path,
    corpus: &Corpus,
    split: &SplitSpec,
    eval: &EvalConfig,
) -> Result<Vec<MetricRow>> {
    let train = docs(corpus, &split.train)?;
    let test = docs(corpus, &split.test)?;
    cfg.baselines
        .iter()
        .map(|b| {
            let run = match b {
                Baseline::Import(p) => {
                    let ds = import_external_embeddings(resolve(base, p), corpus)?;
                    evaluate_split(&ds, split, eval)?
                }
                other => run_text_baseline(other, &train, &test, &eval.classifier, eval.threshold)?,
            };
            Ok(MetricRow {
                split: split.name.clone(),
                representation: b.to_string(),
                questions: Vec::new(),
                providers: Vec::new(),
                classifier: eval.classifier.clone(),
                threshold_rule: eval.threshold,
                threshold: run.threshold,
                metrics: run.metrics,
            })
        })
        .collect()
}

fn mean_row(rows: &[MetricRow], name: &str) -> Option<MetricRow> {
    let first = rows.first()?;
    let n = rows.len() as f64;
    let mean = |f: fn(&Metrics) -> f64| rows.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
    let mut confusion = Confusion::default();
    for r in rows {
        confusion.tp += r.metrics.confusion.tp;
        confusion.fp += r.metrics.confusion.fp;
        confusion.tn += r.metrics.confusion.tn;
        confusion.fn_ += r.metrics.confusion.fn_;
    }
    Some(MetricRow {
        split: name.to_string(),
        threshold: rows.iter().map(|r| r.threshold).sum::<f64>() / n,
        metrics: Metrics {
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: mean(|m| m.f1),
            gmean: mean(|m| m.gmean),
            fpr: mean(|m| m.fpr),
            confusion,
        },
        ..first.clone()
    })
}

fn ablation_split(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<SplitSpec> {
    match cfg.split.as_deref().unwrap_or("main") {
        "main" => main_split_with(corpus, cfg.benign_test.unwrap_or(MAIN_BENIGN_TEST), cfg.seed),
        "smishing" => smishing_split(corpus),
        other => Err(Error::Config(format!("unknown split `{other}`; valid splits: main, smishing"))),
    }
}

/// Runs a configuration. `base` anchors relative paths; `cache_override`
/// replaces the configured response cache.
pub fn run_config(cfg: &ExperimentConfig, base: &Path, cache_override: Option<&Path>) -> Result<ExperimentReport> {
    let kind = cfg.kind()?;
    if cfg.folds < 2 {
        return Err(Error::Config("folds must be at least 2".into()));
    }
    let Prepared {
        corpus,
        dataset,
        summary,
    } = prepare(cfg, base, cache_override)?;
    let eval = EvalConfig {
        classifier: cfg.classifier.clone(),
        threshold: cfg.threshold,
    };
    let mut report = ExperimentReport {
        experiment: kind.as_str().to_string(),
        config: cfg.clone(),
        provenance: Provenance {
            seed: cfg.seed,
            corpus_digest: corpus_digest(&corpus),
            corpus_manifest: corpus.manifest().clone(),
            bank_digest: dataset.header().bank_digest.clone(),
            template_id: dataset.header().template_id.clone(),
            ensemble_signature: dataset.header().ensemble_signature.clone(),
            dataset_digest: dataset.content_digest(),
            vector_dim: dataset.dim(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        },
        splits: Vec::new(),
        rows: Vec::new(),
        llm_ablation: None,
        question_ablation: None,
        disagreement: None,
        vectorization: summary,
        report_hash: String::new(),
    };
    match kind {
        ExperimentKind::Main | ExperimentKind::Smishing => {
            let split = if kind == ExperimentKind::Main {
                main_split_with(&corpus, cfg.benign_test.unwrap_or(MAIN_BENIGN_TEST), cfg.seed)?
            } else {
                smishing_split(&corpus)?
            };
            let run = evaluate_split(&dataset, &split, &eval)?;
            report.rows.push(prompted_row(&split, &dataset, &eval, run));
            report.rows.extend(baseline_rows(cfg, base, &corpus, &split, &eval)?);
            report.splits.push(split.manifest(&corpus));
        }
        ExperimentKind::Crossval => {
            let splits = crossval_holdout(&corpus, cfg.folds, cfg.seed)?;
            let per_fold = par::map(&splits, |s| -> Result<Vec<MetricRow>> {
                let run = evaluate_split(&dataset, s, &eval)?;
                let mut rows = vec![prompted_row(s, &dataset, &eval, run)];
                rows.extend(baseline_rows(cfg, base, &corpus, s, &eval)?);
                Ok(rows)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let width = per_fold.first().map_or(0, Vec::len);
            for rows in &per_fold {
                report.rows.extend(rows.iter().cloned());
            }
            for j in 0..width {
                let column: Vec<MetricRow> = per_fold.iter().map(|r| r[j].clone()).collect();
                report.rows.extend(mean_row(&column, "crossval-mean"));
            }
            report.splits = splits.iter().map(|s| s.manifest(&corpus)).collect();
        }
        ExperimentKind::LlmAblation => {
            let split = ablation_split(cfg, &corpus)?;
            report.llm_ablation = Some(llm_ablation(&dataset, &split, &eval)?);
            report.splits.push(split.manifest(&corpus));
        }
        ExperimentKind::QuestionAblation => {
            let split = ablation_split(cfg, &corpus)?;
            let run = evaluate_split(&dataset, &split, &eval)?;
            let qa = question_ablation(&dataset, &split, &eval)?;
            report.rows.push(prompted_row(&split, &dataset, &eval, run));
            report.question_ablation = Some(qa);
            report.splits.push(split.manifest(&corpus));
        }
        ExperimentKind::Disagreement => {
            report.disagreement = Some(disagreement_report(&dataset, None, cfg.top_n)?);
        }
    }
    report.seal()
}

/// Loads a config file, runs it and writes the report. Returns the report
/// and where it was written.
pub fn run_experiment(config_path: impl AsRef<Path>, cache_override: Option<&Path>) -> Result<(ExperimentReport, PathBuf)> {
    let config_path = config_path.as_ref();
    let cfg = ExperimentConfig::load(config_path)?;
    cfg.kind()?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let report = run_config(&cfg, base, cache_override)?;
    let out = match &cfg.output {
        Some(o) => resolve(base, o),
        None => base.join(format!("{}-report.json", cfg.experiment)),
    };
    report.save(&out)?;
    tracing::info!(path = %out.display(), hash = %report.report_hash, "report written");
    Ok((report, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use crate::synth::synth_corpus_counts;

    fn write_fixture(dir: &Path) {
        let c = synth_corpus_counts(&[(Label::Ham, 40), (Label::Phishing, 25), (Label::SpearPhishing, 10)], 5).unwrap();
        c.save_jsonl(dir.join("corpus.jsonl")).unwrap();
    }

    #[test]
    fn main_on_mock_fixture() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path());
        fs::write(
            dir.path().join("cfg.json"),
            r#"{"experiment":"main","corpus":"corpus.jsonl","classifier":{"model":"knn"},"seed":3,"benign_test":10,"cache":"cache.jsonl"}"#,
        )
        .unwrap();
        let (report, path) = run_experiment(dir.path().join("cfg.json"), None).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.splits.len(), 1);
        assert_eq!(report.splits[0].test_size, 20);
        assert_eq!(report.provenance.vector_dim, 21);
        let on_disk = ExperimentReport::load(&path).unwrap();
        assert_eq!(on_disk.report_hash, report.report_hash);
        let (again, _) = run_experiment(dir.path().join("cfg.json"), None).unwrap();
        assert_eq!(again.report_hash, report.report_hash);
        assert_eq!(fs::read(&path).unwrap(), {
            let mut b = serde_json::to_vec_pretty(&again).unwrap();
            b.push(b'\n');
            b
        });
    }

    #[test]
    fn unknown_experiment_lists_names() {
        let cfg = ExperimentConfig {
            experiment: "everything".into(),
            ..ExperimentConfig::new(ExperimentKind::Main, "x")
        };
        let e = cfg.kind().unwrap_err().to_string();
        assert!(e.contains("main, crossval, smishing, llm_ablation, question_ablation, disagreement"), "{e}");
    }

    #[test]
    fn config_rejects_unknown_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"experiment":"main","corpus":"c.jsonl","colour":1}"#).unwrap();
        assert!(matches!(ExperimentConfig::load(&p), Err(Error::Config(_))));
    }
}
