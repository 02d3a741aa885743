use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pcv_core::corpus::{export_corpus, load_corpus, IngestOptions};
use pcv_core::experiments::run::run_config;
use pcv_core::experiments::{disagreement_report, ExperimentConfig, ExperimentKind, SplitSpec};
use pcv_core::learn::{
    binary_label, compute_metrics_scored, optimize_threshold, resolve_threshold, ClassifierConfig, Model, ModelKind,
    ThresholdRule,
};
use pcv_core::providers::{default_mock_ensemble, load_providers, AskContext, Provider, ResponseCache};
use pcv_core::questions::{default_question_bank, PromptTemplate, QuestionBank};
use pcv_core::synth::synth_corpus;
use pcv_core::vectorize::{vectorize_corpus, VectorDataset, VectorizeOptions};
use pcv_core::viz::{emit_plot_data, tsne_embed, TsneParams};
use serde_json::{json, Value};

use crate::{
    AblateCommand, AnalyzeCommand, CacheCommand, Command, ConfigArgs, DisagreementArgs, EvaluateArgs,
    ExperimentCommand, IngestArgs, SynthArgs, TrainArgs, TsneArgs, VectorizeArgs, VizCommand, CACHE_ENV,
};

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Vectorize(a) => vectorize(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Experiment(ExperimentCommand::Run(a)) => experiment(a, None),
        Command::Ablate(AblateCommand::Llms(a)) => experiment(a, Some(ExperimentKind::LlmAblation)),
        Command::Ablate(AblateCommand::Questions(a)) => experiment(a, Some(ExperimentKind::QuestionAblation)),
        Command::Analyze(AnalyzeCommand::Disagreement(a)) => disagreement(a),
        Command::Viz(VizCommand::Tsne(a)) => viz_tsne(a),
        Command::Synth(a) => synth(a),
        Command::Cache(CacheCommand::Stats(a)) => cache_stats(a.path),
    }
}

/// `PCV_CACHE` wins over any path given on the command line or in a config.
fn cache_path(flag: Option<PathBuf>) -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or(flag)
}

fn print_json(value: &Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_split(path: &Path) -> Result<SplitSpec> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&raw).with_context(|| format!("parsing split {}", path.display()))
}

/// Feature rows and binary labels, optionally restricted to `ids`.
fn xy(dataset: &VectorDataset, ids: Option<&[String]>) -> Result<(Vec<String>, Vec<Vec<f64>>, Vec<u8>)> {
    let rows = match ids {
        Some(ids) => dataset.subset(ids)?,
        None => dataset.rows().iter().collect(),
    };
    Ok((
        rows.iter().map(|r| r.doc_id.clone()).collect(),
        rows.iter().map(|r| r.values.clone()).collect(),
        rows.iter().map(|r| binary_label(r.label)).collect(),
    ))
}

fn ingest(a: IngestArgs) -> Result<()> {
    let opts = IngestOptions {
        label: a.label,
        source: a.source,
    };
    let (corpus, report) = load_corpus(&a.input, a.format, &opts)?;
    export_corpus(&corpus, &a.out)?;
    tracing::info!(documents = corpus.len(), path = %a.out.display(), "corpus written");
    print_json(&serde_json::to_value(&report)?)
}

fn vectorize(a: VectorizeArgs) -> Result<()> {
    let (corpus, load) = load_corpus(&a.corpus.corpus, a.corpus.corpus_format, &IngestOptions::default())?;
    if load.skipped > 0 {
        tracing::warn!(skipped = load.skipped, "corpus rows skipped");
    }
    let template = match &a.template {
        Some(p) => PromptTemplate::load(p)?,
        None => PromptTemplate::default_template(),
    };
    let bank = match &a.bank {
        Some(p) => QuestionBank::load(p, &template.id)?,
        None => default_question_bank(),
    };
    let specs = match &a.providers {
        Some(p) => load_providers(p)?,
        None => default_mock_ensemble(),
    };
    let ensemble = Provider::from_specs(&specs)?;
    let cache = match cache_path(a.cache) {
        Some(p) => ResponseCache::open(p)?,
        None => ResponseCache::in_memory(),
    };
    let digest = bank.digest();
    let ctx = AskContext::new(&template, &digest).with_cache(&cache);
    let opts = VectorizeOptions {
        max_failure_fraction: a.max_failure_fraction,
        seed: a.seed,
        ..VectorizeOptions::default()
    };
    let (dataset, report) = vectorize_corpus(&corpus, &bank, &ensemble, &ctx, &opts)?;
    dataset.save(&a.out)?;
    tracing::info!(rows = dataset.len(), dim = dataset.dim(), path = %a.out.display(), "vectors written");
    print_json(&serde_json::to_value(&report)?)
}

fn classifier_config(a: &TrainArgs) -> Result<ClassifierConfig> {
    let mut cfg = ClassifierConfig::default_for(a.model);
    let unused = |flag: &str, set: bool| -> Result<()> {
        if set {
            bail!("--{flag} does not apply to --model {}", a.model.as_str());
        }
        Ok(())
    };
    match &mut cfg {
        ClassifierConfig::Knn { k, metric } => {
            unused("trees", a.trees.is_some())?;
            unused("seed", a.seed.is_some())?;
            *k = a.k.unwrap_or(*k);
            *metric = a.metric.unwrap_or(*metric);
        }
        ClassifierConfig::Forest { trees, seed } | ClassifierConfig::Extra { trees, seed } => {
            unused("k", a.k.is_some())?;
            *trees = a.trees.unwrap_or(*trees);
            *seed = a.seed.unwrap_or(*seed);
        }
        ClassifierConfig::Boosted {
            rounds,
            learning_rate,
            max_depth,
        } => {
            unused("k", a.k.is_some())?;
            *rounds = a.rounds.unwrap_or(*rounds);
            *learning_rate = a.learning_rate.unwrap_or(*learning_rate);
            *max_depth = a.max_depth.unwrap_or(*max_depth);
        }
    }
    if a.model != ModelKind::Boosted {
        unused("rounds", a.rounds.is_some())?;
        unused("learning-rate", a.learning_rate.is_some())?;
        unused("max-depth", a.max_depth.is_some())?;
    }
    Ok(cfg)
}

fn train(a: TrainArgs) -> Result<()> {
    let config = classifier_config(&a)?;
    let dataset = VectorDataset::load(&a.input)?;
    let split = a.split.as_deref().map(load_split).transpose()?;
    let (_, x, y) = xy(&dataset, split.as_ref().map(|s| s.train.as_slice()))?;
    let model = config.fit(&x, &y)?;
    let threshold = resolve_threshold(a.threshold, &config, &x, &y)?;
    model.save(&a.out, threshold)?;
    tracing::info!(model = a.model.as_str(), rows = x.len(), threshold, path = %a.out.display(), "model written");
    print_json(&json!({
        "model": a.model.as_str(),
        "classifier": config,
        "rows": x.len(),
        "threshold_rule": a.threshold,
        "threshold": threshold,
    }))
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let (model, stored) = Model::load(&a.model)?;
    let dataset = VectorDataset::load(&a.input)?;
    if dataset.dim() != model.dim() {
        bail!("model expects {} features, dataset has {}", model.dim(), dataset.dim());
    }
    let split = a.split.as_deref().map(load_split).transpose()?;
    let (ids, x, y) = xy(&dataset, split.as_ref().map(|s| s.test.as_slice()))?;
    let scores = model.predict(&x)?;
    let (threshold, source) = match a.threshold {
        None => (stored, "model"),
        Some(ThresholdRule::Fixed(t)) => (t, "fixed"),
        Some(ThresholdRule::Optimize(obj)) => {
            tracing::warn!("threshold optimized on the evaluated rows; metrics are optimistic");
            (optimize_threshold(&scores, &y, obj)?, "optimized_on_evaluated_rows")
        }
    };
    let metrics = compute_metrics_scored(&y, &scores, threshold)?;
    let result = json!({
        "rows": ids.len(),
        "threshold": threshold,
        "threshold_source": source,
        "metrics": metrics,
    });
    if let Some(out) = &a.out {
        write_json(out, &result)?;
    }
    print_json(&result)
}

fn experiment(a: ConfigArgs, kind: Option<ExperimentKind>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(kind) = kind {
        cfg.experiment = kind.as_str().to_string();
    }
    cfg.kind()?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let cache = cache_path(a.cache);
    let report = run_config(&cfg, base, cache.as_deref())?;
    let out = match (&a.out, &cfg.output) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) if kind.is_none() => {
            if o.is_absolute() {
                o.clone()
            } else {
                base.join(o)
            }
        }
        _ => base.join(format!("{}-report.json", cfg.experiment)),
    };
    report.save(&out)?;
    tracing::info!(path = %out.display(), hash = %report.report_hash, "report written");
    print_json(&json!({ "report": out, "report_hash": report.report_hash }))
}

fn disagreement(a: DisagreementArgs) -> Result<()> {
    let dataset = VectorDataset::load(&a.input)?;
    let split = a.split.as_deref().map(load_split).transpose()?;
    let findings = disagreement_report(&dataset, split.as_ref().map(|s| s.test.as_slice()), a.top)?;
    let value = serde_json::to_value(&findings)?;
    if let Some(out) = &a.out {
        write_json(out, &value)?;
    }
    print_json(&value)
}

fn viz_tsne(a: TsneArgs) -> Result<()> {
    let dataset = VectorDataset::load(&a.input)?;
    let params = TsneParams {
        perplexity: a.perplexity,
        iterations: a.iterations,
        seed: a.seed,
        ..TsneParams::default()
    };
    let result = tsne_embed(&dataset, &params)?;
    emit_plot_data(&result, &a.out)?;
    let diagnostics = serde_json::to_value(&result.diagnostics)?;
    if let Some(p) = &a.diagnostics {
        write_json(p, &diagnostics)?;
    }
    tracing::info!(points = result.points.len(), final_kl = result.diagnostics.final_kl, path = %a.out.display(), "embedding written");
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let n = usize::try_from(a.n).context("--per-class is too large")?;
    let corpus = synth_corpus(n, a.seed, a.profile)?;
    corpus.save_jsonl(&a.out)?;
    tracing::info!(documents = corpus.len(), path = %a.out.display(), "synthetic corpus written");
    Ok(())
}

fn cache_stats(path: Option<PathBuf>) -> Result<()> {
    let Some(path) = cache_path(path) else {
        bail!("no cache file: pass --path or set {CACHE_ENV}");
    };
    if !path.exists() {
        bail!("cache file {} does not exist", path.display());
    }
    let cache = ResponseCache::open(&path)?;
    print_json(&json!({
        "path": path,
        "entries": cache.len(),
        "unreadable_lines": cache.skipped_lines(),
    }))
}
