//! Prompted contextual vectors and vector datasets.
//!
//! Cell order is question-major: for each enabled question in bank order,
//! one cell per provider in ensemble order. Column `c` therefore belongs to
//! question `c / |L|` and provider `c % |L|`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Label, Manifest};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::par;
use crate::providers::{ask_question, ensemble_signature, AnswerStatus, AskContext, JudgeAnswer, Provider, ProviderSpec};
use crate::questions::QuestionBank;

pub const VECTOR_FORMAT: &str = "pcv-vectors/1";

/// Value stored in a cell whose answer failed, until imputation replaces
/// or confirms it.
pub const FAILED_PLACEHOLDER: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Answered,
    ParseFallback,
    Failed,
    Imputed,
}

impl CellStatus {
    /// Whether the cell holds a value a judge actually produced.
    pub fn is_observed(self) -> bool {
        matches!(self, CellStatus::Answered | CellStatus::ParseFallback)
    }
}

impl From<AnswerStatus> for CellStatus {
    fn from(s: AnswerStatus) -> Self {
        match s {
            AnswerStatus::Answered => CellStatus::Answered,
            AnswerStatus::ParseFallback => CellStatus::ParseFallback,
            AnswerStatus::Failed => CellStatus::Failed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptedVector {
    pub doc_id: String,
    pub values: Vec<f64>,
    pub cell_status: Vec<CellStatus>,
    /// Judge reasoning per cell, kept for error analysis.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reasoning: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorRow {
    pub doc_id: String,
    pub label: Label,
    pub values: Vec<f64>,
    pub cell_status: Vec<CellStatus>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reasoning: Vec<String>,
}

impl VectorRow {
    pub fn new(vector: PromptedVector, label: Label) -> Self {
        VectorRow {
            doc_id: vector.doc_id,
            label,
            values: vector.values,
            cell_status: vector.cell_status,
            reasoning: vector.reasoning,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Columns are (question, provider) cells.
    Prompted,
    /// Externally computed embeddings; columns carry no question/provider.
    Imported,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub index: usize,
    pub question_id: String,
    pub provider_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub kind: DatasetKind,
    pub dim: usize,
    pub questions: Vec<String>,
    pub providers: Vec<String>,
    pub columns: Vec<ColumnMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble_signature: Option<String>,
    pub corpus_manifest: Manifest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl DatasetHeader {
    pub fn prompted(questions: Vec<String>, providers: Vec<String>) -> Self {
        let columns = column_table(&questions, &providers);
        DatasetHeader {
            format: VECTOR_FORMAT.to_string(),
            kind: DatasetKind::Prompted,
            dim: columns.len(),
            questions,
            providers,
            columns,
            bank_digest: None,
            template_id: None,
            ensemble_signature: None,
            corpus_manifest: Manifest::default(),
            seed: None,
        }
    }

    pub fn imported(dim: usize) -> Self {
        DatasetHeader {
            format: VECTOR_FORMAT.to_string(),
            kind: DatasetKind::Imported,
            dim,
            questions: Vec::new(),
            providers: Vec::new(),
            columns: Vec::new(),
            bank_digest: None,
            template_id: None,
            ensemble_signature: None,
            corpus_manifest: Manifest::default(),
            seed: None,
        }
    }
}

fn column_table(questions: &[String], providers: &[String]) -> Vec<ColumnMeta> {
    questions
        .iter()
        .flat_map(|q| providers.iter().map(move |p| (q, p)))
        .enumerate()
        .map(|(index, (q, p))| ColumnMeta {
            index,
            question_id: q.clone(),
            provider_id: p.clone(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorDataset {
    header: DatasetHeader,
    rows: Vec<VectorRow>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: DatasetHeader,
}

impl VectorDataset {
    pub fn new(header: DatasetHeader, rows: Vec<VectorRow>) -> Result<Self> {
        if header.kind == DatasetKind::Prompted {
            let expected = header.questions.len() * header.providers.len();
            if header.dim != expected || header.columns.len() != expected {
                return Err(Error::invalid(format!(
                    "header dim {} does not match {} questions x {} providers",
                    header.dim,
                    header.questions.len(),
                    header.providers.len()
                )));
            }
        }
        let mut seen = HashMap::with_capacity(rows.len());
        for r in &rows {
            if r.values.len() != header.dim || r.cell_status.len() != header.dim {
                return Err(Error::invalid(format!(
                    "row `{}` has {} values / {} statuses, expected {}",
                    r.doc_id,
                    r.values.len(),
                    r.cell_status.len(),
                    header.dim
                )));
            }
            if !r.reasoning.is_empty() && r.reasoning.len() != header.dim {
                return Err(Error::invalid(format!("row `{}` has ragged reasoning", r.doc_id)));
            }
            if let Some(v) = r.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("row `{}` has non-finite value {v}", r.doc_id)));
            }
            if header.kind == DatasetKind::Prompted && r.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid(format!("row `{}` has a value outside [0, 1]", r.doc_id)));
            }
            if seen.insert(r.doc_id.as_str(), ()).is_some() {
                return Err(Error::DuplicateId(r.doc_id.clone()));
            }
        }
        Ok(VectorDataset { header, rows })
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    pub fn rows(&self) -> &[VectorRow] {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.header.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_providers(&self) -> usize {
        self.header.providers.len()
    }

    pub fn n_questions(&self) -> usize {
        self.header.questions.len()
    }

    /// Column index of (question position, provider position).
    pub fn column_of(&self, question: usize, provider: usize) -> usize {
        question * self.n_providers() + provider
    }

    /// (question position, provider position) of column `c`.
    pub fn column_owner(&self, c: usize) -> (usize, usize) {
        (c / self.n_providers(), c % self.n_providers())
    }

    pub fn row_index(&self) -> HashMap<&str, usize> {
        self.rows.iter().enumerate().map(|(i, r)| (r.doc_id.as_str(), i)).collect()
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.header.seed = seed;
        self
    }

    fn require_prompted(&self) -> Result<()> {
        match self.header.kind {
            DatasetKind::Prompted => Ok(()),
            DatasetKind::Imported => Err(Error::invalid(
                "operation needs (question, provider) columns; dataset is imported",
            )),
        }
    }

    /// Keeps the given question and provider positions, in the given order.
    pub fn select(&self, questions: &[usize], providers: &[usize]) -> Result<VectorDataset> {
        self.require_prompted()?;
        if questions.is_empty() || providers.is_empty() {
            return Err(Error::invalid("column selection must keep at least one question and one provider"));
        }
        if let Some(&q) = questions.iter().find(|&&q| q >= self.n_questions()) {
            return Err(Error::invalid(format!("question position {q} out of range")));
        }
        if let Some(&p) = providers.iter().find(|&&p| p >= self.n_providers()) {
            return Err(Error::invalid(format!("provider position {p} out of range")));
        }
        let cols: Vec<usize> = questions
            .iter()
            .flat_map(|&q| providers.iter().map(move |&p| (q, p)))
            .map(|(q, p)| self.column_of(q, p))
            .collect();
        let pick = |v: &[f64]| cols.iter().map(|&c| v[c]).collect::<Vec<_>>();
        let rows = self
            .rows
            .iter()
            .map(|r| VectorRow {
                doc_id: r.doc_id.clone(),
                label: r.label,
                values: pick(&r.values),
                cell_status: cols.iter().map(|&c| r.cell_status[c]).collect(),
                reasoning: if r.reasoning.is_empty() {
                    Vec::new()
                } else {
                    cols.iter().map(|&c| r.reasoning[c].clone()).collect()
                },
            })
            .collect();
        let mut header = DatasetHeader::prompted(
            questions.iter().map(|&q| self.header.questions[q].clone()).collect(),
            providers.iter().map(|&p| self.header.providers[p].clone()).collect(),
        );
        header.bank_digest = self.header.bank_digest.clone();
        header.template_id = self.header.template_id.clone();
        header.corpus_manifest = self.header.corpus_manifest.clone();
        header.seed = self.header.seed;
        header.ensemble_signature = if providers.len() == self.n_providers() {
            self.header.ensemble_signature.clone()
        } else {
            None
        };
        VectorDataset::new(header, rows)
    }

    pub fn provider_position(&self, id: &str) -> Result<usize> {
        self.header
            .providers
            .iter()
            .position(|p| p == id)
            .ok_or_else(|| Error::invalid(format!("no provider `{id}` in dataset")))
    }

    pub fn question_position(&self, id: &str) -> Result<usize> {
        self.header
            .questions
            .iter()
            .position(|q| q == id)
            .ok_or_else(|| Error::invalid(format!("no question `{id}` in dataset")))
    }

    /// Keeps only the named providers (in dataset order).
    pub fn restrict_providers(&self, ids: &[&str]) -> Result<VectorDataset> {
        let mut keep = ids.iter().map(|id| self.provider_position(id)).collect::<Result<Vec<_>>>()?;
        keep.sort_unstable();
        keep.dedup();
        self.select(&(0..self.n_questions()).collect::<Vec<_>>(), &keep)
    }

    pub fn drop_provider(&self, id: &str) -> Result<VectorDataset> {
        let drop = self.provider_position(id)?;
        let keep: Vec<usize> = (0..self.n_providers()).filter(|&p| p != drop).collect();
        self.select(&(0..self.n_questions()).collect::<Vec<_>>(), &keep)
    }

    pub fn drop_question(&self, id: &str) -> Result<VectorDataset> {
        let drop = self.question_position(id)?;
        let keep: Vec<usize> = (0..self.n_questions()).filter(|&q| q != drop).collect();
        self.select(&keep, &(0..self.n_providers()).collect::<Vec<_>>())
    }

    /// Rows restricted to `ids`, in the order given.
    pub fn subset(&self, ids: &[String]) -> Result<Vec<&VectorRow>> {
        let index = self.row_index();
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|&i| &self.rows[i])
                    .ok_or_else(|| Error::invalid(format!("document `{id}` has no vector")))
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| match e {
            Error::Json(j) if j.is_io() => Error::io(path, j.into()),
            other => other,
        })?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    fn write_to(&self, w: &mut impl Write) -> Result<()> {
        serde_json::to_writer(
            &mut *w,
            &HeaderLine {
                header: self.header.clone(),
            },
        )?;
        writeln!(w).map_err(serde_json::Error::io)?;
        for r in &self.rows {
            serde_json::to_writer(&mut *w, r)?;
            writeln!(w).map_err(serde_json::Error::io)?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::invalid(format!("{}: empty vector file", path.display())))?
            .map_err(|e| Error::io(path, e))?;
        let header = serde_json::from_str::<HeaderLine>(&first)?.header;
        if header.format != VECTOR_FORMAT {
            return Err(Error::invalid(format!("unsupported vector format `{}`", header.format)));
        }
        let mut rows = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if !line.trim().is_empty() {
                rows.push(serde_json::from_str(&line)?);
            }
        }
        VectorDataset::new(header, rows)
    }

    /// SHA-256 of the serialized file form.
    pub fn content_digest(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        sha256_hex(buf)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorizeReport {
    pub documents: usize,
    pub cells: usize,
    pub answered: usize,
    pub parse_fallback: usize,
    pub failed: usize,
    pub cache_hits: usize,
    pub requests: usize,
}

#[derive(Clone, Debug)]
pub struct VectorizeOptions {
    /// Abort when more than this fraction of cells fail.
    pub max_failure_fraction: f64,
    pub parallelism: Option<usize>,
    pub seed: Option<u64>,
}

impl Default for VectorizeOptions {
    fn default() -> Self {
        VectorizeOptions {
            max_failure_fraction: 0.10,
            parallelism: None,
            seed: None,
        }
    }
}

fn check_ensemble(bank: &QuestionBank, ensemble: &[Provider]) -> Result<()> {
    if bank.active().is_empty() {
        return Err(Error::invalid("question bank has no enabled questions"));
    }
    if ensemble.is_empty() {
        return Err(Error::invalid("provider ensemble is empty"));
    }
    for p in ensemble {
        p.validate_for_bank(bank)?;
    }
    Ok(())
}

fn assemble(doc_id: &str, answers: Vec<JudgeAnswer>) -> PromptedVector {
    let mut v = PromptedVector {
        doc_id: doc_id.to_string(),
        values: Vec::with_capacity(answers.len()),
        cell_status: Vec::with_capacity(answers.len()),
        reasoning: Vec::with_capacity(answers.len()),
    };
    for a in answers {
        v.values.push(a.probability.unwrap_or(FAILED_PLACEHOLDER));
        v.cell_status.push(a.status.into());
        v.reasoning.push(a.reasoning);
    }
    v
}

/// Builds one document's vector by asking every (question, provider) pair
/// in bank-then-ensemble order.
pub fn vectorize_document(doc: &Document, bank: &QuestionBank, ensemble: &[Provider], ctx: &AskContext<'_>) -> Result<PromptedVector> {
    check_ensemble(bank, ensemble)?;
    let mut answers = Vec::new();
    for q in bank.active() {
        for p in ensemble {
            answers.push(ask_question(doc, q, p, ctx)?);
        }
    }
    Ok(assemble(&doc.id, answers))
}

/// Vectorizes a whole corpus. Cells are requested concurrently and
/// reassembled in order, so the result does not depend on completion
/// order. Re-running against the same cache only requests cells that are
/// not cached yet.
pub fn vectorize_corpus(
    corpus: &Corpus,
    bank: &QuestionBank,
    ensemble: &[Provider],
    ctx: &AskContext<'_>,
    opts: &VectorizeOptions,
) -> Result<(VectorDataset, VectorizeReport)> {
    if corpus.is_empty() {
        return Err(Error::invalid("cannot vectorize an empty corpus"));
    }
    check_ensemble(bank, ensemble)?;
    let questions = bank.active();
    let per_doc = questions.len() * ensemble.len();
    let docs = corpus.documents();
    let hits_before = ctx.stats.cache_hits.load(Ordering::Relaxed);
    let requests_before = ctx.stats.requests.load(Ordering::Relaxed);

    let answers: Vec<Result<JudgeAnswer>> = par::with_threads(opts.parallelism, || {
        par::map_range(docs.len() * per_doc, |i| {
            let (d, cell) = (i / per_doc, i % per_doc);
            let (q, p) = (cell / ensemble.len(), cell % ensemble.len());
            ask_question(&docs[d], questions[q], &ensemble[p], ctx)
        })
    });
    let answers = answers.into_iter().collect::<Result<Vec<_>>>()?;

    let mut report = VectorizeReport {
        documents: docs.len(),
        cells: answers.len(),
        cache_hits: ctx.stats.cache_hits.load(Ordering::Relaxed) - hits_before,
        requests: ctx.stats.requests.load(Ordering::Relaxed) - requests_before,
        ..VectorizeReport::default()
    };
    for a in &answers {
        match a.status {
            AnswerStatus::Answered => report.answered += 1,
            AnswerStatus::ParseFallback => report.parse_fallback += 1,
            AnswerStatus::Failed => report.failed += 1,
        }
    }
    if report.failed as f64 > opts.max_failure_fraction * report.cells as f64 {
        return Err(Error::invalid(format!(
            "{} of {} cells failed (limit {:.0}%)",
            report.failed,
            report.cells,
            opts.max_failure_fraction * 100.0
        )));
    }

    let mut answers = answers.into_iter();
    let rows = docs
        .iter()
        .map(|d| VectorRow::new(assemble(&d.id, answers.by_ref().take(per_doc).collect()), d.label))
        .collect();

    let specs: Vec<ProviderSpec> = ensemble.iter().map(|p| p.spec().clone()).collect();
    let mut header = DatasetHeader::prompted(
        questions.iter().map(|q| q.id.clone()).collect(),
        ensemble.iter().map(|p| p.id().to_string()).collect(),
    );
    header.bank_digest = Some(ctx.bank_digest.to_string());
    header.template_id = Some(ctx.template.id.clone());
    header.ensemble_signature = Some(ensemble_signature(&specs));
    header.corpus_manifest = corpus.manifest().clone();
    header.seed = opts.seed;
    tracing::info!(
        documents = report.documents,
        cells = report.cells,
        failed = report.failed,
        cache_hits = report.cache_hits,
        "vectorized corpus"
    );
    Ok((VectorDataset::new(header, rows)?, report))
}

/// How failed cells are handled. String forms: `neutral_half`,
/// `ensemble_mean`, `provider_drop:<provider id>`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ImputePolicy {
    #[default]
    NeutralHalf,
    EnsembleMean,
    ProviderDrop(String),
}

impl std::fmt::Display for ImputePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ImputePolicy::NeutralHalf => f.write_str("neutral_half"),
            ImputePolicy::EnsembleMean => f.write_str("ensemble_mean"),
            ImputePolicy::ProviderDrop(p) => write!(f, "provider_drop:{p}"),
        }
    }
}

impl std::str::FromStr for ImputePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neutral_half" => Ok(ImputePolicy::NeutralHalf),
            "ensemble_mean" => Ok(ImputePolicy::EnsembleMean),
            _ => match s.strip_prefix("provider_drop:") {
                Some(p) if !p.is_empty() => Ok(ImputePolicy::ProviderDrop(p.to_string())),
                _ => Err(Error::invalid(format!(
                    "unknown imputation `{s}`; valid: neutral_half, ensemble_mean, provider_drop:<id>"
                ))),
            },
        }
    }
}

impl From<ImputePolicy> for String {
    fn from(p: ImputePolicy) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for ImputePolicy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImputeReport {
    pub imputed: usize,
    /// Cells where `ensemble_mean` had no observed sibling and fell back to 0.5.
    pub flagged: Vec<(String, usize)>,
}

/// Replaces failed cells (or drops a provider's columns).
pub fn impute_cells(dataset: &VectorDataset, policy: &ImputePolicy) -> Result<(VectorDataset, ImputeReport)> {
    let mut report = ImputeReport::default();
    if let ImputePolicy::ProviderDrop(id) = policy {
        return Ok((dataset.drop_provider(id)?, report));
    }
    let has_failed = dataset
        .rows
        .iter()
        .any(|r| r.cell_status.contains(&CellStatus::Failed));
    if !has_failed {
        return Ok((dataset.clone(), report));
    }
    if *policy == ImputePolicy::EnsembleMean {
        dataset.require_prompted()?;
    }
    let l = dataset.n_providers().max(1);
    let mut out = dataset.clone();
    for row in &mut out.rows {
        let original = row.clone();
        for c in 0..original.values.len() {
            if original.cell_status[c] != CellStatus::Failed {
                continue;
            }
            let value = match policy {
                ImputePolicy::NeutralHalf => 0.5,
                ImputePolicy::EnsembleMean => {
                    let q = c / l;
                    let siblings: Vec<f64> = (q * l..q * l + l)
                        .filter(|&s| s != c && original.cell_status[s].is_observed())
                        .map(|s| original.values[s])
                        .collect();
                    if siblings.is_empty() {
                        report.flagged.push((row.doc_id.clone(), c));
                        0.5
                    } else {
                        siblings.iter().sum::<f64>() / siblings.len() as f64
                    }
                }
                ImputePolicy::ProviderDrop(_) => unreachable!(),
            };
            row.values[c] = value;
            row.cell_status[c] = CellStatus::Imputed;
            report.imputed += 1;
        }
    }
    Ok((out, report))
}

/// Per-label row counts.
pub fn label_counts(dataset: &VectorDataset) -> BTreeMap<Label, usize> {
    let mut m = BTreeMap::new();
    for r in &dataset.rows {
        *m.entry(r.label).or_default() += 1;
    }
    m
}
