//! Labeled document collections and their ingest paths.
//!
//! JSON Lines is the canonical interchange format; CSV, `.eml` directories
//! and mbox files are converted into [`Document`]s at load time.

mod extract;

pub use extract::{extract_text, normalize_whitespace, strip_html, Extracted};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::par;

macro_rules! snake_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::invalid(format!(
                        "unknown {} `{other}` (expected one of: {})",
                        stringify!($name).to_lowercase(),
                        [$($text),+].join(", ")
                    ))),
                }
            }
        }
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Ham,
    Phishing,
    SpearPhishing,
    Smishing,
    BenignSms,
}

snake_enum!(Label {
    Ham => "ham",
    Phishing => "phishing",
    SpearPhishing => "spear_phishing",
    Smishing => "smishing",
    BenignSms => "benign_sms",
});

impl Label {
    pub fn medium(self) -> Medium {
        match self {
            Label::Smishing | Label::BenignSms => Medium::Sms,
            _ => Medium::Email,
        }
    }

    pub fn is_malicious(self) -> bool {
        matches!(
            self,
            Label::Phishing | Label::SpearPhishing | Label::Smishing
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Enron,
    SpamassassinHardHam,
    PhishingArchive,
    GeneratedSpear,
    SmishCorpus,
    UciSms,
    Synthetic,
}

snake_enum!(Source {
    Enron => "enron",
    SpamassassinHardHam => "spamassassin_hard_ham",
    PhishingArchive => "phishing_archive",
    GeneratedSpear => "generated_spear",
    SmishCorpus => "smish_corpus",
    UciSms => "uci_sms",
    Synthetic => "synthetic",
});

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Medium {
    Email,
    Sms,
}

snake_enum!(Medium {
    Email => "email",
    Sms => "sms",
});

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub label: Label,
    pub source: Source,
    pub medium: Medium,
}

impl Document {
    /// Builds a document, deriving the medium from the label.
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        label: Label,
        source: Source,
    ) -> Result<Self> {
        let doc = Document {
            id: id.into(),
            text: text.into(),
            subject: None,
            label,
            source,
            medium: label.medium(),
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Corpus("empty document id".into()));
        }
        if self.text.trim().is_empty() {
            return Err(Error::Corpus(format!(
                "document `{}` has empty text",
                self.id
            )));
        }
        if self.label.medium() != self.medium {
            return Err(Error::Corpus(format!(
                "document `{}`: label {} is inconsistent with medium {}",
                self.id, self.label, self.medium
            )));
        }
        Ok(())
    }

    /// SHA-256 of the text bytes; the cache keys on this rather than the id.
    pub fn content_hash(&self) -> String {
        sha256_hex(self.text.as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub label: Label,
    pub source: Source,
    pub medium: Medium,
    pub count: usize,
}

/// Exact counts per (label, source, medium), sorted by key.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn total(&self) -> usize {
        self.rows.iter().map(|r| r.count).sum()
    }

    pub fn label_total(&self, label: Label) -> usize {
        self.rows
            .iter()
            .filter(|r| r.label == label)
            .map(|r| r.count)
            .sum()
    }

    pub fn source_total(&self, source: Source) -> usize {
        self.rows
            .iter()
            .filter(|r| r.source == source)
            .map(|r| r.count)
            .sum()
    }

    pub fn count(&self, label: Label, source: Source) -> usize {
        self.rows
            .iter()
            .filter(|r| r.label == label && r.source == source)
            .map(|r| r.count)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    manifest: Manifest,
}

impl Corpus {
    /// Validates every document and rejects duplicate ids.
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for d in &documents {
            d.validate()?;
            if !seen.insert(d.id.as_str()) {
                return Err(Error::DuplicateId(d.id.clone()));
            }
        }
        let manifest = manifest_of(&documents);
        Ok(Corpus {
            documents,
            manifest,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    /// Id → position lookup table.
    pub fn index(&self) -> BTreeMap<&str, usize> {
        self.documents
            .iter()
            .enumerate()
            .map(|(i, d)| (d.id.as_str(), i))
            .collect()
    }

    /// Concatenates corpora; ids must stay unique.
    pub fn merge(parts: impl IntoIterator<Item = Corpus>) -> Result<Corpus> {
        Corpus::new(parts.into_iter().flat_map(|c| c.documents).collect())
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        export_corpus(self, path)
    }
}

fn manifest_of(docs: &[Document]) -> Manifest {
    let mut counts: BTreeMap<(Label, Source, Medium), usize> = BTreeMap::new();
    for d in docs {
        *counts.entry((d.label, d.source, d.medium)).or_default() += 1;
    }
    Manifest {
        rows: counts
            .into_iter()
            .map(|((label, source, medium), count)| ManifestRow {
                label,
                source,
                medium,
                count,
            })
            .collect(),
    }
}

/// Label × source × medium counts.
pub fn corpus_stats(corpus: &Corpus) -> Manifest {
    corpus.manifest.clone()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
    EmlDir,
    Mbox,
}

snake_enum!(CorpusFormat {
    Jsonl => "jsonl",
    Csv => "csv",
    EmlDir => "eml_dir",
    Mbox => "mbox",
});

/// Label and source to stamp on formats that do not carry them (eml, mbox),
/// and the fallback source for JSON Lines / CSV rows without one.
#[derive(Clone, Debug, Default)]
pub struct IngestOptions {
    pub label: Option<Label>,
    pub source: Option<Source>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReason {
    pub record: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub loaded: usize,
    pub skipped: usize,
    pub reasons: Vec<SkipReason>,
    /// Records whose charset could not be decoded cleanly.
    #[serde(default)]
    pub lossy: Vec<String>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    #[serde(default)]
    subject: Option<String>,
    label: String,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    medium: Option<String>,
}

impl RawRecord {
    fn into_document(self, opts: &IngestOptions) -> Result<Document> {
        let label: Label = self.label.trim().parse()?;
        let source = match self
            .source
            .as_deref()
            .map(str::trim)
            .filter(|s| !s.is_empty())
        {
            Some(s) => s.parse()?,
            None => opts.source.unwrap_or(Source::Synthetic),
        };
        let medium = match self
            .medium
            .as_deref()
            .map(str::trim)
            .filter(|s| !s.is_empty())
        {
            Some(m) => m.parse()?,
            None => label.medium(),
        };
        let doc = Document {
            id: self.id.trim().to_string(),
            text: normalize_whitespace(&self.text),
            subject: self.subject.filter(|s| !s.trim().is_empty()),
            label,
            source,
            medium,
        };
        doc.validate()?;
        Ok(doc)
    }
}

/// Loads a corpus. Malformed records are skipped and listed in the report;
/// duplicate ids and empty results are errors.
pub fn load_corpus(
    path: impl AsRef<Path>,
    format: CorpusFormat,
    opts: &IngestOptions,
) -> Result<(Corpus, LoadReport)> {
    let path = path.as_ref();
    let outcomes: Vec<(String, Result<(Document, bool)>)> = match format {
        CorpusFormat::Jsonl => read_jsonl_records(path, opts)?,
        CorpusFormat::Csv => read_csv_records(path, opts)?,
        CorpusFormat::EmlDir => read_eml_dir(path, opts)?,
        CorpusFormat::Mbox => read_mbox(path, opts)?,
    };

    let mut report = LoadReport::default();
    let mut docs = Vec::with_capacity(outcomes.len());
    for (record, outcome) in outcomes {
        match outcome {
            Ok((doc, lossy)) => {
                if lossy {
                    report.lossy.push(doc.id.clone());
                }
                docs.push(doc);
            }
            Err(e) => {
                tracing::debug!(record = %record, error = %e, "skipped record");
                report.skipped += 1;
                report.reasons.push(SkipReason {
                    record,
                    reason: e.to_string(),
                });
            }
        }
    }
    if docs.is_empty() {
        return Err(Error::Corpus(format!(
            "{}: zero valid documents",
            path.display()
        )));
    }
    report.loaded = docs.len();
    Ok((Corpus::new(docs)?, report))
}

/// Source line tag paired with the parsed document (or why it was skipped).
type ParsedRecord = (String, Result<(Document, bool)>);

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_jsonl_records(
    path: &Path,
    opts: &IngestOptions,
) -> Result<Vec<ParsedRecord>> {
    let content = read_to_string(path)?;
    Ok(content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let outcome = serde_json::from_str::<RawRecord>(line)
                .map_err(Error::from)
                .and_then(|r| r.into_document(opts))
                .map(|d| (d, false));
            (format!("line {}", i + 1), outcome)
        })
        .collect())
}

fn read_csv_records(
    path: &Path,
    opts: &IngestOptions,
) -> Result<Vec<ParsedRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Corpus(format!("{}: {other:?}", path.display())),
        })?;
    Ok(reader
        .deserialize::<RawRecord>()
        .enumerate()
        .map(|(i, r)| {
            let outcome = r
                .map_err(Error::from)
                .and_then(|r| r.into_document(opts))
                .map(|d| (d, false));
            (format!("row {}", i + 1), outcome)
        })
        .collect())
}

fn message_document(id: String, raw: &[u8], opts: &IngestOptions) -> Result<(Document, bool)> {
    let label = opts
        .label
        .ok_or_else(|| Error::Config("eml/mbox ingest requires a label".into()))?;
    let extracted = extract_text(raw)?;
    let doc = Document {
        id,
        text: extracted.text,
        subject: extracted.subject,
        label,
        source: opts.source.unwrap_or(Source::Synthetic),
        medium: label.medium(),
    };
    doc.validate()?;
    Ok((doc, extracted.lossy))
}

fn read_eml_dir(
    path: &Path,
    opts: &IngestOptions,
) -> Result<Vec<ParsedRecord>> {
    if opts.label.is_none() {
        return Err(Error::Config("eml_dir ingest requires a label".into()));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(par::map(&files, |file| {
        let id = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let outcome = fs::read(file)
            .map_err(|e| Error::io(file, e))
            .and_then(|raw| message_document(id, &raw, opts));
        (file.display().to_string(), outcome)
    }))
}

/// Splits an mbox at `From ` separator lines and undoes `>From ` quoting.
pub fn split_mbox(content: &[u8]) -> Vec<Vec<u8>> {
    let mut messages = Vec::new();
    let mut current: Option<Vec<u8>> = None;
    let mut prev_blank = true;
    for line in content.split_inclusive(|&b| b == b'\n') {
        if line.starts_with(b"From ") && prev_blank {
            if let Some(m) = current.take() {
                messages.push(m);
            }
            current = Some(Vec::new());
            prev_blank = false;
            continue;
        }
        prev_blank = line.iter().all(|b| b.is_ascii_whitespace());
        if let Some(m) = current.as_mut() {
            let line = if line.starts_with(b">From ") {
                &line[1..]
            } else {
                line
            };
            m.extend_from_slice(line);
        }
    }
    if let Some(m) = current {
        messages.push(m);
    }
    messages
}

fn read_mbox(path: &Path, opts: &IngestOptions) -> Result<Vec<ParsedRecord>> {
    if opts.label.is_none() {
        return Err(Error::Config("mbox ingest requires a label".into()));
    }
    let content = fs::read(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mbox".into());
    let messages = split_mbox(&content);
    let indices: Vec<usize> = (0..messages.len()).collect();
    Ok(par::map(&indices, |&i| {
        let id = format!("{stem}-{i:05}");
        (
            format!("message {}", i + 1),
            message_document(id, &messages[i], opts),
        )
    }))
}

/// Writes the canonical JSON Lines form.
pub fn export_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for d in &corpus.documents {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
