//! Append-only response cache.
//!
//! One JSON object per line: `{"key": CacheKey, "answer": JudgeAnswer}`.
//! The file is replayed into an in-memory index on open; a torn last line
//! from an interrupted writer is skipped.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::JudgeAnswer;
use crate::digest::sha256_parts;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub provider_id: String,
    pub bank_digest: String,
    pub template_id: String,
    pub question_id: String,
    pub doc_hash: String,
}

impl CacheKey {
    pub fn digest(&self) -> String {
        sha256_parts([
            &self.provider_id,
            &self.bank_digest,
            &self.template_id,
            &self.question_id,
            &self.doc_hash,
        ])
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: CacheKey,
    answer: JudgeAnswer,
}

#[derive(Default)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    index: RwLock<HashMap<String, JudgeAnswer>>,
    writer: Mutex<Option<File>>,
    skipped_lines: usize,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache::default()
    }

    /// Opens (creating if needed) a persistent cache file.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut index = HashMap::new();
        let mut skipped = 0;
        if path.exists() {
            let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for line in BufReader::new(f).lines() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Entry>(&line) {
                    Ok(e) => {
                        index.entry(e.key.digest()).or_insert(e.answer);
                    }
                    Err(_) => skipped += 1,
                }
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        if skipped > 0 {
            tracing::warn!(path = %path.display(), skipped, "cache lines could not be parsed");
            // A torn final line would otherwise swallow the next append.
            file.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        Ok(ResponseCache {
            path: Some(path),
            index: RwLock::new(index),
            writer: Mutex::new(Some(file)),
            skipped_lines: skipped,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &CacheKey) -> Option<JudgeAnswer> {
        self.index.read().unwrap().get(&key.digest()).cloned()
    }

    /// Stores an answer. The first write for a key wins.
    pub fn put(&self, key: &CacheKey, answer: &JudgeAnswer) -> Result<()> {
        let digest = key.digest();
        let mut writer = self.writer.lock().unwrap();
        if self.index.read().unwrap().contains_key(&digest) {
            return Ok(());
        }
        if let Some(file) = writer.as_mut() {
            let mut line = serde_json::to_vec(&Entry {
                key: key.clone(),
                answer: answer.clone(),
            })?;
            line.push(b'\n');
            let path = self.path.as_deref().unwrap_or(Path::new("<cache>"));
            file.write_all(&line).map_err(|e| Error::io(path, e))?;
            file.flush().map_err(|e| Error::io(path, e))?;
        }
        self.index.write().unwrap().insert(digest, answer.clone());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.index.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn skipped_lines(&self) -> usize {
        self.skipped_lines
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::AnswerStatus;
    use std::sync::Arc;

    fn key(q: &str) -> CacheKey {
        CacheKey {
            provider_id: "p".into(),
            bank_digest: "b".into(),
            template_id: "t".into(),
            question_id: q.into(),
            doc_hash: "h".into(),
        }
    }

    fn answer(q: &str, p: f64) -> JudgeAnswer {
        JudgeAnswer {
            doc_id: "d".into(),
            question_id: q.into(),
            provider_id: "p".into(),
            probability: Some(p),
            reasoning: "r".into(),
            raw: "{}".into(),
            status: AnswerStatus::Answered,
        }
    }

    #[test]
    fn put_then_get_and_cold_miss() {
        let c = ResponseCache::in_memory();
        assert!(c.get(&key("a")).is_none());
        c.put(&key("a"), &answer("a", 0.1)).unwrap();
        assert_eq!(c.get(&key("a")), Some(answer("a", 0.1)));
    }

    #[test]
    fn persists_across_reopen_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cache.jsonl");
        let v = 0.1 + 0.2;
        {
            let c = ResponseCache::open(&p).unwrap();
            c.put(&key("a"), &answer("a", v)).unwrap();
        }
        let c = ResponseCache::open(&p).unwrap();
        assert_eq!(
            c.get(&key("a")).unwrap().probability.unwrap().to_bits(),
            v.to_bits()
        );
    }

    #[test]
    fn torn_line_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cache.jsonl");
        {
            let c = ResponseCache::open(&p).unwrap();
            c.put(&key("a"), &answer("a", 0.5)).unwrap();
        }
        std::fs::OpenOptions::new()
            .append(true)
            .open(&p)
            .unwrap()
            .write_all(b"{\"key\":{\"provider")
            .unwrap();
        let c = ResponseCache::open(&p).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.skipped_lines(), 1);
        c.put(&key("b"), &answer("b", 0.5)).unwrap();
        drop(c);
        assert_eq!(ResponseCache::open(&p).unwrap().len(), 2);
    }

    #[test]
    fn concurrent_distinct_puts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cache.jsonl");
        let c = Arc::new(ResponseCache::open(&p).unwrap());
        let handles: Vec<_> = (0..100)
            .map(|i| {
                let c = Arc::clone(&c);
                std::thread::spawn(move || {
                    let q = format!("q{i}");
                    c.put(&key(&q), &answer(&q, i as f64 / 100.0)).unwrap();
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(c.len(), 100);
        drop(c);
        let reopened = ResponseCache::open(&p).unwrap();
        assert_eq!(reopened.len(), 100);
        assert_eq!(reopened.skipped_lines(), 0);
        for i in 0..100 {
            let q = format!("q{i}");
            assert_eq!(
                reopened.get(&key(&q)).unwrap().probability,
                Some(i as f64 / 100.0)
            );
        }
    }
}
