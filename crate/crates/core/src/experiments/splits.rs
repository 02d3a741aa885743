use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Label, Medium, Source};
use crate::digest::sha256_parts;
use crate::error::{Error, Result};

pub const MAIN_BENIGN_TEST: usize = 999;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub name: String,
    pub train: Vec<String>,
    pub test: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub description: String,
}

impl SplitSpec {
    /// Checks disjointness and that every id exists in `corpus`.
    pub fn validate(&self, corpus: &Corpus) -> Result<()> {
        let train: BTreeSet<&str> = self.train.iter().map(String::as_str).collect();
        if let Some(id) = self.test.iter().find(|id| train.contains(id.as_str())) {
            return Err(Error::invalid(format!("split `{}`: `{id}` is in both train and test", self.name)));
        }
        if let Some(id) = self.train.iter().chain(&self.test).find(|id| corpus.get(id).is_none()) {
            return Err(Error::invalid(format!("split `{}`: unknown document `{id}`", self.name)));
        }
        Ok(())
    }

    pub fn manifest(&self, corpus: &Corpus) -> SplitManifest {
        let count = |ids: &[String]| {
            let mut m: BTreeMap<Label, usize> = BTreeMap::new();
            for id in ids {
                if let Some(d) = corpus.get(id) {
                    *m.entry(d.label).or_default() += 1;
                }
            }
            m
        };
        let digest = |ids: &[String]| sha256_parts(ids.iter().map(String::as_bytes));
        SplitManifest {
            name: self.name.clone(),
            seed: self.seed,
            train_size: self.train.len(),
            test_size: self.test.len(),
            train_labels: count(&self.train),
            test_labels: count(&self.test),
            train_digest: digest(&self.train),
            test_digest: digest(&self.test),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub train_size: usize,
    pub test_size: usize,
    pub train_labels: BTreeMap<Label, usize>,
    pub test_labels: BTreeMap<Label, usize>,
    pub train_digest: String,
    pub test_digest: String,
}

/// Splits `n` across groups in proportion to `sizes` by largest remainder.
/// Equal remainders favor the earlier group.
pub fn apportion(n: usize, sizes: &[usize]) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let mut out: Vec<usize> = sizes.iter().map(|&s| n * s / total).collect();
    let mut rem: Vec<(usize, usize)> = sizes.iter().enumerate().map(|(i, &s)| ((n * s) % total, i)).collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = n - out.iter().sum::<usize>();
    for &(_, i) in rem.iter().take(short) {
        out[i] += 1;
    }
    out
}

fn ids_where(corpus: &Corpus, f: impl Fn(&crate::corpus::Document) -> bool) -> Vec<String> {
    corpus.documents().iter().filter(|d| f(d)).map(|d| d.id.clone()).collect()
}

/// Covariate-shift split: every spear-phishing email plus `n_benign`
/// benign emails (apportioned across benign sources, then sampled) form
/// the test set; the remaining benign emails and all traditional phishing
/// form the training set.
pub fn main_split_with(corpus: &Corpus, n_benign: usize, seed: u64) -> Result<SplitSpec> {
    let spear = ids_where(corpus, |d| d.label == Label::SpearPhishing);
    let phishing = ids_where(corpus, |d| d.label == Label::Phishing);
    if spear.is_empty() || phishing.is_empty() {
        return Err(Error::invalid("main split needs spear_phishing, phishing and ham documents"));
    }
    let mut by_source: BTreeMap<Source, Vec<String>> = BTreeMap::new();
    for d in corpus.documents().iter().filter(|d| d.label == Label::Ham) {
        by_source.entry(d.source).or_default().push(d.id.clone());
    }
    let benign_total: usize = by_source.values().map(Vec::len).sum();
    if benign_total < n_benign || benign_total == 0 {
        return Err(Error::invalid(format!(
            "main split needs {n_benign} benign test emails but the corpus has {benign_total}"
        )));
    }
    let sizes: Vec<usize> = by_source.values().map(Vec::len).collect();
    let quotas = apportion(n_benign, &sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: BTreeSet<String> = BTreeSet::new();
    for (ids, &q) in by_source.values().zip(&quotas) {
        let mut pool = ids.clone();
        pool.shuffle(&mut rng);
        chosen.extend(pool.into_iter().take(q));
    }
    let test: Vec<String> = corpus
        .documents()
        .iter()
        .filter(|d| d.label == Label::SpearPhishing || chosen.contains(&d.id))
        .map(|d| d.id.clone())
        .collect();
    let train: Vec<String> = corpus
        .documents()
        .iter()
        .filter(|d| (d.label == Label::Ham && !chosen.contains(&d.id)) || d.label == Label::Phishing)
        .map(|d| d.id.clone())
        .collect();
    let split = SplitSpec {
        name: "main".into(),
        train,
        test,
        seed: Some(seed),
        description: format!(
            "test: {} spear_phishing + {n_benign} benign sampled by source; train: remaining benign + phishing",
            spear.len()
        ),
    };
    split.validate(corpus)?;
    Ok(split)
}

pub fn main_split(corpus: &Corpus, seed: u64) -> Result<SplitSpec> {
    main_split_with(corpus, MAIN_BENIGN_TEST, seed)
}

/// Stratified k-fold over (label, source) strata of non-spear emails.
/// Spear-phishing emails join every test fold and never train.
pub fn crossval_holdout(corpus: &Corpus, folds: usize, seed: u64) -> Result<Vec<SplitSpec>> {
    if folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    let spear = ids_where(corpus, |d| d.label == Label::SpearPhishing);
    let mut strata: BTreeMap<(Label, Source), Vec<String>> = BTreeMap::new();
    for d in corpus.documents() {
        if d.medium == Medium::Email && d.label != Label::SpearPhishing {
            strata.entry((d.label, d.source)).or_default().push(d.id.clone());
        }
    }
    if strata.is_empty() {
        return Err(Error::invalid("cross-validation needs non-spear email documents"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of: BTreeMap<String, usize> = BTreeMap::new();
    let mut offset = 0;
    for ((label, source), ids) in &strata {
        if ids.len() < folds {
            return Err(Error::invalid(format!(
                "stratum {label}/{source} has {} documents, fewer than {folds} folds",
                ids.len()
            )));
        }
        let mut pool = ids.clone();
        pool.shuffle(&mut rng);
        for (i, id) in pool.into_iter().enumerate() {
            fold_of.insert(id, (i + offset) % folds);
        }
        offset = (offset + ids.len()) % folds;
    }
    let splits = (0..folds)
        .map(|f| {
            let mut test = Vec::new();
            let mut train = Vec::new();
            for d in corpus.documents() {
                if d.label == Label::SpearPhishing {
                    test.push(d.id.clone());
                } else if let Some(&k) = fold_of.get(&d.id) {
                    if k == f {
                        test.push(d.id.clone());
                    } else {
                        train.push(d.id.clone());
                    }
                }
            }
            SplitSpec {
                name: format!("crossval-{}", f + 1),
                train,
                test,
                seed: Some(seed),
                description: format!("fold {} of {folds}; {} spear documents in every test fold", f + 1, spear.len()),
            }
        })
        .collect::<Vec<_>>();
    for s in &splits {
        s.validate(corpus)?;
    }
    Ok(splits)
}

/// Train on every email, test on every SMS.
pub fn smishing_split(corpus: &Corpus) -> Result<SplitSpec> {
    let train = ids_where(corpus, |d| d.medium == Medium::Email);
    let test = ids_where(corpus, |d| d.medium == Medium::Sms);
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("smishing split needs both email and sms documents"));
    }
    Ok(SplitSpec {
        name: "smishing".into(),
        train,
        test,
        seed: None,
        description: "train: all email; test: all sms".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn fixture(spear: usize, enron: usize, hard: usize, phish: usize) -> Corpus {
        let mut docs = Vec::new();
        let mut push = |n: usize, label: Label, source: Source, tag: &str| {
            for i in 0..n {
                docs.push(Document::new(format!("{tag}{i}"), format!("{tag} {i}"), label, source).unwrap());
            }
        };
        push(spear, Label::SpearPhishing, Source::GeneratedSpear, "s");
        push(enron, Label::Ham, Source::Enron, "e");
        push(hard, Label::Ham, Source::SpamassassinHardHam, "h");
        push(phish, Label::Phishing, Source::PhishingArchive, "p");
        Corpus::new(docs).unwrap()
    }

    #[test]
    fn apportion_largest_remainder() {
        assert_eq!(apportion(30, &[90, 30]), vec![23, 7]);
        assert_eq!(apportion(10, &[1, 1, 1]), vec![4, 3, 3]);
        assert_eq!(apportion(0, &[5, 5]), vec![0, 0]);
    }

    #[test]
    fn main_split_counts_and_proportions() {
        let c = fixture(40, 90, 30, 50);
        let s = main_split_with(&c, 30, 1).unwrap();
        assert_eq!(s.test.len(), 70);
        assert_eq!(s.train.len(), 90 + 30 - 30 + 50);
        let enron_test = s.test.iter().filter(|id| id.starts_with('e')).count() as f64;
        assert!((enron_test - 30.0 * 90.0 / 120.0).abs() <= 1.0);
        assert!(!s.train.iter().any(|id| id.starts_with('s')));
        assert_eq!(s, main_split_with(&c, 30, 1).unwrap());
        assert_ne!(s.test, main_split_with(&c, 30, 2).unwrap().test);
    }

    #[test]
    fn main_split_needs_enough_benign() {
        assert!(main_split_with(&fixture(2, 3, 3, 2), 7, 0).is_err());
        assert!(main_split(&fixture(2, 3, 3, 2), 0).is_err());
    }

    #[test]
    fn crossval_partitions_non_spear() {
        let c = fixture(7, 23, 11, 17);
        let folds = crossval_holdout(&c, 5, 3).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = BTreeSet::new();
        for f in &folds {
            assert_eq!(f.test.iter().filter(|id| id.starts_with('s')).count(), 7);
            assert!(!f.train.iter().any(|id| id.starts_with('s')));
            for id in f.test.iter().filter(|id| !id.starts_with('s')) {
                assert!(seen.insert(id.clone()), "{id} in two folds");
            }
            for (tag, total) in [('e', 23.0), ('h', 11.0), ('p', 17.0)] {
                let n = f.test.iter().filter(|id| id.starts_with(tag)).count() as f64;
                assert!((n - total / 5.0).abs() <= 1.0);
            }
        }
        assert_eq!(seen.len(), 23 + 11 + 17);
    }

    #[test]
    fn crossval_small_stratum() {
        assert!(crossval_holdout(&fixture(1, 3, 10, 10), 5, 0).is_err());
    }

    #[test]
    fn smishing_partition() {
        let mut docs = vec![Document::new("e", "hello", Label::Ham, Source::Enron).unwrap()];
        assert!(smishing_split(&Corpus::new(docs.clone()).unwrap()).is_err());
        docs.push(Document::new("m", "win", Label::Smishing, Source::SmishCorpus).unwrap());
        let s = smishing_split(&Corpus::new(docs).unwrap()).unwrap();
        assert_eq!((s.train, s.test), (vec!["e".to_string()], vec!["m".to_string()]));
    }
}
