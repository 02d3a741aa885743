//! Split construction and experiment protocols: covariate-shift test,
//! cross-validation holdout, cross-medium generalization, provider and
//! question ablations, and ensemble disagreement analysis.

pub mod run;
pub mod splits;

use serde::{Deserialize, Serialize};

pub use run::{run_experiment, ExperimentConfig, ExperimentKind, ExperimentReport};
pub use splits::{apportion, crossval_holdout, main_split, main_split_with, smishing_split, SplitManifest, SplitSpec, MAIN_BENIGN_TEST};

use crate::baselines::ScoredRun;
use crate::error::{Error, Result};
use crate::learn::{self, binary_label, ClassifierConfig, Metrics, ThresholdRule};
use crate::par;
use crate::vectorize::VectorDataset;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub classifier: ClassifierConfig,
    pub threshold: ThresholdRule,
}

fn xy(dataset: &VectorDataset, ids: &[String]) -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
    let rows = dataset.subset(ids)?;
    Ok((
        rows.iter().map(|r| r.values.clone()).collect(),
        rows.iter().map(|r| binary_label(r.label)).collect(),
    ))
}

/// Trains on the split's training rows and scores its test rows.
pub fn evaluate_split(dataset: &VectorDataset, split: &SplitSpec, eval: &EvalConfig) -> Result<ScoredRun> {
    let (train_x, train_y) = xy(dataset, &split.train)?;
    let (test_x, test_y) = xy(dataset, &split.test)?;
    let model = eval.classifier.fit(&train_x, &train_y)?;
    let threshold = learn::resolve_threshold(eval.threshold, &eval.classifier, &train_x, &train_y)?;
    let scores = model.predict(&test_x)?;
    let metrics = learn::compute_metrics_scored(&test_y, &scores, threshold)?;
    Ok(ScoredRun {
        scores,
        threshold,
        metrics,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderAblationRow {
    pub providers: Vec<String>,
    pub threshold: f64,
    pub metrics: Metrics,
}

/// Non-empty provider subsets as position lists, by size then position.
pub fn provider_subsets(n: usize) -> Vec<Vec<usize>> {
    let mut subsets: Vec<Vec<usize>> = (1u64..(1u64 << n))
        .map(|mask| (0..n).filter(|&i| mask & (1 << i) != 0).collect())
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets
}

/// Retrains on every non-empty provider subset by restricting columns of
/// the existing dataset.
pub fn llm_ablation(dataset: &VectorDataset, split: &SplitSpec, eval: &EvalConfig) -> Result<Vec<ProviderAblationRow>> {
    let n = dataset.n_providers();
    if n == 0 {
        return Err(Error::invalid("provider ablation needs at least one provider"));
    }
    if n > 16 {
        return Err(Error::invalid(format!("{n} providers is too many subsets to enumerate")));
    }
    let all_q: Vec<usize> = (0..dataset.n_questions()).collect();
    par::map(&provider_subsets(n), |subset| {
        let restricted = dataset.select(&all_q, subset)?;
        let run = evaluate_split(&restricted, split, eval)?;
        Ok(ProviderAblationRow {
            providers: subset.iter().map(|&p| dataset.header().providers[p].clone()).collect(),
            threshold: run.threshold,
            metrics: run.metrics,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionAblationRow {
    pub question_id: String,
    pub f1: f64,
    pub f1_loss: f64,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionAblation {
    pub baseline: Metrics,
    pub rows: Vec<QuestionAblationRow>,
}

/// Leave-one-question-out: drop each question's columns, retrain, and
/// report the F1 lost against the full bank.
pub fn question_ablation(dataset: &VectorDataset, split: &SplitSpec, eval: &EvalConfig) -> Result<QuestionAblation> {
    if dataset.n_questions() < 2 {
        return Err(Error::invalid("question ablation needs at least two questions"));
    }
    let baseline = evaluate_split(dataset, split, eval)?.metrics;
    let rows = par::map(&dataset.header().questions, |q| {
        let reduced = dataset.drop_question(q)?;
        let m = evaluate_split(&reduced, split, eval)?.metrics;
        Ok(QuestionAblationRow {
            question_id: q.clone(),
            f1: m.f1,
            f1_loss: baseline.f1 - m.f1,
            metrics: m,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(QuestionAblation { baseline, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderAnswer {
    pub provider_id: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub doc_id: String,
    pub label: crate::corpus::Label,
    pub question_id: String,
    pub std: f64,
    pub answers: Vec<ProviderAnswer>,
}

/// Population standard deviation (divides by n).
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Ranks (document, question) cells by how much the providers disagree.
/// Imputed and failed cells are left out; zero-spread cells are never
/// reported. Ties keep dataset order.
pub fn disagreement_report(dataset: &VectorDataset, subset: Option<&[String]>, top_n: usize) -> Result<Vec<Finding>> {
    let l = dataset.n_providers();
    if l < 2 {
        return Err(Error::invalid("disagreement analysis needs at least two providers"));
    }
    let rows = match subset {
        Some(ids) => dataset.subset(ids)?,
        None => dataset.rows().iter().collect(),
    };
    let header = dataset.header();
    let mut findings: Vec<Finding> = Vec::new();
    for row in rows {
        for (qi, q) in header.questions.iter().enumerate() {
            let answers: Vec<ProviderAnswer> = (0..l)
                .map(|p| qi * l + p)
                .filter(|&c| row.cell_status[c].is_observed())
                .map(|c| ProviderAnswer {
                    provider_id: header.providers[c % l].clone(),
                    value: row.values[c],
                    reasoning: row.reasoning.get(c).filter(|r| !r.is_empty()).cloned(),
                })
                .collect();
            if answers.len() < 2 {
                continue;
            }
            let std = population_std(&answers.iter().map(|a| a.value).collect::<Vec<_>>());
            if std > 0.0 {
                findings.push(Finding {
                    doc_id: row.doc_id.clone(),
                    label: row.label,
                    question_id: q.clone(),
                    std,
                    answers,
                });
            }
        }
    }
    // Stable sort keeps dataset order among equal spreads.
    findings.sort_by(|a, b| b.std.total_cmp(&a.std));
    findings.truncate(top_n);
    Ok(findings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use crate::vectorize::{CellStatus, DatasetHeader, VectorRow};

    fn dataset(rows: Vec<(&str, Label, Vec<f64>)>, questions: &[&str], providers: &[&str]) -> VectorDataset {
        let header = DatasetHeader::prompted(
            questions.iter().map(|s| s.to_string()).collect(),
            providers.iter().map(|s| s.to_string()).collect(),
        );
        let rows = rows
            .into_iter()
            .map(|(id, label, values)| VectorRow {
                doc_id: id.into(),
                label,
                cell_status: vec![CellStatus::Answered; values.len()],
                values,
                reasoning: vec![],
            })
            .collect();
        VectorDataset::new(header, rows).unwrap()
    }

    #[test]
    fn std_of_three_answers() {
        let ds = dataset(vec![("d", Label::SpearPhishing, vec![0.0, 0.5, 0.8])], &["q"], &["a", "b", "c"]);
        let f = disagreement_report(&ds, None, 5).unwrap();
        assert_eq!(f.len(), 1);
        assert!((f[0].std - 0.3300).abs() < 1e-4);
        let mean: f64 = 1.3 / 3.0;
        let two_pass = ((0.0 - mean).powi(2) + (0.5 - mean).powi(2) + (0.8 - mean).powi(2)) / 3.0;
        assert!((f[0].std - two_pass.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_spread_excluded_and_imputed_skipped() {
        let mut ds = dataset(
            vec![("a", Label::Ham, vec![0.2, 0.2, 0.9, 0.1]), ("b", Label::Ham, vec![0.3, 0.3, 0.3, 0.3])],
            &["q1", "q2"],
            &["x", "y"],
        );
        let f = disagreement_report(&ds, None, 10).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!((f[0].doc_id.as_str(), f[0].question_id.as_str()), ("a", "q2"));
        let mut rows = ds.rows().to_vec();
        rows[0].cell_status[3] = CellStatus::Imputed;
        ds = VectorDataset::new(ds.header().clone(), rows).unwrap();
        assert!(disagreement_report(&ds, None, 10).unwrap().is_empty());
    }

    #[test]
    fn single_provider_rejected() {
        let ds = dataset(vec![("a", Label::Ham, vec![0.2])], &["q"], &["x"]);
        assert!(disagreement_report(&ds, None, 3).is_err());
    }

    #[test]
    fn subsets_ordered() {
        assert_eq!(
            provider_subsets(3),
            vec![vec![0], vec![1], vec![2], vec![0, 1], vec![0, 2], vec![1, 2], vec![0, 1, 2]]
        );
    }
}
