use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use super::metrics::{compute_metrics_scored, Metrics};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    F1,
    Gmean,
}

impl Objective {
    pub fn of(self, m: &Metrics) -> f64 {
        match self {
            Objective::F1 => m.f1,
            Objective::Gmean => m.gmean,
        }
    }
}

/// Decision rule applied to classifier scores. Serialized in its string
/// form (`0.5`, `optimize:f1`, `optimize:gmean`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ThresholdRule {
    Fixed(f64),
    Optimize(Objective),
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::Fixed(0.5)
    }
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdRule::Fixed(t) => write!(f, "{t}"),
            ThresholdRule::Optimize(Objective::F1) => f.write_str("optimize:f1"),
            ThresholdRule::Optimize(Objective::Gmean) => f.write_str("optimize:gmean"),
        }
    }
}

impl From<ThresholdRule> for String {
    fn from(r: ThresholdRule) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for ThresholdRule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for ThresholdRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimize:f1" => Ok(ThresholdRule::Optimize(Objective::F1)),
            "optimize:gmean" => Ok(ThresholdRule::Optimize(Objective::Gmean)),
            _ => match s.parse::<f64>() {
                Ok(t) if (0.0..=1.0).contains(&t) => Ok(ThresholdRule::Fixed(t)),
                _ => Err(Error::invalid(format!(
                    "threshold `{s}`: expected a number in [0, 1], optimize:f1 or optimize:gmean"
                ))),
            },
        }
    }
}

/// Candidate thresholds: the lowest unique score, then the midpoint of each
/// pair of consecutive unique scores.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = scores.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    let mut out = Vec::with_capacity(u.len());
    if let Some(&first) = u.first() {
        out.push(first);
    }
    out.extend(u.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    out
}

/// Threshold maximizing `objective`; ties keep the lower threshold.
pub fn optimize_threshold(scores: &[f64], labels: &[u8], objective: Objective) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    if !labels.iter().any(|&y| y != 0) || !labels.iter().any(|&y| y == 0) {
        return Err(Error::invalid("threshold optimization needs both classes"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("non-finite score"));
    }
    let mut best = (f64::NEG_INFINITY, 0.5);
    for t in candidate_thresholds(scores) {
        let v = objective.of(&compute_metrics_scored(labels, scores, t)?);
        if v > best.0 {
            best = (v, t);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_scores_pick_the_middle() {
        let s = [0.1, 0.2, 0.8, 0.9];
        let y = [0, 0, 1, 1];
        let t = optimize_threshold(&s, &y, Objective::F1).unwrap();
        assert!((t - 0.5).abs() < 1e-15);
        assert_eq!(compute_metrics_scored(&y, &s, t).unwrap().f1, 1.0);
    }

    #[test]
    fn all_equal_scores_take_lowest_candidate() {
        let t = optimize_threshold(&[0.3; 4], &[0, 1, 0, 1], Objective::Gmean).unwrap();
        assert_eq!(t, 0.3);
    }

    #[test]
    fn never_worse_than_default() {
        let s = [0.05, 0.4, 0.45, 0.3, 0.6, 0.35];
        let y = [0, 1, 1, 0, 1, 0];
        for obj in [Objective::F1, Objective::Gmean] {
            let t = optimize_threshold(&s, &y, obj).unwrap();
            let at = obj.of(&compute_metrics_scored(&y, &s, t).unwrap());
            let dflt = obj.of(&compute_metrics_scored(&y, &s, 0.5).unwrap());
            assert!(at >= dflt);
        }
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(optimize_threshold(&[0.1, 0.2], &[1, 1], Objective::F1).is_err());
    }

    #[test]
    fn rule_parsing() {
        assert_eq!("0.5".parse::<ThresholdRule>().unwrap(), ThresholdRule::Fixed(0.5));
        assert_eq!("optimize:f1".parse::<ThresholdRule>().unwrap(), ThresholdRule::Optimize(Objective::F1));
        assert!("optimize:auc".parse::<ThresholdRule>().is_err());
        assert!("1.5".parse::<ThresholdRule>().is_err());
        let json = serde_json::to_string(&ThresholdRule::Fixed(0.35)).unwrap();
        assert_eq!(json, "\"0.35\"");
        assert_eq!(serde_json::from_str::<ThresholdRule>(&json).unwrap(), ThresholdRule::Fixed(0.35));
    }
}
