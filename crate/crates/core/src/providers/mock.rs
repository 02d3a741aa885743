//! Deterministic offline judge.
//!
//! A mock judge scores `(document text, question id)` as
//! `logistic(sum of matched rule weights + bias + noise)`, where the noise
//! term is a standard normal drawn from a hash of the seed, question and
//! text. Given its configuration it is a pure function.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CompletionRequest, Transport, TransportError};
use crate::error::{Error, Result};
use crate::questions::QuestionBank;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub name: String,
    /// Case-insensitive regular expression matched against the document text.
    pub pattern: String,
    pub weight: f64,
}

impl MockRule {
    pub fn new(name: &str, pattern: &str, weight: f64) -> Self {
        MockRule {
            name: name.into(),
            pattern: pattern.into(),
            weight,
        }
    }
}

/// Keyword → weight rules per question id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockRuleset {
    pub questions: BTreeMap<String, Vec<MockRule>>,
}

impl MockRuleset {
    pub fn with(mut self, question: &str, rules: Vec<MockRule>) -> Self {
        self.questions.insert(question.to_string(), rules);
        self
    }

    /// Rules for the default question bank, written as a careful reader
    /// would judge each question.
    pub fn default_rules() -> Self {
        let r = MockRule::new;
        MockRuleset::default()
            .with(
                "urgency",
                vec![
                    r("urgent", r"\burgent(ly)?\b", 2.5),
                    r("immediately", r"\b(immediately|right away|without delay)\b", 2.0),
                    r("asap", r"\b(asap|as soon as possible)\b", 1.5),
                    r("deadline-hours", r"\bwithin (\d+|twenty[- ]four|24|48) ?(hours|hrs|h)\b", 2.0),
                    r("today", r"\b(today|tonight|end of (the )?day|eod|this afternoon|by noon)\b", 1.2),
                    r("clock-time", r"\bbefore \d{1,2}(:\d\d)? ?(am|pm)\b", 1.2),
                    r("same-day-deadline", r"\b(before|by) (noon|\d{1,2}(:\d\d)? ?(am|pm)|end of (the )?day)\b", 1.6),
                    r("act-now", r"\b(act|respond|reply|verify|confirm) now\b", 2.0),
                    r("expiry", r"\b(expires?|expiring|deadline|last chance|final notice|time[- ]sensitive)\b", 1.3),
                    r("limited-time", r"\blimited[- ]time\b", 0.8),
                ],
            )
            .with(
                "flattery",
                vec![
                    r("praise", r"\b(outstanding|excellent|impressive|brilliant|fantastic|exceptional|stellar)\b", 1.6),
                    r("great-work", r"\b(great|amazing|superb|incredible) (work|job|presentation|insight)", 1.6),
                    r("trusted", r"\b(you are|you're) (one of our )?(most )?(valued|trusted|valuable)\b", 1.4),
                    r("selected", r"\b(you('ve| have)? been (selected|chosen)|congratulations)\b", 1.8),
                    r("only-you", r"\b(only you|i knew i could count on you|you're the best person)\b", 1.8),
                    r("appreciate", r"\b(really|truly) appreciate\b", 0.7),
                ],
            )
            .with(
                "suspicious_link",
                vec![
                    r("short-url", r"https?://(www\.)?(bit\.ly|tinyurl\.com|goo\.gl|t\.co|ow\.ly|is\.gd|cutt\.ly|rb\.gy)/", 2.5),
                    r("ip-host", r"https?://\d{1,3}(\.\d{1,3}){3}", 2.5),
                    r(
                        "lookalike-host",
                        r"https?://[a-z0-9.-]*[a-z0-9]-(secure|login|verify|verification|portal|account|update|support|signin|auth|docs|redelivery|billing)\b[a-z0-9.-]*",
                        2.4,
                    ),
                    r(
                        "lookalike-prefix",
                        r"https?://(www\.)?(secure|login|verify|account|signin|auth|update)[-.][a-z0-9-]+\.[a-z]",
                        2.2,
                    ),
                    r("odd-tld", r"https?://[^\s/]+\.(info|xyz|top|click|ru|tk|cn|biz|live)\b", 1.6),
                    r("credential-path", r"https?://\S+/(login|signin|sign|verify|auth|validate|unlock|review|documents?)\b", 1.4),
                    r("click-here", r"\bclick (here|the link|below|this link)\b", 1.0),
                ],
            )
            .with(
                "marketing",
                vec![
                    r("unsubscribe", r"\b(unsubscribe|opt[- ]out|manage (your )?preferences)\b", 2.5),
                    r("discount", r"(\d+\s?% off|\bdiscount|\bsale\b|\bcoupon|\bpromo(tion)?\b|free shipping)", 2.0),
                    r("offer", r"\b(special offer|exclusive offer|deal of|new arrivals|shop now|order now|buy now)\b", 1.8),
                    r("newsletter", r"\b(newsletter|weekly digest|this week's|subscribers?)\b", 1.6),
                    r("prize", r"\b(you('ve| have)? won|prize|reward points|gift card|free gift)\b", 1.0),
                ],
            )
            .with(
                "personal_details",
                vec![
                    r("named-greeting", r"(?m)^(hi|hello|hey|dear) [a-z]+[,!]", 1.4),
                    r(
                        "generic-greeting",
                        r"\b(dear|hello) (valued |beloved )?(customer|user|member|client|sir|madam|account holder|friend)\b",
                        -1.8,
                    ),
                    r("shared-history", r"\b(as (we )?discussed|following up on|per our (call|conversation|meeting)|as promised)\b", 1.3),
                    r("insider-detail", r"\b(last (monday|tuesday|wednesday|thursday|friday|week)|your (team|project|presentation|manager|colleague|quarterly))\b", 1.1),
                    r("named-third-party", r"\bwith [A-Z][a-z]+ (from|in) ", 0.9),
                    r("role-detail", r"\b(your role as|in your position as|as (the )?(head|director|lead|manager) of)\b", 1.2),
                ],
            )
            .with(
                "threats",
                vec![
                    r("suspension", r"\b(suspend(ed)?|suspension|deactivat\w*|terminat\w*|locked|closed|frozen|blocked)\b", 2.2),
                    r("loss", r"\bwill be (deleted|disabled|lost|removed|cancell?ed|charged)\b", 2.0),
                    r("failure-to", r"\b(failure to|if you (do not|don't|fail to))\b", 1.8),
                    r("legal", r"\b(legal action|penalt(y|ies)|fine[ds]?|prosecut\w*|law enforcement)\b", 2.0),
                    r("escalation", r"\b(escalat\w*|consequences?|held responsible|delay(ed)? (the )?(payment|payroll|closing)|miss(ing)? the (deadline|filing))\b", 1.5),
                    r("delay-consequence", r"\b(payment|payroll|closing|deal|shipment)\b.{0,20}\b(will be|gets?) (delayed|pushed|held|frozen)", 1.6),
                ],
            )
            .with(
                "account_update",
                vec![
                    r(
                        "update-account",
                        r"\b(verify|update|confirm|validate|re-?enter|reactivate|restore)\s+(your\s+)?(account|information|details|password|credentials|payment|billing|identity|login|banking)",
                        2.4,
                    ),
                    r(
                        "sign-document",
                        r"\b(sign|signing|signature|e-?sign|countersign)\b.{0,60}\b(document|agreement|contract|form|nda|amendment|invoice|order|deck|report|plan|statement)",
                        2.0,
                    ),
                    r(
                        "document-signed",
                        r"\b(document|agreement|contract|nda|amendment|order|report|plan|deck|statement of work)\b.{0,20}\bsigned\b",
                        2.0,
                    ),
                    r("via-link", r"\b(via|through|using|at) (the|this|our|my) (link|portal|secure link)\b", 1.4),
                    r("log-in", r"\b(log ?in|sign ?in) (to|at|using)\b", 1.2),
                ],
            )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MockConfig {
    /// `None` uses [`MockRuleset::default_rules`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ruleset: Option<MockRuleset>,
    #[serde(default)]
    pub bias: f64,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of the logit noise term.
    #[serde(default)]
    pub noise: f64,
    /// Additive logit offsets for individual questions.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub question_bias: BTreeMap<String, f64>,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            ruleset: None,
            bias: 0.0,
            seed: 0,
            noise: 0.0,
            question_bias: BTreeMap::new(),
        }
    }
}

struct CompiledRule {
    name: String,
    regex: Regex,
    weight: f64,
}

pub struct MockJudge {
    rules: HashMap<String, Vec<CompiledRule>>,
    config: MockConfig,
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl MockJudge {
    pub fn new(config: MockConfig) -> Result<Self> {
        let ruleset = config
            .ruleset
            .clone()
            .unwrap_or_else(MockRuleset::default_rules);
        let mut rules = HashMap::new();
        for (qid, list) in ruleset.questions {
            let compiled = list
                .into_iter()
                .map(|r| {
                    let regex = RegexBuilder::new(&r.pattern)
                        .case_insensitive(true)
                        .build()
                        .map_err(|e| Error::Config(format!("mock rule `{}`: {e}", r.name)))?;
                    Ok(CompiledRule {
                        name: r.name,
                        regex,
                        weight: r.weight,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rules.insert(qid, compiled);
        }
        Ok(MockJudge { rules, config })
    }

    pub fn covers(&self, bank: &QuestionBank) -> Result<()> {
        match bank
            .active()
            .into_iter()
            .find(|q| !self.rules.contains_key(&q.id))
        {
            Some(q) => Err(Error::Config(format!(
                "question id `{}` missing from mock ruleset",
                q.id
            ))),
            None => Ok(()),
        }
    }

    fn noise(&self, text: &str, question_id: &str) -> f64 {
        if self.config.noise == 0.0 {
            return 0.0;
        }
        let mut h = Sha256::new();
        h.update(self.config.seed.to_le_bytes());
        h.update(question_id.as_bytes());
        h.update([0x1f]);
        h.update(text.as_bytes());
        let seed: [u8; 32] = h.finalize().into();
        let z: f64 = StandardNormal.sample(&mut ChaCha8Rng::from_seed(seed));
        self.config.noise * z
    }

    /// Probability and the names of matched rules.
    pub fn score(&self, text: &str, question_id: &str) -> Result<(f64, Vec<String>)> {
        let rules = self.rules.get(question_id).ok_or_else(|| {
            Error::Config(format!(
                "question id `{question_id}` missing from mock ruleset"
            ))
        })?;
        let mut logit = self.config.bias
            + self
                .config
                .question_bias
                .get(question_id)
                .copied()
                .unwrap_or(0.0);
        let mut matched = Vec::new();
        for rule in rules {
            if rule.regex.is_match(text) {
                logit += rule.weight;
                matched.push(rule.name.clone());
            }
        }
        logit += self.noise(text, question_id);
        Ok((logistic(logit), matched))
    }
}

impl Transport for MockJudge {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, TransportError> {
        let (p, matched) = self
            .score(&request.document.text, &request.question.id)
            .map_err(|e| TransportError::Rejected(e.to_string()))?;
        let reasoning = if matched.is_empty() {
            "No relevant cues found in the message.".to_string()
        } else {
            format!("Cues found: {}.", matched.join(", "))
        };
        Ok(serde_json::json!({ "reasoning": reasoning, "probability": p }).to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::questions::default_question_bank;

    fn link_only(bias: f64) -> MockJudge {
        MockJudge::new(MockConfig {
            ruleset: Some(MockRuleset::default().with(
                "suspicious_link",
                vec![MockRule::new("short-url", r"\bbit\.ly\b", 2.0)],
            )),
            bias,
            ..MockConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn no_signal_is_logistic_of_bias() {
        let (p, m) = link_only(0.0)
            .score("hello there", "suspicious_link")
            .unwrap();
        assert_eq!(p, 0.5);
        assert!(m.is_empty());
    }

    #[test]
    fn short_url_rule_with_negative_bias() {
        let (p, m) = link_only(-1.0)
            .score("click this bit.ly link now", "suspicious_link")
            .unwrap();
        assert!((p - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        assert!((p - 0.731).abs() < 1e-3);
        assert_eq!(m, ["short-url"]);
    }

    #[test]
    fn different_biases_shift_probabilities_not_order() {
        let bank = default_question_bank();
        let text = "URGENT: verify your account at http://bit.ly/x within 24 hours or it will be suspended";
        let scores = |bias| {
            let j = MockJudge::new(MockConfig {
                bias,
                ..MockConfig::default()
            })
            .unwrap();
            bank.active()
                .iter()
                .map(|q| j.score(text, &q.id).unwrap().0)
                .collect::<Vec<_>>()
        };
        let a = scores(-2.0);
        let b = scores(-1.0);
        assert_ne!(a, b);
        let rank = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]).then(i.cmp(&j)));
            idx
        };
        assert_eq!(rank(&a), rank(&b));
    }

    #[test]
    fn missing_question_is_an_error() {
        let j = link_only(0.0);
        assert!(j.score("x", "urgency").is_err());
        assert!(j.covers(&default_question_bank()).is_err());
        let full = MockJudge::new(MockConfig::default()).unwrap();
        full.covers(&default_question_bank()).unwrap();
    }

    #[test]
    fn noise_is_seeded() {
        let mk = |seed| {
            MockJudge::new(MockConfig {
                seed,
                noise: 1.0,
                ..MockConfig::default()
            })
            .unwrap()
        };
        let a = mk(1).score("same text", "urgency").unwrap().0;
        assert_eq!(a, mk(1).score("same text", "urgency").unwrap().0);
        assert_ne!(a, mk(2).score("same text", "urgency").unwrap().0);
    }

    #[test]
    fn urgent_text_scores_high_with_default_rules() {
        let j = MockJudge::new(MockConfig {
            bias: -2.0,
            ..MockConfig::default()
        })
        .unwrap();
        let (p, _) = j.score("URGENT: act within 24 hours", "urgency").unwrap();
        assert!(p >= 0.8, "{p}");
    }
}
