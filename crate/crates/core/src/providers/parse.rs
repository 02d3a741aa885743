//! Parsing of judge completions into a probability and reasoning.

use serde_json::Value;

use super::AnswerStatus;

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedAnswer {
    pub probability: Option<f64>,
    pub reasoning: String,
    pub status: AnswerStatus,
}

impl ParsedAnswer {
    fn failed(reasoning: &str) -> Self {
        ParsedAnswer {
            probability: None,
            reasoning: reasoning.to_string(),
            status: AnswerStatus::Failed,
        }
    }
}

/// Parses `{"reasoning": .., "probability": ..}` out of a completion, or
/// falls back to the last standalone number in the text. Numbers outside
/// [0, 1] fail; they are never clamped.
pub fn parse_structured_answer(raw: &str) -> ParsedAnswer {
    if let Some(obj) = find_json_object(raw) {
        if let Some(p) = obj.get("probability") {
            let reasoning = obj
                .get("reasoning")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string();
            let number = match p {
                Value::Number(n) => n.as_f64(),
                Value::String(s) => s.trim().parse::<f64>().ok(),
                _ => None,
            };
            return match number {
                Some(x) if (0.0..=1.0).contains(&x) => ParsedAnswer {
                    probability: Some(x),
                    reasoning,
                    status: AnswerStatus::Answered,
                },
                _ => ParsedAnswer::failed(&reasoning),
            };
        }
    }

    match last_number(raw) {
        Some(x) if (0.0..=1.0).contains(&x) => ParsedAnswer {
            probability: Some(x),
            reasoning: raw.to_string(),
            status: AnswerStatus::ParseFallback,
        },
        _ => ParsedAnswer::failed(raw),
    }
}

/// Pairs the last `}` with each `{` from the left until one parses.
fn find_json_object(raw: &str) -> Option<serde_json::Map<String, Value>> {
    let end = raw.rfind('}')?;
    let starts: Vec<usize> = raw[..end].match_indices('{').map(|(i, _)| i).collect();
    for &start in &starts {
        if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&raw[start..=end]) {
            return Some(map);
        }
    }
    None
}

fn last_number(raw: &str) -> Option<f64> {
    raw.split(|c: char| !(c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '+' | '%')))
        .filter_map(|tok| {
            let tok = tok.trim_end_matches('.');
            is_plain_number(tok)
                .then(|| tok.parse::<f64>().ok())
                .flatten()
        })
        .last()
}

fn is_plain_number(tok: &str) -> bool {
    let body = tok.strip_prefix(['-', '+']).unwrap_or(tok);
    if body.is_empty() || body.starts_with(['-', '+']) {
        return false;
    }
    let mut dots = 0;
    let mut digits = 0;
    for c in body.chars() {
        match c {
            '0'..='9' => digits += 1,
            '.' => dots += 1,
            _ => return false,
        }
    }
    digits > 0 && dots <= 1
}
