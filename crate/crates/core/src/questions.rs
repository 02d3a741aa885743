//! Judge question banks and chain-of-thought prompt rendering.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::digest::sha256_parts;
use crate::error::{Error, Result};

/// Persuasion principle a question probes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Principle {
    Scarcity,
    Likeability,
    Authority,
    SocialProof,
    None,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSpec {
    pub id: String,
    pub text: String,
    pub principle: Principle,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

impl QuestionSpec {
    pub fn new(id: &str, text: &str, principle: Principle) -> Self {
        QuestionSpec {
            id: id.to_string(),
            text: text.to_string(),
            principle,
            enabled: true,
        }
    }
}

pub const DEFAULT_TEMPLATE_ID: &str = "cot-json-v1";

/// Ordered question list. Only enabled questions take part in
/// vectorization; order defines vector column order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuestionBank {
    questions: Vec<QuestionSpec>,
    template_id: String,
}

impl QuestionBank {
    pub fn new(questions: Vec<QuestionSpec>, template_id: impl Into<String>) -> Result<Self> {
        let mut ids = HashSet::new();
        for q in &questions {
            if q.id.trim().is_empty() {
                return Err(Error::Config("question with empty id".into()));
            }
            if q.text.trim().is_empty() {
                return Err(Error::Config(format!("question `{}` has empty text", q.id)));
            }
            if !ids.insert(q.id.as_str()) {
                return Err(Error::Config(format!("duplicate question id `{}`", q.id)));
            }
        }
        Ok(QuestionBank {
            questions,
            template_id: template_id.into(),
        })
    }

    /// Reads a JSON array of `{id, text, principle, enabled}`.
    pub fn load(path: impl AsRef<Path>, template_id: &str) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let questions: Vec<QuestionSpec> = serde_json::from_str(&raw)?;
        QuestionBank::new(questions, template_id)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(&self.questions)?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn all(&self) -> &[QuestionSpec] {
        &self.questions
    }

    /// Enabled questions in bank order.
    pub fn active(&self) -> Vec<&QuestionSpec> {
        self.questions.iter().filter(|q| q.enabled).collect()
    }

    pub fn template_id(&self) -> &str {
        &self.template_id
    }

    pub fn get(&self, id: &str) -> Option<&QuestionSpec> {
        self.questions.iter().find(|q| q.id == id)
    }

    /// Copy with question `id` disabled.
    pub fn without(&self, id: &str) -> Result<Self> {
        let mut bank = self.clone();
        let q = bank
            .questions
            .iter_mut()
            .find(|q| q.id == id)
            .ok_or_else(|| Error::invalid(format!("no question `{id}` in bank")))?;
        q.enabled = false;
        Ok(bank)
    }

    pub fn digest(&self) -> String {
        bank_digest(self)
    }
}

/// Order-sensitive content hash over the template id and the enabled
/// questions' ids and texts.
pub fn bank_digest(bank: &QuestionBank) -> String {
    let mut parts: Vec<&str> = vec!["question-bank/1", bank.template_id.as_str()];
    for q in bank.active() {
        parts.push(&q.id);
        parts.push(&q.text);
    }
    sha256_parts(parts)
}

pub fn default_question_bank() -> QuestionBank {
    use Principle::*;
    let questions = vec![
        QuestionSpec::new("urgency", "Does this email convey a sense of urgency?", Scarcity),
        QuestionSpec::new(
            "flattery",
            "Is there a significant amount of flattery evident in the email?",
            Likeability,
        ),
        QuestionSpec::new(
            "suspicious_link",
            "Is there a link in this email that appears to be suspicious?",
            None,
        ),
        QuestionSpec::new("marketing", "Does this email look like a marketing email?", None),
        QuestionSpec::new(
            "personal_details",
            "Does the email address the recipient by name and with suspiciously specific details?",
            None,
        ),
        QuestionSpec::new(
            "threats",
            "Are there threats of consequences if the recipient does not act immediately?",
            Authority,
        ),
        QuestionSpec::new(
            "account_update",
            "Does the email ask the recipient to update an account information or sign a document through a link?",
            None,
        ),
    ];
    QuestionBank::new(questions, DEFAULT_TEMPLATE_ID).expect("default bank is valid")
}

const QUESTION_SLOT: &str = "{question}";
const DOCUMENT_SLOT: &str = "{document_text}";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub body: String,
    pub output_instruction: String,
}

enum Segment<'a> {
    Literal(&'a str),
    Question,
    Document,
}

impl PromptTemplate {
    /// Document first, then the question, then the output contract.
    pub fn default_template() -> Self {
        PromptTemplate {
            id: DEFAULT_TEMPLATE_ID.to_string(),
            body: concat!(
                "You are a security analyst reviewing a message for social engineering tactics.\n\n",
                "Message:\n\"\"\"\n{document_text}\n\"\"\"\n\n",
                "Question: {question}\n\n",
                "Think step-by-step: point to the parts of the message that bear on the question, ",
                "weigh them, and only then decide how strongly the answer is yes."
            )
            .to_string(),
            output_instruction: concat!(
                "Finish with a single JSON object and nothing after it, of the form ",
                "{\"reasoning\": \"<your step-by-step reasoning>\", \"probability\": <number between 0 and 1>}, ",
                "where probability is the likelihood that the answer to the question is yes."
            )
            .to_string(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let t: PromptTemplate = serde_json::from_str(&raw)?;
        t.validate()?;
        Ok(t)
    }

    /// Both placeholders must appear exactly once in the body.
    pub fn validate(&self) -> Result<()> {
        self.segments().map(|_| ())
    }

    fn segments(&self) -> Result<Vec<Segment<'_>>> {
        if self.body.trim().is_empty() {
            return Err(Error::Template(format!(
                "template `{}` has an empty body",
                self.id
            )));
        }
        for slot in [QUESTION_SLOT, DOCUMENT_SLOT] {
            match self.body.matches(slot).count() {
                0 => return Err(Error::Template(format!("placeholder {slot} missing"))),
                1 => {}
                n => {
                    return Err(Error::Template(format!(
                        "placeholder {slot} appears {n} times"
                    )))
                }
            }
        }
        let mut out = Vec::new();
        let mut rest = self.body.as_str();
        loop {
            let q = rest.find(QUESTION_SLOT);
            let d = rest.find(DOCUMENT_SLOT);
            let (at, len, seg) = match (q, d) {
                (Some(q), Some(d)) if q < d => (q, QUESTION_SLOT.len(), Segment::Question),
                (_, Some(d)) => (d, DOCUMENT_SLOT.len(), Segment::Document),
                (Some(q), None) => (q, QUESTION_SLOT.len(), Segment::Question),
                (None, None) => {
                    out.push(Segment::Literal(rest));
                    break;
                }
            };
            out.push(Segment::Literal(&rest[..at]));
            out.push(seg);
            rest = &rest[at + len..];
        }
        Ok(out)
    }
}

/// Renders the judge prompt in one pass, so placeholder-like text inside
/// the document is never expanded.
pub fn render_prompt(
    question: &QuestionSpec,
    doc: &Document,
    template: &PromptTemplate,
) -> Result<String> {
    if doc.text.trim().is_empty() {
        return Err(Error::invalid(format!(
            "document `{}` has empty text",
            doc.id
        )));
    }
    let mut out = String::with_capacity(template.body.len() + doc.text.len() + 256);
    for seg in template.segments()? {
        match seg {
            Segment::Literal(s) => out.push_str(s),
            Segment::Question => out.push_str(&question.text),
            Segment::Document => out.push_str(&doc.text),
        }
    }
    if !template.output_instruction.trim().is_empty() {
        out.push_str("\n\n");
        out.push_str(&template.output_instruction);
    }
    Ok(out)
}
