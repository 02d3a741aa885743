//! Judge providers: the transport abstraction, the offline mock, the HTTP
//! chat client, answer parsing, retry policy and the response cache.

mod cache;
mod http;
mod mock;
mod parse;

pub use cache::{CacheKey, ResponseCache};
pub use http::HttpChat;
pub use mock::{logistic, MockConfig, MockJudge, MockRule, MockRuleset};
pub use parse::{parse_structured_answer, ParsedAnswer};

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::digest::sha256_parts;
use crate::error::{Error, Result};
use crate::questions::{render_prompt, PromptTemplate, QuestionBank, QuestionSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerStatus {
    Answered,
    ParseFallback,
    Failed,
}

/// One provider's answer to one (document, question) pair. `probability`
/// is `Some` exactly when the status is not `Failed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgeAnswer {
    pub doc_id: String,
    pub question_id: String,
    pub provider_id: String,
    pub probability: Option<f64>,
    pub reasoning: String,
    pub raw: String,
    pub status: AnswerStatus,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TransportError {
    /// Worth retrying: timeouts, 429, 5xx.
    Transient(String),
    /// The provider refused the request; retrying will not help.
    Rejected(String),
    /// Stop the whole run.
    Aborted(String),
}

pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub document: &'a Document,
    pub question: &'a QuestionSpec,
    pub temperature: f64,
}

pub trait Transport: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, TransportError>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderKind {
    HttpChat {
        base_url: String,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        auth_env: Option<String>,
    },
    Mock(MockConfig),
}

fn default_max_tokens() -> u32 {
    1024
}

fn default_max_concurrent() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub id: String,
    #[serde(flatten)]
    pub kind: ProviderKind,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_max_concurrent")]
    pub max_concurrent: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_minute: Option<u32>,
}

impl ProviderSpec {
    pub fn mock(id: &str, config: MockConfig) -> Self {
        ProviderSpec {
            id: id.to_string(),
            kind: ProviderKind::Mock(config),
            temperature: 0.0,
            max_output_tokens: default_max_tokens(),
            max_concurrent: default_max_concurrent(),
            requests_per_minute: None,
        }
    }
}

/// Builds a mock provider spec from a ruleset, bias and seed.
pub fn mock_provider(id: &str, ruleset: MockRuleset, bias: f64, seed: u64) -> ProviderSpec {
    ProviderSpec::mock(
        id,
        MockConfig {
            ruleset: Some(ruleset),
            bias,
            seed,
            ..MockConfig::default()
        },
    )
}

/// Three mock slots standing in for a three-model ensemble. They share the
/// default rules but differ in bias, per-question leanings and noise.
pub fn default_mock_ensemble() -> Vec<ProviderSpec> {
    let slot = |id: &str, bias: f64, seed: u64, noise: f64, leaning: &[(&str, f64)]| {
        ProviderSpec::mock(
            id,
            MockConfig {
                ruleset: None,
                bias,
                seed,
                noise,
                question_bias: leaning.iter().map(|(q, b)| (q.to_string(), *b)).collect(),
            },
        )
    };
    vec![
        slot("mock-a", -2.2, 11, 0.6, &[("suspicious_link", -0.8)]),
        slot("mock-b", -2.0, 23, 0.4, &[]),
        slot(
            "mock-c",
            -1.8,
            37,
            0.5,
            &[("suspicious_link", 0.6), ("marketing", 0.4)],
        ),
    ]
}

/// Reads a JSON array of provider specs.
pub fn load_providers(path: impl AsRef<Path>) -> Result<Vec<ProviderSpec>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let specs: Vec<ProviderSpec> = serde_json::from_str(&raw)?;
    if specs.is_empty() {
        return Err(Error::Config(format!("{}: no providers", path.display())));
    }
    Ok(specs)
}

/// Order-sensitive hash of the ensemble's ids and configurations.
pub fn ensemble_signature(specs: &[ProviderSpec]) -> String {
    let parts: Vec<String> = specs
        .iter()
        .map(|s| serde_json::to_string(s).unwrap_or_else(|_| s.id.clone()))
        .collect();
    sha256_parts(parts)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    /// Delay before attempt `attempt + 1` (attempts are 1-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32
            .checked_shl(attempt.saturating_sub(1))
            .unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Bounds in-flight requests and optionally spaces them to a per-minute rate.
struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
    spacing: Option<Duration>,
    next_slot: Mutex<Instant>,
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

impl Limiter {
    fn new(max: usize, rpm: Option<u32>) -> Self {
        Limiter {
            max: max.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            spacing: rpm
                .filter(|&r| r > 0)
                .map(|r| Duration::from_secs_f64(60.0 / r as f64)),
            next_slot: Mutex::new(Instant::now()),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.max {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        drop(n);
        if let Some(spacing) = self.spacing {
            let wait = {
                let mut next = self.next_slot.lock().unwrap();
                let now = Instant::now();
                let slot = (*next).max(now);
                *next = slot + spacing;
                slot - now
            };
            std::thread::sleep(wait);
        }
        Permit(self)
    }
}

/// A provider ready to answer questions.
pub struct Provider {
    spec: ProviderSpec,
    transport: Arc<dyn Transport>,
    mock: Option<Arc<MockJudge>>,
    limiter: Limiter,
    requests: AtomicU64,
}

impl Provider {
    /// Fails fast on configuration problems (nonzero temperature, missing
    /// API key variable, bad mock rules).
    pub fn from_spec(spec: ProviderSpec) -> Result<Self> {
        if spec.temperature != 0.0 {
            return Err(Error::Config(format!(
                "provider `{}`: temperature must be 0, got {}",
                spec.id, spec.temperature
            )));
        }
        let (transport, mock): (Arc<dyn Transport>, _) = match &spec.kind {
            ProviderKind::Mock(cfg) => {
                let judge = Arc::new(MockJudge::new(cfg.clone())?);
                (judge.clone(), Some(judge))
            }
            ProviderKind::HttpChat {
                base_url,
                model,
                auth_env,
            } => (
                Arc::new(HttpChat::new(
                    base_url,
                    model,
                    auth_env.as_deref(),
                    spec.max_output_tokens,
                )?),
                None,
            ),
        };
        Ok(Provider {
            limiter: Limiter::new(spec.max_concurrent, spec.requests_per_minute),
            spec,
            transport,
            mock,
            requests: AtomicU64::new(0),
        })
    }

    /// Wraps an arbitrary transport, e.g. a scripted one in tests.
    pub fn with_transport(spec: ProviderSpec, transport: Arc<dyn Transport>) -> Self {
        Provider {
            limiter: Limiter::new(spec.max_concurrent, spec.requests_per_minute),
            spec,
            transport,
            mock: None,
            requests: AtomicU64::new(0),
        }
    }

    pub fn from_specs(specs: &[ProviderSpec]) -> Result<Vec<Provider>> {
        specs.iter().cloned().map(Provider::from_spec).collect()
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn spec(&self) -> &ProviderSpec {
        &self.spec
    }

    /// Requests sent to the transport so far (cache hits excluded).
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn validate_for_bank(&self, bank: &QuestionBank) -> Result<()> {
        match &self.mock {
            Some(judge) => judge.covers(bank),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Default)]
pub struct AskStats {
    pub cache_hits: AtomicUsize,
    pub requests: AtomicUsize,
    pub retries: AtomicUsize,
}

/// Everything `ask_question` needs besides the (document, question,
/// provider) triple.
pub struct AskContext<'a> {
    pub template: &'a PromptTemplate,
    pub bank_digest: &'a str,
    pub cache: Option<&'a ResponseCache>,
    pub retry: RetryPolicy,
    pub stats: AskStats,
}

impl<'a> AskContext<'a> {
    pub fn new(template: &'a PromptTemplate, bank_digest: &'a str) -> Self {
        AskContext {
            template,
            bank_digest,
            cache: None,
            retry: RetryPolicy::default(),
            stats: AskStats::default(),
        }
    }

    pub fn with_cache(mut self, cache: &'a ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

/// Asks one provider one question about one document.
///
/// Cache hits return the stored answer. Otherwise the prompt is rendered,
/// sent at temperature 0 and parsed; unparseable completions and transient
/// transport errors are retried up to the policy's budget, after which a
/// `Failed` answer is returned. Only a transport abort or a configuration
/// problem surfaces as `Err`.
pub fn ask_question(
    doc: &Document,
    question: &QuestionSpec,
    provider: &Provider,
    ctx: &AskContext<'_>,
) -> Result<JudgeAnswer> {
    let key = CacheKey {
        provider_id: provider.spec.id.clone(),
        bank_digest: ctx.bank_digest.to_string(),
        template_id: ctx.template.id.clone(),
        question_id: question.id.clone(),
        doc_hash: doc.content_hash(),
    };
    if let Some(mut hit) = ctx.cache.and_then(|c| c.get(&key)) {
        ctx.stats.cache_hits.fetch_add(1, Ordering::Relaxed);
        hit.doc_id = doc.id.clone();
        return Ok(hit);
    }

    let prompt = render_prompt(question, doc, ctx.template)?;
    let request = CompletionRequest {
        prompt: &prompt,
        document: doc,
        question,
        temperature: provider.spec.temperature,
    };

    let mut last = String::new();
    for attempt in 1..=ctx.retry.max_attempts.max(1) {
        if attempt > 1 {
            ctx.stats.retries.fetch_add(1, Ordering::Relaxed);
        }
        let outcome = {
            let _permit = provider.limiter.acquire();
            provider.requests.fetch_add(1, Ordering::Relaxed);
            ctx.stats.requests.fetch_add(1, Ordering::Relaxed);
            provider.transport.complete(&request)
        };
        match outcome {
            Ok(raw) => {
                let parsed = parse_structured_answer(&raw);
                if parsed.status != AnswerStatus::Failed {
                    let answer = JudgeAnswer {
                        doc_id: doc.id.clone(),
                        question_id: question.id.clone(),
                        provider_id: provider.spec.id.clone(),
                        probability: parsed.probability,
                        reasoning: parsed.reasoning,
                        raw,
                        status: parsed.status,
                    };
                    if let Some(cache) = ctx.cache {
                        cache.put(&key, &answer)?;
                    }
                    return Ok(answer);
                }
                last = raw;
            }
            Err(TransportError::Transient(msg)) => {
                tracing::debug!(provider = %provider.spec.id, attempt, error = %msg, "transient failure");
                last = msg;
                if attempt < ctx.retry.max_attempts {
                    std::thread::sleep(ctx.retry.backoff(attempt));
                }
            }
            Err(TransportError::Rejected(msg)) => {
                last = msg;
                break;
            }
            Err(TransportError::Aborted(msg)) => return Err(Error::Interrupted(msg)),
        }
    }

    tracing::warn!(provider = %provider.spec.id, doc = %doc.id, question = %question.id, "no usable answer");
    Ok(JudgeAnswer {
        doc_id: doc.id.clone(),
        question_id: question.id.clone(),
        provider_id: provider.spec.id.clone(),
        probability: None,
        reasoning: String::new(),
        raw: last,
        status: AnswerStatus::Failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, Source};
    use crate::questions::default_question_bank;

    struct Scripted {
        replies: Mutex<Vec<Result<String, TransportError>>>,
    }

    impl Transport for Scripted {
        fn complete(&self, _: &CompletionRequest<'_>) -> Result<String, TransportError> {
            let mut r = self.replies.lock().unwrap();
            if r.is_empty() {
                Err(TransportError::Rejected("script exhausted".into()))
            } else {
                r.remove(0)
            }
        }
    }

    fn scripted(replies: Vec<Result<String, TransportError>>) -> Provider {
        Provider::with_transport(
            ProviderSpec::mock("scripted", MockConfig::default()),
            Arc::new(Scripted {
                replies: Mutex::new(replies),
            }),
        )
    }

    fn doc(text: &str) -> Document {
        Document::new("d1", text, Label::Phishing, Source::Synthetic).unwrap()
    }

    #[test]
    fn mock_urgency_answer_and_cache_hit() {
        let bank = default_question_bank();
        let digest = bank.digest();
        let template = PromptTemplate::default_template();
        let cache = ResponseCache::in_memory();
        let ctx = AskContext::new(&template, &digest).with_cache(&cache);
        let provider = Provider::from_spec(default_mock_ensemble().remove(1)).unwrap();
        let d = doc("URGENT: act within 24 hours");
        let first = ask_question(&d, &bank.all()[0], &provider, &ctx).unwrap();
        assert_eq!(first.status, AnswerStatus::Answered);
        assert!(first.probability.unwrap() >= 0.8);
        let second = ask_question(&d, &bank.all()[0], &provider, &ctx).unwrap();
        assert_eq!(first, second);
        assert_eq!(provider.request_count(), 1);
        assert_eq!(ctx.stats.cache_hits.load(Ordering::Relaxed), 1);
    }

    #[test]
    fn cache_hit_carries_requesting_doc_id() {
        let bank = default_question_bank();
        let digest = bank.digest();
        let template = PromptTemplate::default_template();
        let cache = ResponseCache::in_memory();
        let ctx = AskContext::new(&template, &digest).with_cache(&cache);
        let provider = Provider::from_spec(default_mock_ensemble().remove(0)).unwrap();
        let a = ask_question(&doc("same text"), &bank.all()[2], &provider, &ctx).unwrap();
        let other = Document::new("d2", "same text", Label::Ham, Source::Enron).unwrap();
        let b = ask_question(&other, &bank.all()[2], &provider, &ctx).unwrap();
        assert_eq!(b.doc_id, "d2");
        assert_eq!(a.probability, b.probability);
        assert_eq!(provider.request_count(), 1);
    }

    #[test]
    fn garbage_three_times_fails() {
        let bank = default_question_bank();
        let digest = bank.digest();
        let template = PromptTemplate::default_template();
        let cache = ResponseCache::in_memory();
        let ctx = AskContext::new(&template, &digest)
            .with_cache(&cache)
            .with_retry(RetryPolicy::immediate(3));
        let p = scripted(vec![
            Ok("banana".into()),
            Ok("n/a".into()),
            Ok("???".into()),
            Ok("0.9".into()),
        ]);
        let a = ask_question(&doc("x"), &bank.all()[0], &p, &ctx).unwrap();
        assert_eq!(a.status, AnswerStatus::Failed);
        assert_eq!(a.probability, None);
        assert_eq!(p.request_count(), 3);
        assert!(cache.is_empty());
    }

    #[test]
    fn transient_errors_are_retried() {
        let bank = default_question_bank();
        let digest = bank.digest();
        let template = PromptTemplate::default_template();
        let ctx = AskContext::new(&template, &digest).with_retry(RetryPolicy::immediate(3));
        let p = scripted(vec![
            Err(TransportError::Transient("timeout".into())),
            Ok(r#"{"reasoning":"fine","probability":0.2}"#.into()),
        ]);
        let a = ask_question(&doc("x"), &bank.all()[0], &p, &ctx).unwrap();
        assert_eq!(a.probability, Some(0.2));
        assert_eq!(ctx.stats.retries.load(Ordering::Relaxed), 1);
    }

    #[test]
    fn rejected_is_not_retried_and_abort_propagates() {
        let bank = default_question_bank();
        let digest = bank.digest();
        let template = PromptTemplate::default_template();
        let ctx = AskContext::new(&template, &digest).with_retry(RetryPolicy::immediate(3));
        let p = scripted(vec![Err(TransportError::Rejected("401".into()))]);
        assert_eq!(
            ask_question(&doc("x"), &bank.all()[0], &p, &ctx)
                .unwrap()
                .status,
            AnswerStatus::Failed
        );
        assert_eq!(p.request_count(), 1);
        let p = scripted(vec![Err(TransportError::Aborted("stop".into()))]);
        assert!(matches!(
            ask_question(&doc("x"), &bank.all()[0], &p, &ctx),
            Err(Error::Interrupted(_))
        ));
    }

    #[test]
    fn backoff_is_exponential_and_capped() {
        let r = RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(350),
        };
        assert_eq!(r.backoff(1), Duration::from_millis(100));
        assert_eq!(r.backoff(2), Duration::from_millis(200));
        assert_eq!(r.backoff(3), Duration::from_millis(350));
    }

    #[test]
    fn config_errors_fail_fast() {
        let mut spec = default_mock_ensemble().remove(0);
        spec.temperature = 0.7;
        assert!(matches!(Provider::from_spec(spec), Err(Error::Config(_))));
        let http = ProviderSpec {
            id: "h".into(),
            kind: ProviderKind::HttpChat {
                base_url: "http://127.0.0.1:1".into(),
                model: "m".into(),
                auth_env: Some("PCV_TEST_SURELY_UNSET_KEY".into()),
            },
            temperature: 0.0,
            max_output_tokens: 16,
            max_concurrent: 1,
            requests_per_minute: None,
        };
        assert!(matches!(Provider::from_spec(http), Err(Error::Config(_))));
    }

    #[test]
    fn providers_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("providers.json");
        std::fs::write(
            &p,
            r#"[{"id":"gpt","kind":"http_chat","base_url":"https://api.example.com/v1","model":"m1","auth_env":"KEY"},
                {"id":"m","kind":"mock","bias":-1.0,"seed":3}]"#,
        )
        .unwrap();
        let specs = load_providers(&p).unwrap();
        assert_eq!(specs.len(), 2);
        assert!(matches!(&specs[0].kind, ProviderKind::HttpChat { model, .. } if model == "m1"));
        assert_eq!(specs[0].max_concurrent, 4);
        assert!(matches!(&specs[1].kind, ProviderKind::Mock(c) if c.bias == -1.0 && c.seed == 3));
        let json = serde_json::to_string(&specs).unwrap();
        assert_eq!(
            serde_json::from_str::<Vec<ProviderSpec>>(&json).unwrap(),
            specs
        );
    }

    #[test]
    fn concurrency_ceiling_is_respected() {
        struct Slow {
            now: AtomicUsize,
            peak: AtomicUsize,
        }
        impl Transport for Slow {
            fn complete(&self, _: &CompletionRequest<'_>) -> Result<String, TransportError> {
                let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(n, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(5));
                self.now.fetch_sub(1, Ordering::SeqCst);
                Ok(r#"{"reasoning":"","probability":0.5}"#.into())
            }
        }
        let slow = Arc::new(Slow {
            now: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let mut spec = ProviderSpec::mock("slow", MockConfig::default());
        spec.max_concurrent = 2;
        let provider = Provider::with_transport(spec, slow.clone());
        let bank = default_question_bank();
        let digest = bank.digest();
        let template = PromptTemplate::default_template();
        let ctx = AskContext::new(&template, &digest);
        std::thread::scope(|s| {
            for i in 0..8 {
                let (provider, ctx, bank) = (&provider, &ctx, &bank);
                s.spawn(move || {
                    let d = Document::new(
                        format!("d{i}"),
                        format!("text {i}"),
                        Label::Ham,
                        Source::Enron,
                    )
                    .unwrap();
                    ask_question(&d, &bank.all()[0], provider, ctx).unwrap();
                });
            }
        });
        assert!(slow.peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(provider.request_count(), 8);
    }
}
