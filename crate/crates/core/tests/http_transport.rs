use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use pcv_core::corpus::{Document, Label, Source};
use pcv_core::providers::{
    ask_question, AnswerStatus, AskContext, Provider, ProviderKind, ProviderSpec, RetryPolicy,
};
use pcv_core::questions::{default_question_bank, PromptTemplate};

/// Serves one scripted `(status, body)` reply per connection and records
/// each request's headers and body.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut payload = vec![0; length];
            reader.read_exact(&mut payload).unwrap();
            head.push_str(&String::from_utf8_lossy(&payload));
            log.lock().unwrap().push(head);
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen)
}

fn spec(url: &str, auth_env: Option<&str>) -> ProviderSpec {
    ProviderSpec {
        id: "http".into(),
        kind: ProviderKind::HttpChat {
            base_url: url.into(),
            model: "judge-1".into(),
            auth_env: auth_env.map(String::from),
        },
        temperature: 0.0,
        max_output_tokens: 256,
        max_concurrent: 1,
        requests_per_minute: None,
    }
}

fn chat(content: &str) -> String {
    serde_json::json!({ "choices": [{ "message": { "role": "assistant", "content": content } }] }).to_string()
}

fn doc() -> Document {
    Document::new("d1", "Verify your account today http://bit.ly/x", Label::Phishing, Source::Synthetic).unwrap()
}

#[test]
fn retries_server_error_then_parses_answer() {
    std::env::set_var("PCV_TEST_HTTP_KEY", "sk-test-123");
    let (url, seen) = serve(vec![
        (503, "{}".into()),
        (200, chat(r#"{"reasoning": "short link", "probability": 0.83}"#)),
    ]);
    let provider = Provider::from_spec(spec(&url, Some("PCV_TEST_HTTP_KEY"))).unwrap();
    let bank = default_question_bank();
    let digest = bank.digest();
    let template = PromptTemplate::default_template();
    let ctx = AskContext::new(&template, &digest).with_retry(RetryPolicy::immediate(3));
    let a = ask_question(&doc(), &bank.all()[2], &provider, &ctx).unwrap();
    assert_eq!(a.status, AnswerStatus::Answered);
    assert_eq!(a.probability, Some(0.83));
    assert_eq!(provider.request_count(), 2);
    let seen = seen.lock().unwrap();
    assert!(seen[1].starts_with("POST /v1/chat/completions"));
    assert!(seen[1].to_ascii_lowercase().contains("authorization: bearer sk-test-123"));
    let body: serde_json::Value = serde_json::from_str(&seen[1][seen[1].find("\r\n\r\n").unwrap()..]).unwrap();
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["model"], "judge-1");
    assert!(body["messages"][0]["content"].as_str().unwrap().contains("bit.ly"));
}

#[test]
fn client_error_is_not_retried() {
    let (url, _) = serve(vec![(400, r#"{"error":"bad"}"#.into())]);
    let provider = Provider::from_spec(spec(&url, None)).unwrap();
    let bank = default_question_bank();
    let digest = bank.digest();
    let template = PromptTemplate::default_template();
    let ctx = AskContext::new(&template, &digest).with_retry(RetryPolicy::immediate(3));
    let a = ask_question(&doc(), &bank.all()[0], &provider, &ctx).unwrap();
    assert_eq!(a.status, AnswerStatus::Failed);
    assert_eq!(a.probability, None);
    assert_eq!(provider.request_count(), 1);
}

#[test]
fn missing_key_variable_fails_before_any_request() {
    let err = Provider::from_spec(spec("http://127.0.0.1:9", Some("PCV_TEST_UNSET_KEY_VARIABLE"))).err().unwrap();
    assert!(err.to_string().contains("PCV_TEST_UNSET_KEY_VARIABLE"));
}
