//! Encoder and LLM clients against in-process mock servers.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use kgrag::embeddings::{HashEncoder, HttpEncoder, TextEncoder};
use kgrag::mock::{mock_encoder, mock_llm_fn, MockServer};
use kgrag::reasoner::{build_qa_prompt, LlmClient, LlmConfig};
use kgrag::{Error, RetryPolicy};
use serde_json::json;

fn fast_retry(max_attempts: u32) -> RetryPolicy {
    RetryPolicy {
        max_attempts,
        initial_backoff_ms: 5,
        max_backoff_ms: 20,
        timeout_ms: 5_000,
    }
}

#[test]
fn encoder_batches_requests() {
    let server = mock_encoder(HashEncoder::new(16, 0)).unwrap();
    let texts: Vec<String> = (0..300).map(|i| format!("text number {i}")).collect();
    let enc = HttpEncoder::new(server.url(), 128, 2, fast_retry(1)).unwrap();
    let rows = enc.embed(&texts).unwrap();
    let reqs = server.requests();
    assert_eq!(reqs.len(), 3);
    let mut sizes: Vec<usize> = reqs.iter().map(|r| r.body["texts"].as_array().unwrap().len()).collect();
    sizes.sort();
    assert_eq!(sizes, [44, 128, 128]);
    // order preserved and identical to the in-process encoder
    let local = HashEncoder::new(16, 0);
    for (t, r) in texts.iter().zip(&rows) {
        assert_eq!(r, &local.embed_one(t));
    }
}

#[test]
fn transient_errors_are_retried() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = Arc::clone(&calls);
    let server = MockServer::start(move |_, body| {
        if c.fetch_add(1, Ordering::SeqCst) < 2 {
            return (503, json!({"error": "busy"}));
        }
        let n = body["texts"].as_array().unwrap().len();
        (200, json!({"embeddings": vec![vec![1.0f32, 0.0]; n]}))
    })
    .unwrap();
    let enc = HttpEncoder::new(server.url(), 8, 1, fast_retry(4)).unwrap();
    let rows = enc.embed(&["a".to_string()]).unwrap();
    assert_eq!(rows, vec![vec![1.0, 0.0]]);
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[test]
fn retries_are_bounded_and_client_errors_are_not_retried() {
    let server = MockServer::start(|_, _| (503, json!({}))).unwrap();
    let enc = HttpEncoder::new(server.url(), 8, 1, fast_retry(3)).unwrap();
    let err = enc.embed(&["a".to_string()]).unwrap_err();
    assert!(matches!(err, Error::HttpStatus { status: 503, attempts: 3, .. }), "{err}");
    assert!(err.is_external_service());
    assert_eq!(server.requests().len(), 3);

    let server = MockServer::start(|_, _| (400, json!({}))).unwrap();
    let enc = HttpEncoder::new(server.url(), 8, 1, fast_retry(3)).unwrap();
    assert!(matches!(enc.embed(&["a".to_string()]), Err(Error::HttpStatus { status: 400, .. })));
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn wrong_embedding_count_is_a_protocol_error() {
    let server = MockServer::start(|_, _| (200, json!({"embeddings": [[1.0]]}))).unwrap();
    let enc = HttpEncoder::new(server.url(), 8, 1, fast_retry(1)).unwrap();
    let err = enc.embed(&["a".to_string(), "b".to_string()]).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}

#[test]
fn llm_request_is_deterministic_and_reply_is_extracted() {
    let server = mock_llm_fn(|_| "ans: Paris".to_string()).unwrap();
    let client = LlmClient::new(&LlmConfig {
        endpoint: server.url().to_owned(),
        model: "test-model".into(),
        retry: fast_retry(1),
    })
    .unwrap();
    let bundle = build_qa_prompt("capital of France?", &[("France", "capital", "Paris")], false);
    assert_eq!(client.complete(&bundle).unwrap(), "ans: Paris");
    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].path, "/v1/chat/completions");
    let body = &reqs[0].body;
    assert_eq!(body["temperature"].as_f64(), Some(0.0));
    assert_eq!(body["seed"], json!(0));
    assert_eq!(body["model"], json!("test-model"));
    assert_eq!(body["messages"][0]["role"], json!("system"));
    assert_eq!(body["messages"].as_array().unwrap().len(), 2);
}

#[test]
fn malformed_llm_reply_is_a_protocol_error() {
    let server = MockServer::start(|_, _| (200, json!({"choices": []}))).unwrap();
    let client = LlmClient::new(&LlmConfig {
        endpoint: server.url().to_owned(),
        retry: fast_retry(1),
        ..LlmConfig::default()
    })
    .unwrap();
    let err = client.complete(&build_qa_prompt::<&str>("q", &[], false)).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}
