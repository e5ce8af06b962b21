//! In-process HTTP stand-ins for the encoder and LLM services, for tests,
//! examples, and offline runs.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};

use crate::embeddings::HashEncoder;
use crate::error::{Error, Result};

type Handler = dyn Fn(&str, &Value) -> (u16, Value) + Send + Sync;

/// A request the server received: URL path and JSON body.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedRequest {
    pub path: String,
    pub body: Value,
}

/// Local HTTP server answering JSON POSTs with a handler. Shuts down on drop.
pub struct MockServer {
    url: String,
    server: Arc<tiny_http::Server>,
    requests: Arc<Mutex<Vec<RecordedRequest>>>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&str, &Value) -> (u16, Value) + Send + Sync + 'static) -> Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(|e| Error::Network {
            url: "127.0.0.1:0".into(),
            attempts: 0,
            message: e.to_string(),
        })?;
        let port = server.server_addr().to_ip().map(|a| a.port()).unwrap_or(0);
        let server = Arc::new(server);
        let requests = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let thread = {
            let server = Arc::clone(&server);
            let requests = Arc::clone(&requests);
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let handler = Arc::clone(&handler);
                    let requests = Arc::clone(&requests);
                    // one thread per request so parallel clients overlap
                    std::thread::spawn(move || {
                        let mut text = String::new();
                        let _ = req.as_reader().read_to_string(&mut text);
                        let body = serde_json::from_str(&text).unwrap_or(Value::Null);
                        let path = req.url().to_owned();
                        requests.lock().unwrap().push(RecordedRequest {
                            path: path.clone(),
                            body: body.clone(),
                        });
                        let (status, reply) = handler(&path, &body);
                        let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                        let resp = tiny_http::Response::from_string(reply.to_string())
                            .with_status_code(status)
                            .with_header(header);
                        let _ = req.respond(resp);
                    });
                }
            })
        };
        Ok(MockServer {
            url: format!("http://127.0.0.1:{port}"),
            server,
            requests,
            thread: Some(thread),
        })
    }

    /// Base URL, e.g. `http://127.0.0.1:41234`.
    pub fn url(&self) -> &str {
        &self.url
    }

    /// Requests received so far, in arrival order.
    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Encoder service backed by a [`HashEncoder`].
pub fn mock_encoder(encoder: HashEncoder) -> Result<MockServer> {
    MockServer::start(move |path, body| {
        if path != "/embed" {
            return (404, json!({"error": "not found"}));
        }
        let Some(texts) = body.get("texts").and_then(Value::as_array) else {
            return (400, json!({"error": "missing texts"}));
        };
        let rows: Vec<Vec<f32>> = texts
            .iter()
            .map(|t| encoder.embed_one(t.as_str().unwrap_or_default()))
            .collect();
        (200, json!({ "embeddings": rows }))
    })
}

/// The question of a QA request: the text after the last `Question:` line
/// of the last user message.
pub fn question_of(body: &Value) -> Option<String> {
    let messages = body.get("messages")?.as_array()?;
    let user = messages
        .iter()
        .rev()
        .find(|m| m.get("role").and_then(Value::as_str) == Some("user"))?;
    let content = user.get("content")?.as_str()?;
    let (_, q) = content.rsplit_once("Question:\n")?;
    Some(q.trim().to_owned())
}

fn chat_reply(content: &str) -> Value {
    json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]})
}

/// Chat-completions service whose reply is computed from the request body.
pub fn mock_llm_fn(reply: impl Fn(&Value) -> String + Send + Sync + 'static) -> Result<MockServer> {
    MockServer::start(move |path, body| {
        if path != "/v1/chat/completions" {
            return (404, json!({"error": "not found"}));
        }
        (200, chat_reply(&reply(body)))
    })
}

/// Chat-completions service that answers by question text, falling back to
/// `default`.
pub fn mock_llm(replies: HashMap<String, String>, default: impl Into<String>) -> Result<MockServer> {
    let default = default.into();
    mock_llm_fn(move |body| {
        question_of(body)
            .and_then(|q| replies.get(&q).cloned())
            .unwrap_or_else(|| default.clone())
    })
}
