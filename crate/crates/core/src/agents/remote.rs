//! Hosted chat-completion and embedding endpoints over HTTP.
//!
//! Request shapes:
//!
//! * chat: `{"model", "messages": [{"role", "content"}], "max_tokens", "temperature"}`,
//!   reply read from `choices[0].message.content`;
//! * embedding: `{"model", "input"}`, vector read from `data[0].embedding`
//!   (or a top-level `embedding` array / `embedding.values`).
//!
//! Transport failures, 429 and 5xx responses are retried with exponential
//! backoff; once retries run out the call fails with
//! [`AgentError::BackendUnavailable`].

use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::{json, Value};

use super::chat::{ChatModel, ChatRequest, RequestMessage};
use super::{AgentError, Encoder};
use crate::embedding::Embedding;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub multiplier: f64,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff: Duration::from_millis(250),
            multiplier: 2.0,
            max_backoff: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let scaled = self.initial_backoff.as_secs_f64() * self.multiplier.powi(attempt as i32);
        Duration::from_secs_f64(scaled.min(self.max_backoff.as_secs_f64()))
    }
}

#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

struct HttpJson {
    client: Client,
    endpoint: HttpEndpoint,
    retry: RetryPolicy,
}

impl HttpJson {
    fn new(endpoint: HttpEndpoint, retry: RetryPolicy) -> Result<Self, AgentError> {
        let client = Client::builder()
            .timeout(endpoint.timeout)
            .build()
            .map_err(|e| AgentError::InvalidConfig(format!("http client: {e}")))?;
        Ok(Self {
            client,
            endpoint,
            retry,
        })
    }

    fn post(&self, body: &Value) -> Result<Value, AgentError> {
        let mut last_error = String::new();
        for attempt in 0..=self.retry.max_retries {
            if attempt > 0 {
                thread::sleep(self.retry.backoff(attempt - 1));
            }
            let mut request = self.client.post(&self.endpoint.url).json(body);
            if let Some(key) = &self.endpoint.api_key {
                request = request.bearer_auth(key);
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        return response
                            .json::<Value>()
                            .map_err(|e| AgentError::Protocol(format!("invalid JSON body: {e}")));
                    }
                    let text = response.text().unwrap_or_default();
                    if status.as_u16() == 429 || status.is_server_error() {
                        last_error = format!("HTTP {status}: {text}");
                        continue;
                    }
                    return Err(AgentError::Protocol(format!("HTTP {status}: {text}")));
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(AgentError::BackendUnavailable(format!(
            "{} after {} attempts: {last_error}",
            self.endpoint.url,
            self.retry.max_retries + 1
        )))
    }
}

pub struct RemoteChatModel {
    http: HttpJson,
}

impl RemoteChatModel {
    pub fn new(endpoint: HttpEndpoint, retry: RetryPolicy) -> Result<Self, AgentError> {
        Ok(Self {
            http: HttpJson::new(endpoint, retry)?,
        })
    }

    pub fn request_body(&self, request: &ChatRequest) -> Value {
        chat_body(&self.http.endpoint.model, request)
    }
}

fn message_json(m: &RequestMessage) -> Value {
    let content = match &m.image_url {
        None => Value::String(m.text.clone()),
        Some(url) => json!([
            {"type": "text", "text": m.text},
            {"type": "image_url", "image_url": {"url": url}},
        ]),
    };
    json!({"role": m.role, "content": content})
}

pub fn chat_body(model: &str, request: &ChatRequest) -> Value {
    json!({
        "model": model,
        "messages": request.messages.iter().map(message_json).collect::<Vec<_>>(),
        "max_tokens": request.params.max_tokens,
        "temperature": request.params.temperature,
    })
}

impl ChatModel for RemoteChatModel {
    fn complete(&self, request: &ChatRequest) -> Result<String, AgentError> {
        let reply = self.http.post(&self.request_body(request))?;
        let content = reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| AgentError::Protocol("missing choices[0].message.content".into()))?;
        if content.trim().is_empty() {
            return Err(AgentError::EmptyResponse);
        }
        Ok(content.to_string())
    }
}

pub struct RemoteEncoder {
    http: HttpJson,
    dimension: usize,
}

impl RemoteEncoder {
    pub fn new(endpoint: HttpEndpoint, dimension: usize, retry: RetryPolicy) -> Result<Self, AgentError> {
        Ok(Self {
            http: HttpJson::new(endpoint, retry)?,
            dimension,
        })
    }
}

fn extract_vector(reply: &Value) -> Option<Vec<f64>> {
    let candidates = ["/data/0/embedding", "/embedding/values", "/embedding"];
    candidates
        .iter()
        .filter_map(|p| reply.pointer(p))
        .find_map(|v| v.as_array())
        .and_then(|arr| arr.iter().map(Value::as_f64).collect())
}

impl Encoder for RemoteEncoder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn encode(&self, text: &str) -> Result<Embedding, AgentError> {
        if text.trim().is_empty() {
            return Err(AgentError::EmptyText);
        }
        let reply = self.http.post(&json!({
            "model": self.http.endpoint.model,
            "input": text,
        }))?;
        let raw = extract_vector(&reply)
            .ok_or_else(|| AgentError::Protocol("response carries no embedding array".into()))?;
        Ok(Embedding::normalize_with_dim(&raw, self.dimension)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{DecodingParams, Role};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    /// Serves canned `(status, body)` replies, one per connection, and keeps
    /// the request bodies it saw.
    fn mock_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/endpoint", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let seen_bg = seen.clone();
        thread::spawn(move || {
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream);
                let mut content_length = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        content_length = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; content_length];
                reader.read_exact(&mut buf).unwrap();
                seen_bg.lock().unwrap().push(String::from_utf8(buf).unwrap());
                let mut stream = reader.into_inner();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (url, seen)
    }

    fn endpoint(url: String) -> HttpEndpoint {
        HttpEndpoint {
            url,
            model: "test-model".into(),
            api_key: Some("k".into()),
            timeout: Duration::from_secs(5),
        }
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            initial_backoff: Duration::from_millis(1),
            ..RetryPolicy::default()
        }
    }

    #[test]
    fn backoff_grows_exponentially() {
        let p = RetryPolicy::default();
        assert_eq!(p.backoff(0), Duration::from_millis(250));
        assert_eq!(p.backoff(1), Duration::from_millis(500));
        assert_eq!(p.backoff(2), Duration::from_millis(1000));
        assert_eq!(p.backoff(10), Duration::from_secs(8));
    }

    #[test]
    fn chat_request_shape_and_retry() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"What color is it?"}}]}"#;
        let (url, seen) = mock_server(vec![
            (500, "{}".into()),
            (503, "{}".into()),
            (200, ok.into()),
        ]);
        let model = RemoteChatModel::new(endpoint(url), fast_retry()).unwrap();
        let request = ChatRequest {
            messages: vec![
                RequestMessage::text(Role::System, "sys"),
                RequestMessage::text(Role::User, "hi"),
            ],
            params: DecodingParams::QUESTIONER,
        };
        assert_eq!(model.complete(&request).unwrap(), "What color is it?");
        let seen = seen.lock().unwrap();
        assert_eq!(seen.len(), 3);
        let body: Value = serde_json::from_str(&seen[2]).unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["max_tokens"], 1500);
        assert_eq!(body["temperature"], 0.75);
        assert_eq!(body["messages"][0], json!({"role": "system", "content": "sys"}));
    }

    #[test]
    fn gives_up_after_three_retries() {
        let (url, seen) = mock_server(vec![(502, "{}".into()); 4]);
        let model = RemoteChatModel::new(endpoint(url), fast_retry()).unwrap();
        let request = ChatRequest {
            messages: vec![RequestMessage::text(Role::User, "hi")],
            params: DecodingParams::ANSWERER,
        };
        assert!(matches!(
            model.complete(&request),
            Err(AgentError::BackendUnavailable(_))
        ));
        assert_eq!(seen.lock().unwrap().len(), 4);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, seen) = mock_server(vec![(400, r#"{"error":"bad"}"#.into())]);
        let model = RemoteChatModel::new(endpoint(url), fast_retry()).unwrap();
        let request = ChatRequest {
            messages: vec![RequestMessage::text(Role::User, "hi")],
            params: DecodingParams::ANSWERER,
        };
        assert!(matches!(model.complete(&request), Err(AgentError::Protocol(_))));
        assert_eq!(seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        drop(listener);
        let encoder = RemoteEncoder::new(endpoint(url), 3, fast_retry()).unwrap();
        assert!(matches!(
            encoder.encode("hello"),
            Err(AgentError::BackendUnavailable(_))
        ));
    }

    #[test]
    fn encoder_parses_and_normalizes() {
        let (url, seen) = mock_server(vec![(200, r#"{"data":[{"embedding":[3.0,4.0]}]}"#.into())]);
        let encoder = RemoteEncoder::new(endpoint(url), 2, fast_retry()).unwrap();
        let e = encoder.encode("a red car").unwrap();
        assert_eq!(e.as_slice(), &[0.6, 0.8]);
        let body: Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
        assert_eq!(body, json!({"model": "test-model", "input": "a red car"}));
    }

    #[test]
    fn image_messages_use_content_parts() {
        let m = RequestMessage {
            role: Role::User,
            text: "q".into(),
            image_url: Some("data:image/png;base64,xx".into()),
        };
        let v = message_json(&m);
        assert_eq!(v["content"][1]["image_url"]["url"], "data:image/png;base64,xx");
        assert_eq!(
            extract_vector(&json!({"embedding": {"values": [1.0, 2.0]}})),
            Some(vec![1.0, 2.0])
        );
    }
}
