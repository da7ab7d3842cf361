use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use base64::Engine;
use rand::Rng;
use serde_json::{json, Value};

use super::{validate_request, BackendConfig, ChatBackend, ChatMessage, GatewayError, Part, RateLimiter};

/// Client for an OpenAI-compatible chat-completions endpoint.
pub struct OpenAiBackend {
    config: BackendConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    limiter: Option<RateLimiter>,
    requests_sent: AtomicU64,
}

impl std::fmt::Debug for OpenAiBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiBackend")
            .field("config", &self.config)
            .field("has_key", &self.api_key.is_some())
            .finish()
    }
}

impl OpenAiBackend {
    /// Reads the API key from `config.api_key_env`. A missing key is not an
    /// error here so that keyless local servers work; the server decides.
    pub fn new(config: BackendConfig) -> Result<Self, GatewayError> {
        config
            .validate()
            .map_err(|e| GatewayError::TransportFailure(format!("invalid backend config: {e}")))?;
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty());
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        let limiter = config.requests_per_minute.map(RateLimiter::per_minute);
        Ok(OpenAiBackend {
            config,
            api_key,
            agent,
            limiter,
            requests_sent: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// Number of HTTP requests dispatched so far, retries included.
    pub fn requests_sent(&self) -> u64 {
        self.requests_sent.load(Ordering::Relaxed)
    }

    fn send_once(&self, body: &str) -> Attempt {
        if let Some(l) = &self.limiter {
            l.acquire();
        }
        self.requests_sent.fetch_add(1, Ordering::Relaxed);
        let mut req = self
            .agent
            .post(&self.config.chat_url())
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(GatewayError::TransportFailure(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Transient(GatewayError::TransportFailure(e.to_string())),
        };
        match status {
            200..=299 => match parse_response_body(&text) {
                Ok(s) => Attempt::Done(s),
                Err(e) => Attempt::Fatal(e),
            },
            401 | 403 => Attempt::Fatal(GatewayError::AuthFailure { status, body: text }),
            429 => Attempt::RateLimited,
            500..=599 => Attempt::Transient(GatewayError::TransportFailure(format!(
                "HTTP {status}: {}",
                truncate(&text, 200)
            ))),
            _ => Attempt::Fatal(GatewayError::TransportFailure(format!(
                "HTTP {status}: {}",
                truncate(&text, 200)
            ))),
        }
    }
}

enum Attempt {
    Done(String),
    RateLimited,
    Transient(GatewayError),
    Fatal(GatewayError),
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl ChatBackend for OpenAiBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        validate_request(messages, self.config.max_images)?;
        let body = build_request_body(messages, &self.config).to_string();
        let delays = backoff_delays(
            self.config.backoff_base_s,
            self.config.max_retries as usize,
            &mut rand::rng(),
        );
        let mut attempts = 0u32;
        let mut last_rate_limited = false;
        let mut last_err = None;
        for delay in std::iter::once(None).chain(delays.into_iter().map(Some)) {
            if let Some(d) = delay {
                log::warn!("retrying chat request after {d:?}");
                std::thread::sleep(d);
            }
            attempts += 1;
            match self.send_once(&body) {
                Attempt::Done(s) => return Ok(s),
                Attempt::Fatal(e) => return Err(e),
                Attempt::RateLimited => last_rate_limited = true,
                Attempt::Transient(e) => {
                    last_rate_limited = false;
                    last_err = Some(e);
                }
            }
        }
        if last_rate_limited {
            Err(GatewayError::RateLimited { attempts })
        } else {
            Err(last_err.unwrap_or_else(|| GatewayError::TransportFailure("no attempt made".into())))
        }
    }

    fn describe(&self) -> String {
        format!("openai:{}@{}", self.config.model_name, self.config.endpoint)
    }
}

/// Retry delays `base * 2^k * (1 + u/2)` with `u` uniform in [0, 1).
///
/// The jitter never exceeds the doubling, so the sequence is non-decreasing.
pub fn backoff_delays<R: Rng + ?Sized>(base_s: f64, retries: usize, rng: &mut R) -> Vec<Duration> {
    (0..retries)
        .map(|k| {
            let u: f64 = rng.random();
            Duration::from_secs_f64(base_s * 2f64.powi(k as i32) * (1.0 + 0.5 * u))
        })
        .collect()
}

/// JSON body for one chat-completions request. Text-only messages use a
/// plain string `content`; messages with images use a parts array with
/// base64 data URLs.
pub fn build_request_body(messages: &[ChatMessage], config: &BackendConfig) -> Value {
    let b64 = base64::engine::general_purpose::STANDARD;
    let msgs: Vec<Value> = messages
        .iter()
        .map(|m| {
            let content = if m.image_count() == 0 {
                Value::String(m.text())
            } else {
                Value::Array(
                    m.parts
                        .iter()
                        .map(|p| match p {
                            Part::Text(t) => json!({"type": "text", "text": t}),
                            Part::Image { data, media_type } => json!({
                                "type": "image_url",
                                "image_url": {"url": format!("data:{media_type};base64,{}", b64.encode(data))}
                            }),
                        })
                        .collect(),
                )
            };
            json!({"role": m.role.as_str(), "content": content})
        })
        .collect();
    json!({
        "model": config.model_name,
        "messages": msgs,
        "temperature": config.temperature,
        "max_tokens": config.max_output_tokens,
    })
}

/// Extracts `choices[0].message.content` from a response body.
pub fn parse_response_body(text: &str) -> Result<String, GatewayError> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| GatewayError::MalformedResponse(format!("invalid JSON: {e}")))?;
    let content = v
        .pointer("/choices/0/message/content")
        .ok_or_else(|| GatewayError::MalformedResponse("missing choices[0].message.content".into()))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => {
            let texts: Vec<&str> = parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect();
            if texts.is_empty() {
                Err(GatewayError::MalformedResponse("content array has no text".into()))
            } else {
                Ok(texts.join(""))
            }
        }
        other => Err(GatewayError::MalformedResponse(format!(
            "content is not text: {other}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Role;
    use rand::SeedableRng;

    #[test]
    fn body_shape() {
        let msgs = [
            ChatMessage::system("sys"),
            ChatMessage::new(
                Role::User,
                vec![
                    Part::Text("look".into()),
                    Part::Image {
                        data: vec![1, 2, 3],
                        media_type: "image/png".into(),
                    },
                ],
            ),
        ];
        let body = build_request_body(&msgs, &BackendConfig::default());
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][0]["content"], "sys");
        assert_eq!(body["messages"][1]["content"][0]["text"], "look");
        assert_eq!(
            body["messages"][1]["content"][1]["image_url"]["url"],
            "data:image/png;base64,AQID"
        );
    }

    #[test]
    fn response_parsing() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"ANSWER: chair"}}]}"#;
        assert_eq!(parse_response_body(ok).unwrap(), "ANSWER: chair");
        assert!(matches!(
            parse_response_body("{}"),
            Err(GatewayError::MalformedResponse(_))
        ));
        assert!(matches!(
            parse_response_body("not json"),
            Err(GatewayError::MalformedResponse(_))
        ));
    }

    #[test]
    fn backoff_is_non_decreasing_and_bounded() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let d = backoff_delays(1.0, 6, &mut rng);
            assert_eq!(d.len(), 6);
            for (k, w) in d.windows(2).enumerate() {
                assert!(w[0] <= w[1], "delay {k} decreased");
            }
            for (k, x) in d.iter().enumerate() {
                let lo = 2f64.powi(k as i32);
                assert!(x.as_secs_f64() >= lo && x.as_secs_f64() < 1.5 * lo + 1e-9);
            }
        }
    }
}
