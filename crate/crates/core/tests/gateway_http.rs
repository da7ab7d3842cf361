use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use base64::Engine;
use cov_core::gateway::{BackendConfig, ChatBackend, ChatMessage, GatewayError, OpenAiBackend, Part, Role};

struct Captured {
    headers: Vec<String>,
    body: Vec<u8>,
}

/// Serves one canned (status, body) per connection and records requests.
fn stub_server(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Captured>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let log = Arc::new(Mutex::new(Vec::new()));
    let log2 = Arc::clone(&log);
    thread::spawn(move || {
        for (status, body) in responses {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 {
                    break;
                }
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut buf = vec![0u8; len];
            reader.read_exact(&mut buf).unwrap();
            log2.lock().unwrap().push(Captured { headers, body: buf });
            let mut stream = stream;
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}/v1"), log)
}

fn ok_body(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn config(endpoint: String, key_env: &str) -> BackendConfig {
    BackendConfig {
        endpoint,
        model_name: "stub-model".into(),
        api_key_env: key_env.into(),
        backoff_base_s: 0.01,
        timeout_s: 10.0,
        max_retries: 3,
        ..Default::default()
    }
}

#[test]
fn retries_rate_limits_then_succeeds() {
    let (url, log) = stub_server(vec![
        (429, "{}".into()),
        (429, "{}".into()),
        (200, ok_body("ANSWER: chair")),
    ]);
    let backend = OpenAiBackend::new(config(url, "COV_TEST_UNSET_KEY_1")).unwrap();
    let out = backend.complete(&[ChatMessage::user_text("q")]).unwrap();
    assert_eq!(out, "ANSWER: chair");
    assert_eq!(backend.requests_sent(), 3);
    assert_eq!(log.lock().unwrap().len(), 3);
}

#[test]
fn rate_limit_exhaustion_is_reported() {
    let (url, _log) = stub_server(vec![(429, "{}".into()); 3]);
    let mut cfg = config(url, "COV_TEST_UNSET_KEY_2");
    cfg.max_retries = 2;
    let backend = OpenAiBackend::new(cfg).unwrap();
    let err = backend.complete(&[ChatMessage::user_text("q")]).unwrap_err();
    assert!(matches!(err, GatewayError::RateLimited { attempts: 3 }), "{err:?}");
    assert_eq!(backend.requests_sent(), 3);
}

#[test]
fn auth_failure_is_not_retried() {
    let (url, _log) = stub_server(vec![(401, "{\"error\":\"bad key\"}".into())]);
    let backend = OpenAiBackend::new(config(url, "COV_TEST_UNSET_KEY_3")).unwrap();
    let err = backend.complete(&[ChatMessage::user_text("q")]).unwrap_err();
    assert!(matches!(err, GatewayError::AuthFailure { status: 401, .. }));
    assert_eq!(backend.requests_sent(), 1);
}

#[test]
fn malformed_success_body() {
    let (url, _log) = stub_server(vec![(200, "{\"choices\": []}".into())]);
    let backend = OpenAiBackend::new(config(url, "COV_TEST_UNSET_KEY_4")).unwrap();
    let err = backend.complete(&[ChatMessage::user_text("q")]).unwrap_err();
    assert!(matches!(err, GatewayError::MalformedResponse(_)));
}

#[test]
fn sent_bytes_equal_provided_bytes() {
    let (url, log) = stub_server(vec![(200, ok_body("ok"))]);
    std::env::set_var("COV_TEST_KEY_CAPTURE", "sk-test-123");
    let backend = OpenAiBackend::new(config(url, "COV_TEST_KEY_CAPTURE")).unwrap();
    let image: Vec<u8> = (0..=255u8).collect();
    let text = "Where is the chair? \u{1F4BA} \"quoted\"\n\ttabbed";
    let msgs = [
        ChatMessage::system("system text"),
        ChatMessage::new(
            Role::User,
            vec![
                Part::Text(text.into()),
                Part::Image {
                    data: image.clone(),
                    media_type: "image/png".into(),
                },
            ],
        ),
    ];
    backend.complete(&msgs).unwrap();

    let log = log.lock().unwrap();
    let req = &log[0];
    assert!(req
        .headers
        .iter()
        .any(|h| h.eq_ignore_ascii_case("authorization: Bearer sk-test-123")));
    let v: serde_json::Value = serde_json::from_slice(&req.body).unwrap();
    assert_eq!(v["model"], "stub-model");
    assert_eq!(v["temperature"], 0.0);
    assert_eq!(v["messages"][0]["content"], "system text");
    assert_eq!(v["messages"][1]["content"][0]["text"], text);
    let url = v["messages"][1]["content"][1]["image_url"]["url"].as_str().unwrap();
    let b64 = url.strip_prefix("data:image/png;base64,").unwrap();
    let decoded = base64::engine::general_purpose::STANDARD.decode(b64).unwrap();
    assert_eq!(decoded, image);
}

#[test]
fn too_many_images_rejected_before_sending() {
    let mut cfg = config("http://127.0.0.1:9/v1".into(), "COV_TEST_UNSET_KEY_5");
    cfg.max_images = 1;
    let backend = OpenAiBackend::new(cfg).unwrap();
    let img = Part::Image {
        data: vec![0],
        media_type: "image/png".into(),
    };
    let err = backend
        .complete(&[ChatMessage::new(Role::User, vec![img.clone(), img])])
        .unwrap_err();
    assert!(matches!(err, GatewayError::TooManyImages { count: 2, limit: 1 }));
    assert_eq!(backend.requests_sent(), 0);
}
