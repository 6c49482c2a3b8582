//! HTTP backend contract tests against a local throwaway server: retry
//! schedule, non-retryable auth failures, and credential placement.

use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use assertctl_core::backend::{Backend, BackendError, CompletionRequest, HttpBackend, API_KEY_ENV};

const TEST_KEY: &str = "test-key-123";

/// Serializes tests that touch the credential environment variable.
fn env_lock() -> &'static Mutex<()> {
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(()))
}

struct Seen {
    bodies: Vec<String>,
    auth_headers: Vec<Option<String>>,
}

/// Spins up a local server that answers with `statuses` in order, then
/// shuts down. Returns the base URL and what the server observed.
fn scripted_server(statuses: Vec<u16>) -> (String, Arc<Mutex<Seen>>) {
    let server = tiny_http::Server::http("127.0.0.1:0").expect("bind local server");
    let port = server.server_addr().to_ip().expect("ip listener").port();
    let seen = Arc::new(Mutex::new(Seen { bodies: Vec::new(), auth_headers: Vec::new() }));
    let seen_handle = Arc::clone(&seen);
    std::thread::spawn(move || {
        for status in statuses {
            let Ok(mut request) = server.recv() else { return };
            let mut body = String::new();
            let _ = request.as_reader().read_to_string(&mut body);
            let auth = request
                .headers()
                .iter()
                .find(|h| h.field.as_str().as_str().eq_ignore_ascii_case("authorization"))
                .map(|h| h.value.as_str().to_string());
            {
                let mut seen = seen_handle.lock().unwrap();
                seen.bodies.push(body);
                seen.auth_headers.push(auth);
            }
            let payload = if (200..300).contains(&status) {
                r#"{"choices":[{"message":{"content":"ANSWER: negated"}}]}"#
            } else {
                r#"{"error":"scripted failure"}"#
            };
            let response = tiny_http::Response::from_string(payload)
                .with_status_code(status)
                .with_header(
                    tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
                        .unwrap(),
                );
            let _ = request.respond(response);
        }
    });
    (format!("http://127.0.0.1:{port}"), seen)
}

fn backend_for(url: &str) -> HttpBackend {
    HttpBackend::new(url, "test-model").with_retry_base(Duration::from_millis(2))
}

#[test]
fn recovers_after_three_transient_failures() {
    let _guard = env_lock().lock().unwrap();
    std::env::set_var(API_KEY_ENV, TEST_KEY);
    let (url, seen) = scripted_server(vec![500, 500, 500, 200]);
    let backend = backend_for(&url);
    let response = backend.complete(&CompletionRequest::new("sys", "classify this")).unwrap();
    assert_eq!(response.text, "ANSWER: negated");
    assert_eq!(seen.lock().unwrap().bodies.len(), 4);
}

#[test]
fn auth_failure_is_immediate_and_missing_key_never_hits_the_wire() {
    let _guard = env_lock().lock().unwrap();

    std::env::remove_var(API_KEY_ENV);
    let offline = HttpBackend::new("http://127.0.0.1:9", "test-model");
    assert!(matches!(
        offline.complete(&CompletionRequest::new("", "hello")),
        Err(BackendError::AuthFailure(_))
    ));

    std::env::set_var(API_KEY_ENV, TEST_KEY);
    let (url, seen) = scripted_server(vec![401, 200]);
    let backend = backend_for(&url);
    assert!(matches!(
        backend.complete(&CompletionRequest::new("", "hello")),
        Err(BackendError::AuthFailure(_))
    ));
    // Exactly one request: 401 is not retried.
    assert_eq!(seen.lock().unwrap().bodies.len(), 1);
}

#[test]
fn persistent_rate_limiting_exhausts_retries() {
    let _guard = env_lock().lock().unwrap();
    std::env::set_var(API_KEY_ENV, TEST_KEY);
    let (url, seen) = scripted_server(vec![429, 429, 429, 429]);
    let backend = backend_for(&url);
    assert!(matches!(
        backend.complete(&CompletionRequest::new("", "hello")),
        Err(BackendError::RateLimited(4))
    ));
    assert_eq!(seen.lock().unwrap().bodies.len(), 4);
}

#[test]
fn hard_client_errors_do_not_retry() {
    let _guard = env_lock().lock().unwrap();
    std::env::set_var(API_KEY_ENV, TEST_KEY);
    let (url, seen) = scripted_server(vec![400]);
    let backend = backend_for(&url);
    assert!(matches!(
        backend.complete(&CompletionRequest::new("", "hello")),
        Err(BackendError::Transport(_))
    ));
    assert_eq!(seen.lock().unwrap().bodies.len(), 1);
}

#[test]
fn credential_travels_only_in_the_authorization_header() {
    let _guard = env_lock().lock().unwrap();
    std::env::set_var(API_KEY_ENV, TEST_KEY);
    let (url, seen) = scripted_server(vec![200]);
    let backend = backend_for(&url);
    let mut request = CompletionRequest::new("system text", "user text");
    request.temperature = 0.7;
    request.seed = Some(3);
    backend.complete(&request).unwrap();

    let seen = seen.lock().unwrap();
    let body = &seen.bodies[0];
    assert!(!body.contains(TEST_KEY), "credential leaked into body: {body}");
    assert_eq!(seen.auth_headers[0].as_deref(), Some(format!("Bearer {TEST_KEY}").as_str()));

    // Wire shape: OpenAI chat-completions field names.
    let parsed: serde_json::Value = serde_json::from_str(body).unwrap();
    assert_eq!(parsed["model"], "test-model");
    assert_eq!(parsed["messages"][0]["role"], "system");
    assert_eq!(parsed["messages"][1]["role"], "user");
    assert_eq!(parsed["messages"][1]["content"], "user text");
    assert_eq!(parsed["temperature"], 0.7);
    assert_eq!(parsed["max_tokens"], 512);
    assert_eq!(parsed["seed"], 3);
}
