//! Wire-level tests for the HTTP completion and embedding clients against a
//! local stub server: response parsing, retry policy, error mapping, auth
//! headers, and the on-disk embedding cache short-circuiting the network.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};

use exemplar::{
    CompletionBackend, DecodingParams, Embedder, EmbedderConfig, EmbedderKind, Error,
    HttpCompletionBackend,
};

struct StubEndpoint {
    url: String,
    requests: Arc<Mutex<Vec<String>>>,
}

/// Serve the queued (status, body) responses one per connection, recording
/// each raw request. The thread ends after the queue drains; a client that
/// comes back for more gets a refused connection.
fn serve(responses: Vec<(u16, &'static str)>) -> StubEndpoint {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let seen = requests.clone();
    std::thread::spawn(move || {
        for (status, body) in responses {
            let (mut stream, _) = match listener.accept() {
                Ok(pair) => pair,
                Err(_) => return,
            };
            let request = read_one_request(&mut stream);
            seen.lock().unwrap().push(request);
            let reason = match status {
                200 => "OK",
                400 => "Bad Request",
                404 => "Not Found",
                429 => "Too Many Requests",
                _ => "Internal Server Error",
            };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
    });
    StubEndpoint { url, requests }
}

fn read_one_request(stream: &mut TcpStream) -> String {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    loop {
        let n = stream.read(&mut chunk).unwrap();
        if n == 0 {
            break;
        }
        buf.extend_from_slice(&chunk[..n]);
        let Some(split) = buf.windows(4).position(|w| w == b"\r\n\r\n") else {
            continue;
        };
        let headers = String::from_utf8_lossy(&buf[..split]).to_lowercase();
        let content_length: usize = headers
            .lines()
            .find_map(|l| l.strip_prefix("content-length:"))
            .map(|v| v.trim().parse().unwrap())
            .unwrap_or(0);
        let mut missing = content_length.saturating_sub(buf.len() - (split + 4));
        while missing > 0 {
            let n = stream.read(&mut chunk).unwrap();
            if n == 0 {
                break;
            }
            buf.extend_from_slice(&chunk[..n]);
            missing = missing.saturating_sub(n);
        }
        break;
    }
    String::from_utf8_lossy(&buf).to_string()
}

fn completion_backend(url: &str, max_retries: u32) -> HttpCompletionBackend {
    HttpCompletionBackend::new(url, "m-live", 5, max_retries, "EXEMPLAR_GATE_NO_KEY").unwrap()
}

fn remote_config(url: &str, max_retries: u32) -> EmbedderConfig {
    EmbedderConfig {
        kind: EmbedderKind::Remote,
        endpoint_url: Some(url.to_string()),
        model_id: "emb-live".to_string(),
        dim: 8,
        timeout_secs: 5,
        max_retries,
        api_key_env: "EXEMPLAR_GATE_NO_KEY".to_string(),
    }
}

const TEXT_CHOICES: &str = r#"{"choices":[{"text":" SELECT 1"}]}"#;
const EMBEDDING_DATA: &str = r#"{"data":[{"embedding":[1,2,3,4,5,6,7,8]}]}"#;

#[test]
fn completion_round_trip_parses_text_choices() {
    let stub = serve(vec![(200, TEXT_CHOICES)]);
    let backend = completion_backend(&stub.url, 0);
    let got = backend
        .complete("Question: q\nSQL:", &DecodingParams::default())
        .unwrap();
    assert_eq!(got, vec![" SELECT 1".to_string()]);

    let requests = stub.requests.lock().unwrap();
    assert_eq!(requests.len(), 1);
    assert!(requests[0].contains(r#""model":"m-live""#));
    assert!(requests[0].contains(r#""max_tokens":200"#));
    assert!(requests[0].contains(r#""n":1"#));
}

#[test]
fn completion_parses_chat_style_choices() {
    let stub = serve(vec![(200, r#"{"choices":[{"message":{"content":" hi there"}}]}"#)]);
    let backend = completion_backend(&stub.url, 0);
    let got = backend.complete("p", &DecodingParams::default()).unwrap();
    assert_eq!(got, vec![" hi there".to_string()]);
}

#[test]
fn completion_retries_server_error_then_succeeds() {
    let stub = serve(vec![(500, "boom"), (200, TEXT_CHOICES)]);
    let backend = completion_backend(&stub.url, 2);
    let got = backend.complete("p", &DecodingParams::default()).unwrap();
    assert_eq!(got, vec![" SELECT 1".to_string()]);
    assert_eq!(stub.requests.lock().unwrap().len(), 2);
}

#[test]
fn completion_gives_up_after_retry_budget() {
    let stub = serve(vec![(500, "a"), (500, "b")]);
    let backend = completion_backend(&stub.url, 1);
    let err = backend.complete("p", &DecodingParams::default()).unwrap_err();
    match err {
        Error::Transport(msg) => assert!(msg.contains("after 2 attempts"), "message: {msg}"),
        other => panic!("expected transport error, got {other:?}"),
    }
    assert_eq!(stub.requests.lock().unwrap().len(), 2);
}

#[test]
fn completion_maps_context_overflow_to_budget_error_without_retry() {
    let stub = serve(vec![(400, "maximum context length is 4096 tokens")]);
    let backend = completion_backend(&stub.url, 3);
    let err = backend.complete("p", &DecodingParams::default()).unwrap_err();
    assert!(
        matches!(err, Error::BudgetExceeded(_)),
        "expected budget error, got {err:?}"
    );
    assert_eq!(stub.requests.lock().unwrap().len(), 1, "a fatal status must not retry");
}

#[test]
fn completion_treats_other_4xx_as_fatal() {
    let stub = serve(vec![(404, "nope")]);
    let backend = completion_backend(&stub.url, 3);
    let err = backend.complete("p", &DecodingParams::default()).unwrap_err();
    match err {
        Error::Transport(msg) => assert!(msg.contains("404"), "message: {msg}"),
        other => panic!("expected transport error, got {other:?}"),
    }
    assert_eq!(stub.requests.lock().unwrap().len(), 1);
}

#[test]
fn completion_sends_bearer_token_from_env() {
    std::env::set_var("EXEMPLAR_GATE_TOKEN", "sekret-42");
    let stub = serve(vec![(200, TEXT_CHOICES)]);
    let backend =
        HttpCompletionBackend::new(&stub.url, "m-live", 5, 0, "EXEMPLAR_GATE_TOKEN").unwrap();
    backend.complete("p", &DecodingParams::default()).unwrap();
    let requests = stub.requests.lock().unwrap();
    assert!(
        requests[0].to_lowercase().contains("authorization: bearer sekret-42"),
        "request lacked the bearer header:\n{}",
        requests[0]
    );
}

#[test]
fn remote_embedding_round_trip_then_cache_short_circuits() {
    let dir = tempfile::tempdir().unwrap();
    let stub = serve(vec![(200, EMBEDDING_DATA)]);
    let embedder = Embedder::new(remote_config(&stub.url, 0))
        .unwrap()
        .with_cache_dir(dir.path())
        .unwrap();

    let first = embedder.embed_text("alpha beta").unwrap();
    assert_eq!(first.values, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    assert_eq!(first.model_id, "emb-live");

    // whitespace-variant text normalizes to the same cache key
    let second = embedder.embed_text("  alpha   beta ").unwrap();
    assert_eq!(second, first);
    assert_eq!(stub.requests.lock().unwrap().len(), 1, "second call must hit the cache");

    // a fresh embedder over the same cache dir never reaches the network:
    // the stub has drained, so any request would fail
    let reopened = Embedder::new(remote_config(&stub.url, 0))
        .unwrap()
        .with_cache_dir(dir.path())
        .unwrap();
    assert_eq!(reopened.embed_text("alpha beta").unwrap(), first);
}

#[test]
fn remote_embedding_retries_then_succeeds() {
    let stub = serve(vec![(429, "slow down"), (200, EMBEDDING_DATA)]);
    let embedder = Embedder::new(remote_config(&stub.url, 2)).unwrap();
    let got = embedder.embed_text("gamma").unwrap();
    assert_eq!(got.dim(), 8);
    assert_eq!(stub.requests.lock().unwrap().len(), 2);
}

#[test]
fn remote_embedding_rejects_wrong_dimension() {
    let stub = serve(vec![(200, r#"{"data":[{"embedding":[1,2,3,4]}]}"#)]);
    let embedder = Embedder::new(remote_config(&stub.url, 0)).unwrap();
    let err = embedder.embed_text("delta").unwrap_err();
    assert!(
        matches!(err, Error::DimensionMismatch { left: 4, right: 8 }),
        "got {err:?}"
    );
}
