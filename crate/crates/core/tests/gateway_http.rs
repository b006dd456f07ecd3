//! The HTTP transport against a throwaway local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use coverify::corpus::{Direction, FunctionUnit, Language};
use coverify::gateway::{Gateway, GatewayError, HttpTransport, ModelEndpoint, TemplateSet};

struct Seen {
    path: String,
    auth: Option<String>,
    body: serde_json::Value,
}

/// Serve `replies` (status, body) in order, one per connection.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    std::thread::spawn(move || {
        for (status, body) in replies {
            let Ok((mut stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut len = 0;
            let mut auth = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap();
                match k.to_ascii_lowercase().as_str() {
                    "content-length" => len = v.trim().parse().unwrap(),
                    "authorization" => auth = Some(v.trim().to_string()),
                    _ => {}
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                path: request_line.split_whitespace().nth(1).unwrap_or("").to_string(),
                auth,
                body: serde_json::from_slice(&buf).unwrap(),
            });
            let reason = if status == 200 { "OK" } else { "Too Many Requests" };
            let resp = format!(
                "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

fn completion(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn unit() -> FunctionUnit {
    FunctionUnit::from_source(Language::C, "void inc(int *a) { a[0] += 1; }", None, "http").unwrap()
}

#[test]
fn rate_limited_twice_then_served() {
    let ok = completion("[CUDA]\n__global__ void inc(int *a) { a[0] += 1; }\n[/CUDA]");
    let (url, seen) = serve(vec![(429, "{}".into()), (429, "{}".into()), (200, ok)]);
    std::env::set_var("COVERIFY_HTTP_TEST_TOKEN", "tok-123");
    let mut e = ModelEndpoint::new("local", &url, "served-model");
    e.api_key_env = Some("COVERIFY_HTTP_TEST_TOKEN".into());
    e.retry_base_delay = Duration::from_millis(5);
    e.top_k = Some(20);
    let g = Gateway::new(e, TemplateSet::builtin(), Arc::new(HttpTransport::new())).unwrap();
    let out = g.request_translation(&unit(), Direction::CToCuda, 1).unwrap();
    assert_eq!(out[0].source.as_deref(), Some("__global__ void inc(int *a) { a[0] += 1; }"));
    assert_eq!(g.retry_events(), 2);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert_eq!(seen[2].path, "/v1/chat/completions");
    assert_eq!(seen[2].auth.as_deref(), Some("Bearer tok-123"));
    let body = &seen[2].body;
    assert_eq!(body["model"], "served-model");
    assert_eq!(body["temperature"], 1.0);
    assert_eq!(body["top_k"], 20);
    assert_eq!(body["messages"][0]["role"], "system");
    assert!(body["messages"][1]["content"].as_str().unwrap().contains("void inc(int *a)"));
}

#[test]
fn unreachable_endpoint() {
    // Bind and drop to get a port nobody listens on.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut e = ModelEndpoint::new("dead", &format!("http://127.0.0.1:{port}"), "m");
    e.max_retries = 1;
    e.retry_base_delay = Duration::from_millis(1);
    let g = Gateway::new(e, TemplateSet::builtin(), Arc::new(HttpTransport::new())).unwrap();
    match g.request_translation(&unit(), Direction::CToCuda, 1) {
        Err(GatewayError::Unreachable { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("{other:?}"),
    }
}
