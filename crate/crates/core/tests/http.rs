use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use eqk::promptgen::{generate, GenerationBackend, GenerationParams, HttpBackend};
use eqk::searcheval::{BingEngine, SearchEngine};
use eqk::Error;

struct Captured {
    request_line: String,
    headers: Vec<(String, String)>,
    body: String,
}

impl Captured {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Serves one canned `(status, body)` per connection, in order.
fn serve(replies: Vec<(u16, String)>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = Vec::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap();
                headers.push((k.trim().to_string(), v.trim().to_string()));
            }
            let len = headers
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
                .map_or(0, |(_, v)| v.parse().unwrap());
            let mut buf = vec![0u8; len];
            reader.read_exact(&mut buf).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            stream.flush().unwrap();
            let _ = tx.send(Captured {
                request_line: request_line.trim_end().to_string(),
                headers,
                body: String::from_utf8(buf).unwrap(),
            });
        }
    });
    (format!("http://{addr}"), rx)
}

fn backend(url: &str) -> HttpBackend {
    HttpBackend::new(url, Duration::from_secs(5))
        .unwrap()
        .with_token(Some("secret".into()))
        .with_retries(2, Duration::from_millis(10))
}

#[test]
fn http_backend_posts_input_and_params() {
    let (url, rx) = serve(vec![(200, r#"{"output":"oecd growth forecast","token_count":3}"#.into())]);
    let out = generate(&backend(&url), "The OECD raised its forecast. Search query:", &GenerationParams::default()).unwrap();
    assert_eq!(out, "oecd growth forecast");
    let req = rx.recv().unwrap();
    assert!(req.request_line.starts_with("POST "));
    assert_eq!(req.header("authorization"), Some("Bearer secret"));
    let body: serde_json::Value = serde_json::from_str(&req.body).unwrap();
    assert_eq!(body["input"], "The OECD raised its forecast. Search query:");
    assert_eq!(body["params"]["num_beams"], 10);
    assert_eq!(body["params"]["max_new_tokens"], 16);
}

#[test]
fn http_backend_retries_server_errors() {
    let (url, rx) = serve(vec![
        (503, "{}".into()),
        (200, r#"{"output":"ok","token_count":1}"#.into()),
    ]);
    let g = backend(&url).generate("x", &GenerationParams::default()).unwrap();
    assert_eq!(g.output, "ok");
    assert_eq!(rx.iter().take(2).count(), 2);
}

#[test]
fn http_backend_rejects_overlong_output() {
    let (url, _rx) = serve(vec![
        (200, r#"{"output":"too long","token_count":17}"#.into()),
        (200, r#"{"output":"too long","token_count":17}"#.into()),
    ]);
    match backend(&url).generate("x", &GenerationParams::default()) {
        Err(Error::Backend { attempts, message }) => {
            assert_eq!(attempts, 2);
            assert!(message.contains("17"), "{message}");
        }
        other => panic!("expected backend error, got {other:?}"),
    }
}

#[test]
fn bing_sends_key_and_parses_pages() {
    let body = r#"{"webPages":{"value":[{"url":"https://a.example/1"},{"url":"https://b.example/2"},{"url":"https://c.example/3"}]}}"#;
    let (url, rx) = serve(vec![(200, body.into())]);
    let engine = BingEngine::new(format!("{url}/v7.0/search"), "bing-key", 100.0).unwrap();
    let urls = engine.search("galileo height", 2).unwrap();
    assert_eq!(urls, vec!["https://a.example/1", "https://b.example/2"]);
    let req = rx.recv().unwrap();
    assert!(req.request_line.starts_with("GET /v7.0/search?"), "{}", req.request_line);
    assert!(req.request_line.contains("q=galileo+height"), "{}", req.request_line);
    assert!(req.request_line.contains("count=2"));
    assert_eq!(req.header("ocp-apim-subscription-key"), Some("bing-key"));
}

#[test]
fn bing_without_web_pages_is_empty() {
    let (url, _rx) = serve(vec![(200, "{}".into())]);
    let engine = BingEngine::new(url, "k", 100.0).unwrap();
    assert!(engine.search("nothing", 10).unwrap().is_empty());
}

#[test]
fn bing_http_error_is_a_search_error() {
    let (url, _rx) = serve(vec![(401, "{}".into())]);
    let engine = BingEngine::new(url, "bad", 100.0).unwrap();
    assert!(matches!(engine.search("q", 10), Err(Error::Search { .. })));
}
