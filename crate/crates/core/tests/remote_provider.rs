use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use agentcycle::remote::RemoteProvider;
use agentcycle::semantic::{builtin_embed, EmbeddingProvider};
use agentcycle::Error;

/// Serves `requests` embedding calls, answering with `respond(texts)`.
fn serve<F>(requests: usize, respond: F) -> String
where
    F: Fn(Vec<String>) -> (u16, String) + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming().take(requests) {
            handle(stream.unwrap(), &respond);
        }
    });
    format!("http://{addr}/embed")
}

fn handle<F: Fn(Vec<String>) -> (u16, String)>(stream: TcpStream, respond: &F) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        if line == "\r\n" || line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    let request: serde_json::Value = serde_json::from_slice(&body).unwrap();
    let texts = request["texts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t.as_str().unwrap().to_string())
        .collect();
    let (status, body) = respond(texts);
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
}

fn builtin_response(texts: Vec<String>) -> (u16, String) {
    let vectors: Vec<Vec<f64>> = texts.iter().map(|t| builtin_embed(t, 32).0).collect();
    (200, serde_json::json!({ "vectors": vectors }).to_string())
}

const TIMEOUT: Duration = Duration::from_secs(5);

#[test]
fn embeds_through_endpoint() {
    let url = serve(1, builtin_response);
    let p = RemoteProvider::new(url, TIMEOUT, None).unwrap();
    let v = p
        .embed_batch(&["apple shares rose", "crude oil fell"])
        .unwrap();
    assert_eq!(v.len(), 2);
    assert_eq!(v[0], builtin_embed("apple shares rose", 32));
    assert_eq!(p.dimension(), 32);
}

#[test]
fn rejects_wrong_dimension() {
    let url = serve(1, builtin_response);
    let p = RemoteProvider::new(url, TIMEOUT, Some(64)).unwrap();
    let err = p.embed("apple shares rose").unwrap_err();
    assert!(matches!(err, Error::Provider(_)), "{err}");
}

#[test]
fn rejects_short_response() {
    let url = serve(1, |_| (200, r#"{"vectors": []}"#.to_string()));
    let p = RemoteProvider::new(url, TIMEOUT, None).unwrap();
    assert!(matches!(p.embed("abc def"), Err(Error::Provider(_))));
}

#[test]
fn server_error_is_provider_error() {
    let url = serve(1, |_| (500, "{}".to_string()));
    let p = RemoteProvider::new(url, TIMEOUT, None).unwrap();
    assert!(matches!(p.embed("abc def"), Err(Error::Provider(_))));
}

#[test]
fn unreachable_endpoint_is_provider_error() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let p = RemoteProvider::new(format!("http://127.0.0.1:{port}/embed"), TIMEOUT, None).unwrap();
    assert!(matches!(p.embed("abc def"), Err(Error::Provider(_))));
}

#[test]
fn empty_endpoint_is_config_error() {
    let err = RemoteProvider::new("", TIMEOUT, None).err().unwrap();
    assert!(err.is_config());
}
