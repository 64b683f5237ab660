//! Minimal scripted HTTP/1.1 server for gateway tests.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

#[derive(Debug, Clone)]
pub struct Recorded {
    pub path: String,
    pub authorization: Option<String>,
    pub body: String,
}

type Handler = dyn Fn(usize, &str, &str) -> (u16, String) + Send + Sync;

/// Each request is answered by `handler(n, path, body)` where `n` counts
/// requests from zero. Connections are closed after one response.
pub struct MockServer {
    pub base_url: String,
    hits: Arc<AtomicUsize>,
    log: Arc<Mutex<Vec<Recorded>>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(usize, &str, &str) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let log = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        {
            let hits = hits.clone();
            let log = log.clone();
            thread::spawn(move || {
                for stream in listener.incoming() {
                    let Ok(stream) = stream else { break };
                    let (hits, log, handler) = (hits.clone(), log.clone(), handler.clone());
                    thread::spawn(move || serve(stream, &hits, &log, &*handler));
                }
            });
        }
        Self {
            base_url: format!("http://{addr}"),
            hits,
            log,
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<Recorded> {
        self.log.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, hits: &AtomicUsize, log: &Mutex<Vec<Recorded>>, handler: &Handler) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
        return;
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let mut content_length = 0usize;
    let mut authorization = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            } else if k.eq_ignore_ascii_case("authorization") {
                authorization = Some(v.trim().to_string());
            }
        }
    }
    let mut body = vec![0u8; content_length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let body = String::from_utf8_lossy(&body).into_owned();
    let n = hits.fetch_add(1, Ordering::SeqCst);
    log.lock().unwrap().push(Recorded {
        path: path.clone(),
        authorization,
        body: body.clone(),
    });
    let (status, reply) = handler(n, &path, &body);
    let response = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    );
    let mut stream = stream;
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
}

pub fn chat_reply(content: &str, usage: Option<(u64, u64)>) -> String {
    let mut v = serde_json::json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
    });
    if let Some((p, c)) = usage {
        v["usage"] = serde_json::json!({"prompt_tokens": p, "completion_tokens": c, "total_tokens": p + c});
    }
    v.to_string()
}

pub fn embed_reply(vectors: &[Vec<f64>], tokens: Option<u64>) -> String {
    let data: Vec<_> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| serde_json::json!({"index": i, "embedding": v}))
        .collect();
    let mut v = serde_json::json!({ "data": data });
    if let Some(t) = tokens {
        v["usage"] = serde_json::json!({"prompt_tokens": t, "total_tokens": t});
    }
    v.to_string()
}
