//! Minimal HTTP/1.1 server for exercising the remote backends offline.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

pub type Handler = dyn Fn(&str, &serde_json::Value) -> (u16, String) + Send + Sync;

pub struct StubServer {
    pub url: String,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<serde_json::Value>>>,
}

impl StubServer {
    /// Serves `handler(path, json_body)` on a random local port until the
    /// test process exits.
    pub fn start(handler: impl Fn(&str, &serde_json::Value) -> (u16, String) + Send + Sync + 'static) -> StubServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
        let url = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let (h, b) = (hits.clone(), bodies.clone());
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let (handler, h, b) = (handler.clone(), h.clone(), b.clone());
                thread::spawn(move || serve(stream, &*handler, &h, &b));
            }
        });
        StubServer { url, hits, bodies }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn bodies(&self) -> Vec<serde_json::Value> {
        self.bodies.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, handler: &Handler, hits: &AtomicUsize, bodies: &Mutex<Vec<serde_json::Value>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
        return;
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let mut length = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    let json: serde_json::Value = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
    hits.fetch_add(1, Ordering::SeqCst);
    bodies.lock().unwrap().push(json.clone());
    let (status, text) = handler(&path, &json);
    let mut stream = stream;
    let response = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
    let _ = stream.write_all(response.as_bytes());
}

/// A chat-completion answer carrying `content`.
pub fn chat_response(content: &str) -> String {
    serde_json::json!({ "choices": [{ "index": 0, "message": { "role": "assistant", "content": content } }] })
        .to_string()
}

/// The program text of the last user message in a chat request.
pub fn submitted_program(body: &serde_json::Value) -> String {
    let messages = body["messages"].as_array().expect("messages");
    let user =
        messages.iter().rev().find(|m| m["role"] == "user" && m["content"].as_str().unwrap().starts_with("Program:"));
    let content = user.expect("user message")["content"].as_str().unwrap();
    let start = content.find("```python\n").unwrap() + "```python\n".len();
    let end = content.rfind("\n```").unwrap();
    content[start..end].to_string()
}
