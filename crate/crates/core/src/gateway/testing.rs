//! A tiny chat-completions server double for exercising [`RemoteBackend`]
//! (timeouts, 5xx, success) without network access.
//!
//! [`RemoteBackend`]: super::RemoteBackend

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use parking_lot::Mutex;

/// What the server does with one incoming request.
#[derive(Debug, Clone)]
pub enum Behavior {
    /// Accept the request, then stay silent for this long before closing.
    Hang(Duration),
    /// Reply with an empty body and this status.
    Status(u16),
    /// Reply 200 with a chat-completions body whose first choice is this text.
    Reply(String),
}

/// A captured request.
#[derive(Debug, Clone)]
pub struct Captured {
    pub head: String,
    pub body: String,
}

/// Serves [`Behavior`]s in order; the last one repeats.
pub struct FlakyServer {
    addr: SocketAddr,
    hits: Arc<AtomicUsize>,
    captured: Arc<Mutex<Vec<Captured>>>,
    stop: Arc<AtomicBool>,
}

impl FlakyServer {
    pub fn start(script: Vec<Behavior>) -> std::io::Result<Self> {
        assert!(!script.is_empty(), "behavior script must not be empty");
        let listener = TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let hits = Arc::new(AtomicUsize::new(0));
        let captured = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let script = Arc::new(script);
        {
            let (hits, captured, stop) = (hits.clone(), captured.clone(), stop.clone());
            thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            let n = hits.fetch_add(1, Ordering::SeqCst);
                            let behavior = script[n.min(script.len() - 1)].clone();
                            let captured = captured.clone();
                            thread::spawn(move || serve_one(stream, behavior, captured));
                        }
                        Err(_) => thread::sleep(Duration::from_millis(2)),
                    }
                }
            });
        }
        Ok(FlakyServer {
            addr,
            hits,
            captured,
            stop,
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    /// Requests received so far.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn captured(&self) -> Vec<Captured> {
        self.captured.lock().clone()
    }
}

impl Drop for FlakyServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
    }
}

/// A chat-completions response body carrying `text`.
pub fn completion_body(text: &str) -> String {
    serde_json::json!({
        "id": "chatcmpl-test",
        "object": "chat.completion",
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": text},
            "finish_reason": "stop"
        }]
    })
    .to_string()
}

fn serve_one(stream: TcpStream, behavior: Behavior, captured: Arc<Mutex<Vec<Captured>>>) {
    let _ = stream.set_nonblocking(false);
    let mut reader = BufReader::new(match stream.try_clone() {
        Ok(s) => s,
        Err(_) => return,
    });
    let mut head = String::new();
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => return,
            Ok(_) => {}
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            content_length = v.trim().parse().unwrap_or(0);
        }
        let end = line == "\r\n";
        head.push_str(&line);
        if end {
            break;
        }
    }
    let mut body = vec![0u8; content_length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    captured.lock().push(Captured {
        head,
        body: String::from_utf8_lossy(&body).into_owned(),
    });

    let mut stream = stream;
    let (status, payload) = match behavior {
        Behavior::Hang(d) => {
            thread::sleep(d);
            return;
        }
        Behavior::Status(code) => (code, String::new()),
        Behavior::Reply(text) => (200, completion_body(&text)),
    };
    let response = format!(
        "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
        payload.len()
    );
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
}
