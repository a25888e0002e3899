//! Minimal scripted HTTP server for exercising the remote backends without a
//! network. Listens on an ephemeral local port, answers each POST from a
//! response script or a routing closure, and records every request it saw.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::thread::JoinHandle;

/// One request as the server saw it.
#[derive(Debug, Clone)]
pub struct Recorded {
    pub path: String,
    pub auth: Option<String>,
    pub body: serde_json::Value,
}

type Router = Box<dyn Fn(&str, &serde_json::Value) -> (u16, String) + Send + 'static>;

pub struct MockServer {
    addr: SocketAddr,
    requests: Arc<Mutex<Vec<Recorded>>>,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

/// The API key every test endpoint reads. Set exactly once per process so
/// parallel tests never race on the environment.
pub const API_KEY_ENV: &str = "MOCK_API_KEY";
pub const API_KEY: &str = "test-key-123";

pub fn init_env() {
    static INIT: OnceLock<()> = OnceLock::new();
    INIT.get_or_init(|| std::env::set_var(API_KEY_ENV, API_KEY));
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        401 => "Unauthorized",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Response",
    }
}

fn handle_connection(
    mut stream: TcpStream,
    router: &Router,
    requests: &Mutex<Vec<Recorded>>,
) -> std::io::Result<()> {
    // Read until the blank line ending the headers, then Content-Length more.
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            return Ok(());
        }
        buf.extend_from_slice(&chunk[..n]);
        if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
            break pos + 4;
        }
    };
    let head = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let mut lines = head.lines();
    let request_line = lines.next().unwrap_or_default();
    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
    let mut content_length = 0usize;
    let mut auth = None;
    for line in lines {
        let lower = line.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            content_length = v.trim().parse().unwrap_or(0);
        }
        if lower.starts_with("authorization:") {
            auth = Some(line.split_once(':').map(|(_, v)| v).unwrap_or("").trim().to_string());
        }
    }
    while buf.len() < header_end + content_length {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            break;
        }
        buf.extend_from_slice(&chunk[..n]);
    }
    let body: serde_json::Value =
        serde_json::from_slice(&buf[header_end..header_end + content_length.min(buf.len() - header_end)])
            .unwrap_or(serde_json::Value::Null);

    let (status, response_body) = router(&path, &body);
    requests.lock().unwrap().push(Recorded { path, auth, body });

    let response = format!(
        "HTTP/1.1 {status} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{response_body}",
        reason(status),
        response_body.len(),
    );
    stream.write_all(response.as_bytes())?;
    stream.flush()
}

impl MockServer {
    pub fn start(router: Router) -> MockServer {
        init_env();
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        let addr = listener.local_addr().expect("local addr");
        let requests: Arc<Mutex<Vec<Recorded>>> = Arc::new(Mutex::new(Vec::new()));
        let shutdown = Arc::new(AtomicBool::new(false));
        let thread_requests = Arc::clone(&requests);
        let thread_shutdown = Arc::clone(&shutdown);
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if thread_shutdown.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { break };
                let _ = handle_connection(stream, &router, &thread_requests);
            }
        });
        MockServer {
            addr,
            requests,
            shutdown,
            handle: Some(handle),
        }
    }

    /// Answer requests in order from a fixed script; anything past the end
    /// gets a 500 so an over-chatty client fails loudly.
    pub fn scripted(responses: Vec<(u16, String)>) -> MockServer {
        let queue = Mutex::new(VecDeque::from(responses));
        MockServer::start(Box::new(move |_path, _body| {
            queue
                .lock()
                .unwrap()
                .pop_front()
                .unwrap_or((500, "{\"error\":\"script exhausted\"}".into()))
        }))
    }

    /// Base URL to hand to a RemoteEndpoint.
    pub fn url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn hits(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn requests(&self) -> Vec<Recorded> {
        self.requests.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Wake the accept loop so the thread can observe the flag.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

/// A well-formed chat completion body with the given caption text.
pub fn chat_response(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}]
    })
    .to_string()
}

/// A well-formed embeddings body with the given vector.
pub fn embedding_response(vector: &[f64]) -> String {
    serde_json::json!({
        "data": [{"embedding": vector}]
    })
    .to_string()
}
