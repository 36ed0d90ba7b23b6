//! In-process stand-in for the embedding service, speaking the same wire
//! protocol over a loopback socket. Vectors come from [`hash_embed`], so a
//! given text always maps to the same vector.
//!
//! Used by the test suites; it handles one request per connection and is not
//! meant for anything beyond that.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::hash_embed;

#[derive(Debug, Clone)]
pub struct MockConfig {
    pub models: Vec<String>,
    pub dim: usize,
    /// Dimension written into responses; differs from `dim` to provoke
    /// `DimMismatch` on the client.
    pub reported_dim: Option<usize>,
    /// Number of initial embed requests answered with 503.
    pub fail_first: usize,
    pub always_fail: bool,
    /// Answer embed requests with a body that is not valid JSON.
    pub malformed: bool,
    /// Batches larger than this are rejected with 413.
    pub max_batch: usize,
    pub latency: Duration,
    pub ready: bool,
    pub seed: u64,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            models: vec!["xlmr".into()],
            dim: 8,
            reported_dim: None,
            fail_first: 0,
            always_fail: false,
            malformed: false,
            max_batch: 64,
            latency: Duration::ZERO,
            ready: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Default)]
struct Counters {
    embed_requests: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    counters: Arc<Counters>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(config: MockConfig) -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let counters = Arc::new(Counters::default());
        let config = Arc::new(config);

        let handle = {
            let stop = Arc::clone(&stop);
            let counters = Arc::clone(&counters);
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let config = Arc::clone(&config);
                    let counters = Arc::clone(&counters);
                    thread::spawn(move || {
                        let _ = serve(stream, &config, &counters);
                    });
                }
            })
        };
        Ok(MockServer {
            addr,
            stop,
            counters,
            handle: Some(handle),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn embed_requests(&self) -> usize {
        self.counters.embed_requests.load(Ordering::SeqCst)
    }

    /// Highest number of embed requests observed in progress at once.
    pub fn max_in_flight(&self) -> usize {
        self.counters.max_in_flight.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

#[derive(Deserialize)]
struct Request {
    model: String,
    texts: Vec<String>,
}

fn serve(stream: TcpStream, config: &MockConfig, counters: &Counters) -> io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let mut parts = request_line.split_whitespace();
    let (method, path) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
    let (status, payload) = match (method, path) {
        ("GET", "/v1/health") if !config.ready => {
            (503, json!({"error": "models loading"}).to_string())
        }
        ("GET", "/v1/health") => (
            200,
            json!({"status": "ok", "models": config.models}).to_string(),
        ),
        ("POST", "/v1/embed") => embed(&body, config, counters),
        _ => (
            404,
            json!({"error": format!("no route {method} {path}")}).to_string(),
        ),
    };
    respond(stream, status, &payload)
}

fn embed(body: &[u8], config: &MockConfig, counters: &Counters) -> (u16, String) {
    let n = counters.embed_requests.fetch_add(1, Ordering::SeqCst);
    let now = counters.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    counters.max_in_flight.fetch_max(now, Ordering::SeqCst);
    if !config.latency.is_zero() {
        thread::sleep(config.latency);
    }
    let answer = (|| {
        if config.always_fail || n < config.fail_first {
            return (503, json!({"error": "temporarily unavailable"}).to_string());
        }
        let req: Request = match serde_json::from_slice(body) {
            Ok(r) => r,
            Err(e) => return (400, json!({"error": e.to_string()}).to_string()),
        };
        if !config.models.contains(&req.model) {
            return (
                404,
                json!({"error": format!("unknown model {}", req.model)}).to_string(),
            );
        }
        if req.texts.len() > config.max_batch {
            return (413, json!({"error": "batch too large"}).to_string());
        }
        if config.malformed {
            return (200, "{\"model\": \"".to_string());
        }
        let vectors: Vec<Vec<f64>> = req
            .texts
            .iter()
            .map(|t| hash_embed(t, config.dim, config.seed).values)
            .collect();
        let dim = config.reported_dim.unwrap_or(config.dim);
        (
            200,
            json!({"model": req.model, "dim": dim, "vectors": vectors}).to_string(),
        )
    })();
    counters.in_flight.fetch_sub(1, Ordering::SeqCst);
    answer
}

fn respond(mut stream: TcpStream, status: u16, body: &str) -> io::Result<()> {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        413 => "Payload Too Large",
        503 => "Service Unavailable",
        _ => "Error",
    };
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}
