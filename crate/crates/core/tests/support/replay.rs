//! Replays recorded HTTP exchanges against the remote adapter on a loopback socket.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use osst::backend::{BackendDescriptor, EchoScoreRequest, LanguageModel, RemoteModel, RetryPolicy};
use osst::model::{ByteSpan, TokenLogprob};
use osst::BackendError;
use serde::Deserialize;
use serde_json::Value;

#[derive(Debug, Deserialize)]
pub struct Fixture {
    pub description: String,
    pub api_key: Option<String>,
    pub call: Call,
    pub exchanges: Vec<Exchange>,
    pub expect: Expect,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Call {
    EchoScore { prompt: String, span: (usize, usize) },
    Generate { prompt: String },
}

#[derive(Debug, Deserialize)]
pub struct Exchange {
    pub request: RecordedRequest,
    pub response: RecordedResponse,
}

#[derive(Debug, Deserialize)]
pub struct RecordedRequest {
    pub method: String,
    pub path: String,
    #[serde(default)]
    pub headers: std::collections::BTreeMap<String, String>,
    #[serde(default)]
    pub absent_headers: Vec<String>,
    pub body: Value,
}

#[derive(Debug, Deserialize)]
pub struct RecordedResponse {
    pub status: u16,
    #[serde(default)]
    pub headers: std::collections::BTreeMap<String, String>,
    pub body: Value,
}

#[derive(Debug, Deserialize)]
pub struct Expect {
    pub tokens: Option<Vec<TokenLogprob>>,
    pub text: Option<String>,
    pub error: Option<String>,
    pub min_elapsed_ms: Option<u64>,
}

pub fn load_fixtures(dir: &Path) -> Vec<(String, Fixture)> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .expect("fixture dir")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let fx = serde_json::from_str(&std::fs::read_to_string(&p).unwrap())
                .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            (name, fx)
        })
        .collect()
}

struct Received {
    method: String,
    path: String,
    headers: Vec<(String, String)>,
    body: Vec<u8>,
}

fn read_request(stream: &mut TcpStream) -> std::io::Result<Received> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut headers = Vec::new();
    loop {
        line.clear();
        reader.read_line(&mut line)?;
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
        }
    }
    let header = |name: &str| headers.iter().find(|(k, _)| k == name).map(|(_, v)| v.clone());
    let mut body = Vec::new();
    if let Some(len) = header("content-length") {
        body.resize(len.parse().unwrap_or(0), 0);
        reader.read_exact(&mut body)?;
    } else if header("transfer-encoding").is_some_and(|v| v.eq_ignore_ascii_case("chunked")) {
        loop {
            line.clear();
            reader.read_line(&mut line)?;
            let size = usize::from_str_radix(line.trim(), 16).unwrap_or(0);
            let mut chunk = vec![0; size + 2];
            reader.read_exact(&mut chunk)?;
            if size == 0 {
                break;
            }
            body.extend_from_slice(&chunk[..size]);
        }
    }
    Ok(Received {
        method,
        path,
        headers,
        body,
    })
}

fn check_request(i: usize, recorded: &RecordedRequest, got: &Received) -> Vec<String> {
    let mut problems = Vec::new();
    if got.method != recorded.method || got.path != recorded.path {
        problems.push(format!(
            "exchange {i}: expected {} {}, got {} {}",
            recorded.method, recorded.path, got.method, got.path
        ));
    }
    let find = |name: &str| got.headers.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str());
    for (name, value) in &recorded.headers {
        let name = name.to_ascii_lowercase();
        match find(&name) {
            Some(v) if v == value => {}
            other => problems.push(format!("exchange {i}: header {name} = {other:?}, expected {value:?}")),
        }
    }
    for name in &recorded.absent_headers {
        if find(&name.to_ascii_lowercase()).is_some() {
            problems.push(format!("exchange {i}: header {name} should be absent"));
        }
    }
    match serde_json::from_slice::<Value>(&got.body) {
        Ok(body) if body == recorded.body => {}
        Ok(body) => problems.push(format!("exchange {i}: body {body} != recorded {}", recorded.body)),
        Err(e) => problems.push(format!("exchange {i}: request body is not JSON: {e}")),
    }
    problems
}

fn write_response(stream: &mut TcpStream, response: &RecordedResponse) -> std::io::Result<()> {
    let body = match &response.body {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    let mut head = format!(
        "HTTP/1.1 {} Recorded\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n",
        response.status,
        body.len()
    );
    for (k, v) in &response.headers {
        head.push_str(&format!("{k}: {v}\r\n"));
    }
    head.push_str("\r\n");
    stream.write_all(head.as_bytes())?;
    stream.write_all(body.as_bytes())?;
    stream.flush()
}

/// Serves the recorded responses in order and returns request mismatches.
fn serve(listener: TcpListener, exchanges: Vec<Exchange>) -> Vec<String> {
    listener.set_nonblocking(true).unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let mut problems = Vec::new();
    for (i, exchange) in exchanges.iter().enumerate() {
        let mut stream = loop {
            match listener.accept() {
                Ok((s, _)) => break s,
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock && Instant::now() < deadline => {
                    thread::sleep(Duration::from_millis(5));
                }
                Err(_) => {
                    problems.push(format!("exchange {i}: no request arrived"));
                    return problems;
                }
            }
        };
        stream.set_nonblocking(false).unwrap();
        match read_request(&mut stream) {
            Ok(got) => problems.extend(check_request(i, &exchange.request, &got)),
            Err(e) => problems.push(format!("exchange {i}: unreadable request: {e}")),
        }
        if let Err(e) = write_response(&mut stream, &exchange.response) {
            problems.push(format!("exchange {i}: write failed: {e}"));
        }
    }
    problems
}

fn error_name(e: &BackendError) -> &'static str {
    match e {
        BackendError::InvalidRequest(_) => "invalid_request",
        BackendError::MissingOffsets => "missing_offsets",
        BackendError::NonFinite { .. } => "non_finite",
        BackendError::EmptySpan => "empty_span",
        BackendError::MalformedResponse(_) => "malformed_response",
        BackendError::Status { .. } => "status",
        BackendError::Transport(_) => "transport",
        _ => "other",
    }
}

/// Runs one fixture end to end; `Err` lists every discrepancy.
pub fn replay(fixture: Fixture) -> Result<(), String> {
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let endpoint = format!("http://{}/v1", listener.local_addr().unwrap());
    let n_exchanges = fixture.exchanges.len();
    let server = thread::spawn(move || serve(listener, fixture.exchanges));

    let model = RemoteModel::new(BackendDescriptor::remote("m", endpoint))
        .map_err(|e| e.to_string())?
        .with_api_key(fixture.api_key.clone())
        .with_retry(RetryPolicy {
            max_attempts: n_exchanges.max(1) as u32,
            base_delay: Duration::from_millis(10),
            max_delay: Duration::from_secs(5),
        });

    let started = Instant::now();
    let mut problems = Vec::new();
    match &fixture.call {
        Call::EchoScore { prompt, span } => {
            let req = EchoScoreRequest::new(prompt.clone(), ByteSpan::new(span.0, span.1))
                .map_err(|e| e.to_string())?;
            match (model.echo_score(&req), &fixture.expect) {
                (Ok(tokens), Expect { tokens: Some(expected), .. }) => {
                    if &tokens != expected {
                        problems.push(format!("tokens {tokens:?} != expected {expected:?}"));
                    }
                }
                (Err(e), Expect { error: Some(expected), .. }) => {
                    if error_name(&e) != expected {
                        problems.push(format!("error {e} is not {expected}"));
                    }
                }
                (got, _) => problems.push(format!("unexpected outcome {got:?}")),
            }
        }
        Call::Generate { prompt } => match (model.generate(prompt), &fixture.expect.text) {
            (Ok(text), Some(expected)) if &text == expected => {}
            (got, expected) => problems.push(format!("generate gave {got:?}, expected {expected:?}")),
        },
    }
    let elapsed = started.elapsed();
    if let Some(min) = fixture.expect.min_elapsed_ms {
        if elapsed < Duration::from_millis(min) {
            problems.push(format!("retried after {elapsed:?}, before the advertised {min} ms"));
        }
    }
    problems.extend(server.join().map_err(|_| "server thread panicked".to_string())?);
    if problems.is_empty() {
        Ok(())
    } else {
        Err(format!("{}: {}", fixture.description, problems.join("; ")))
    }
}
