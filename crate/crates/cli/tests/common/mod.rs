#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use nli_core::synth::toy_grammar_response;
use serde_json::Value;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic")
}

pub fn nli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nli"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("NLI_GRAMMAR_ENDPOINT")
        .output()
        .expect("nli binary runs")
}

pub fn nli_ok(args: &[&str]) -> Output {
    let out = nli(args);
    assert!(
        out.status.success(),
        "nli {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Writes a copy of the fixture config with absolute input paths and the
/// given edits applied to its JSON.
pub fn config_copy(dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let fx = fixture_dir();
    let mut v = read_json(&fx.join("config.json"));
    for key in ["corpus", "tagged_corpus", "cache_dir"] {
        let rel = v["paths"][key].as_str().unwrap().to_string();
        v["paths"][key] = Value::String(fx.join(rel).display().to_string());
    }
    v["paths"]["out_dir"] = Value::String(dir.join("out").display().to_string());
    edit(&mut v);
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    p
}

/// Minimal grammar service on a loopback port: answers `POST /v2/check`
/// with the toy rule set and counts requests.
pub struct ToyServer {
    pub endpoint: String,
    pub requests: Arc<AtomicUsize>,
}

pub fn start_toy_server() -> ToyServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let counter = requests.clone();
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let counter = counter.clone();
            thread::spawn(move || {
                let _ = serve(stream, &counter);
            });
        }
    });
    ToyServer { endpoint, requests }
}

fn serve(stream: TcpStream, counter: &AtomicUsize) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut content_length = 0usize;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h)?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    let (status, payload) = if request_line.starts_with("POST /v2/check ") {
        let text = form_urlencoded::parse(&body)
            .find(|(k, _)| k == "text")
            .map(|(_, v)| v.into_owned())
            .unwrap_or_default();
        counter.fetch_add(1, Ordering::SeqCst);
        ("200 OK", toy_grammar_response(&text))
    } else {
        ("404 Not Found", String::from("{}"))
    };
    let mut w = stream;
    write!(
        w,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    w.flush()
}
