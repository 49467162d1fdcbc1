//! Rebuilds the committed grammar-response cache by running the real HTTP
//! client against a loopback toy service. Run with `--ignored` after
//! changing the synthetic corpus or the sampling settings.

mod common;

use common::{config_copy, fixture_dir, nli_ok, start_toy_server};
use nli_core::grammar::{ClientConfig, GrammarClient, ResponseCache};
use serde_json::Value;

#[test]
#[ignore]
fn regenerate_grammar_cache() {
    let fx = fixture_dir();
    let cache = fx.join("grammar-cache");
    let _ = std::fs::remove_dir_all(&cache);
    std::fs::create_dir_all(&cache).unwrap();
    let server = start_toy_server();
    let tmp = tempfile::tempdir().unwrap();
    let endpoint = server.endpoint.clone();
    let cfg = config_copy(tmp.path(), |v| {
        v["grammar"]["offline"] = Value::Bool(false);
        v["grammar"]["endpoint"] = Value::String(endpoint);
    });
    let cfg = cfg.to_str().unwrap();
    nli_ok(&["prepare", "-c", cfg]);
    nli_ok(&["grammar-cache", "-c", cfg]);

    let client = GrammarClient::http(
        ClientConfig {
            endpoint: server.endpoint.clone(),
            ..ClientConfig::default()
        },
        Some(ResponseCache::new(&cache)),
    )
    .unwrap();
    client.check_text(&["She like the park."]).unwrap();
    eprintln!("{} requests served", server.requests.load(std::sync::atomic::Ordering::SeqCst));
}
