//! The HTTP service on an ephemeral port, driven by a blocking client.
//!
//! cargo run --example http_service

use std::sync::Arc;

use serde_json::{json, Value};
use stagewise::clock::SystemClock;
use stagewise::detector::DetectorConfig;
use stagewise::engine::{DialogueConfig, Engine};
use stagewise::gateway::ScriptedBackend;
use stagewise::service::{router, SessionManager};
use stagewise::session::MemoryStore;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let backend = ScriptedBackend::from_turns([
        "<think>Current stage: Exploration; Focus: Work\nDeadlines → stress</think>\nThat sounds like a heavy load. What part of it is hardest?",
    ]);
    let engine = Engine::bundled(Arc::new(backend), DetectorConfig::default(), DialogueConfig::default());
    let manager = Arc::new(SessionManager::new(
        engine,
        Arc::new(MemoryStore::new()),
        Arc::new(SystemClock),
    ));

    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let base = format!("http://{}", listener.local_addr()?);
    rt.spawn(async move { axum::serve(listener, router(manager)).await });

    let http = reqwest::blocking::Client::new();
    let created: Value = http
        .post(format!("{base}/v1/sessions"))
        .json(&json!({}))
        .send()?
        .json()?;
    let id = created["session_id"].as_str().unwrap_or_default();
    println!("created {created}");

    for text in ["Deadlines keep piling up at work.", "I want to end it all."] {
        let turn: Value = http
            .post(format!("{base}/v1/sessions/{id}/messages"))
            .json(&json!({ "text": text }))
            .send()?
            .json()?;
        println!(
            "\n> {text}\n[{}] {}",
            turn["stage_after"].as_str().unwrap_or_default(),
            turn["reply"].as_str().unwrap_or_default()
        );
    }

    let state: Value = http.get(format!("{base}/v1/sessions/{id}/state")).send()?.json()?;
    println!("\nstage {} crisis_flag {}", state["stage"], state["crisis_flag"]);
    let transcript = http.get(format!("{base}/v1/sessions/{id}/transcript")).send()?.text()?;
    println!("transcript has {} events", transcript.lines().count());
    Ok(())
}
