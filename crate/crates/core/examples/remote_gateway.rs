//! The remote chat backend: timeouts, retries with backoff, key handling.
//!
//! Runs against a local stand-in server, so no network access or real key
//! is needed.
//!
//! cargo run --example remote_gateway

use std::time::{Duration, Instant};

use stagewise::gateway::testing::{Behavior, FlakyServer};
use stagewise::gateway::{BackendConfig, BackendKind, ChatBackend, ChatMessage, CompletionRequest, RemoteBackend};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // The key is only ever read from the environment variable named here.
    std::env::set_var("DEMO_GATEWAY_KEY", "demo-key-not-secret");
    let server = FlakyServer::start(vec![
        Behavior::Hang(Duration::from_secs(2)),
        Behavior::Status(503),
        Behavior::Reply("I'm here. What's on your mind?".into()),
    ])?;
    let config = BackendConfig {
        kind: BackendKind::Remote,
        endpoint_url: server.url(),
        api_key_env: "DEMO_GATEWAY_KEY".into(),
        timeout_ms: 300,
        max_retries: 2,
        backoff_base_ms: 100,
        ..BackendConfig::default()
    };
    let bound = config.latency_bound_ms();
    let backend = RemoteBackend::new(config)?;
    println!("{backend:?}");

    let messages = [
        ChatMessage::system("You are a supportive listener."),
        ChatMessage::user("Hi."),
    ];
    let started = Instant::now();
    let reply = backend.complete(&CompletionRequest::new(&messages, 1))?;
    println!(
        "reply {reply:?} after {} attempts in {:?} (bound {bound} ms)",
        backend.attempts(),
        started.elapsed()
    );
    Ok(())
}
