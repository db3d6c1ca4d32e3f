//! Event-sourced sessions: record a dialogue, persist it, rebuild it.
//!
//! cargo run --example replay_session

use stagewise::clock::LogicalClock;
use stagewise::detector::DetectorConfig;
use stagewise::engine::DialogueConfig;
use stagewise::engine::{Engine, SessionFlags};
use stagewise::gateway::ScriptedBackend;
use stagewise::session::{replay, EventStore, FileStore, SessionLog};
use std::sync::Arc;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let backend = ScriptedBackend::from_turns([
        "It sounds like a lot is resting on you. What weighs on you most?",
        "Losing sleep over it would wear anyone down. When did that start?",
    ]);
    let engine = Engine::bundled(Arc::new(backend), DetectorConfig::default(), DialogueConfig::default());
    let clock = LogicalClock::default();
    let mut log = SessionLog::new("replay-demo");
    for text in ["Work has been crushing me.", "I barely sleep these days."] {
        let turn = engine.handle_message(&mut log, text, &SessionFlags::default(), &clock)?;
        println!("user:  {text}\nagent: {}", turn.reply);
    }

    let dir = tempfile::tempdir()?;
    let store = FileStore::open(dir.path())?;
    store.append_all(log.events())?;
    let loaded = store.load(log.id())?;
    let rebuilt = replay(&loaded.events)?;
    println!("\n{} events written to {}", loaded.events.len(), dir.path().display());
    println!("replayed stage {}, turn {}", rebuilt.stage, rebuilt.turn_index);
    println!(
        "replay matches live state: {}",
        serde_json::to_value(&rebuilt)? == serde_json::to_value(log.state())?
    );

    // A record cut off mid-write is dropped, the rest still loads.
    let path = dir.path().join(format!("{}.events.jsonl", log.id()));
    let raw = std::fs::read_to_string(&path)?;
    std::fs::write(&path, &raw[..raw.len() - 25])?;
    let torn = store.load(log.id())?;
    println!(
        "after tearing the last line: {} events, truncated = {}",
        torn.events.len(),
        torn.truncated
    );
    Ok(())
}
