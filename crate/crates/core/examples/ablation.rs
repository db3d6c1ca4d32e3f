//! Simulated-user evaluation with an ablation.
//!
//! cargo run --example ablation -- [stage|thinking|both]

use std::path::Path;
use std::sync::Arc;

use stagewise::detector::DetectorConfig;
use stagewise::engine::{DialogueConfig, Engine, SessionFlags};
use stagewise::eval::{self, AblationAxis};
use stagewise::gateway::ScriptedBackend;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let axis: AblationAxis = std::env::args().nth(1).as_deref().unwrap_or("stage").parse()?;
    let assets = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
    let mut personas = eval::load_personas(&assets.join("personas"))?;
    personas.extend(eval::load_personas(&assets.join("adversarial"))?);

    // Each persona brings its own scripted model replies.
    let engine = Engine::bundled(
        Arc::new(ScriptedBackend::default()),
        DetectorConfig::default(),
        DialogueConfig::default(),
    );
    let baseline = SessionFlags::default();
    let report = eval::run_ablation(&personas, &engine, baseline, axis.variant_flags())?;
    println!("{}", eval::render_comparison(&report));
    Ok(())
}
