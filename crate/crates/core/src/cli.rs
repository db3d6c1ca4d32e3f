//! Command-line front end: `chat`, `eval`, `replay` and `serve`.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use crate::clock::{Clock, LogicalClock, SystemClock};
use crate::config::AppConfig;
use crate::engine::{Engine, SessionFlags, TurnError};
use crate::eval::{self, AblationAxis};
use crate::gateway::BackendKind;
use crate::service::SessionManager;
use crate::session::{
    load_file, replay, EventBody, EventStore, FileStore, MemoryStore, SessionEvent, SessionLog, SessionState,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_BACKEND: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "stagewise", version, about = "Stage-aware emotional-support dialogue engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Interactive conversation on stdin/stdout.
    Chat {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print the model's reasoning block under each reply.
        #[arg(long)]
        show_thinking: bool,
    },
    /// Run simulated-user personas and report metrics.
    Eval {
        /// Directory of persona files.
        #[arg(long)]
        personas: PathBuf,
        /// Compare against a run with a module switched off.
        #[arg(long, value_parser = parse_axis)]
        ablate: Option<AblationAxis>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
        /// Write each dialogue's event log into this directory.
        #[arg(long)]
        transcripts: Option<PathBuf>,
    },
    /// Rebuild a session from its event log and print the dialogue.
    Replay {
        event_log: PathBuf,
        /// Print only the final stage.
        #[arg(long)]
        quiet: bool,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `server.bind`.
        #[arg(long)]
        bind: Option<String>,
    },
}

fn parse_axis(s: &str) -> Result<AblationAxis, String> {
    s.parse()
}

/// Parses `std::env::args` and runs the chosen command.
pub fn run() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let default_level = if matches!(cli.command, Command::Serve { .. }) {
        "info"
    } else {
        "warn"
    };
    let _ = tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default_level)))
        .with_writer(std::io::stderr)
        .try_init();
    let stdout = std::io::stdout();
    ExitCode::from(execute(cli.command, &mut std::io::stdin().lock(), &mut stdout.lock()))
}

/// Runs one command against the given streams and returns the exit code.
pub fn execute(command: Command, input: &mut dyn BufRead, out: &mut dyn Write) -> u8 {
    match command {
        Command::Chat { config, show_thinking } => chat(config.as_deref(), show_thinking, input, out),
        Command::Eval {
            personas,
            ablate,
            config,
            json,
            transcripts,
        } => run_eval(&personas, ablate, config.as_deref(), json, transcripts.as_deref(), out),
        Command::Replay { event_log, quiet } => run_replay(&event_log, quiet, out),
        Command::Serve { config, bind } => run_serve(config.as_deref(), bind),
    }
}

fn load_config(path: Option<&Path>) -> Result<AppConfig, u8> {
    AppConfig::from_env(path).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })
}

fn build_engine(config: &AppConfig) -> Result<Engine, u8> {
    config.build_engine().map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })
}

fn open_store(config: &AppConfig) -> Result<Arc<dyn EventStore>, u8> {
    match &config.store.dir {
        Some(dir) => FileStore::open(dir)
            .map(|s| Arc::new(s) as Arc<dyn EventStore>)
            .map_err(|e| {
                eprintln!("error: opening store {}: {e}", dir.display());
                EXIT_CONFIG
            }),
        None => Ok(Arc::new(MemoryStore::new())),
    }
}

fn chat(config_path: Option<&Path>, show_thinking: bool, input: &mut dyn BufRead, out: &mut dyn Write) -> u8 {
    let config = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let engine = match build_engine(&config) {
        Ok(e) => e,
        Err(code) => return code,
    };
    let store = match open_store(&config) {
        Ok(s) => s,
        Err(code) => return code,
    };
    // Scripted sessions get logical timestamps so reruns are identical.
    let clock: Box<dyn Clock> = match config.backend.kind {
        BackendKind::Scripted => Box::new(LogicalClock::default()),
        BackendKind::Remote => Box::new(SystemClock),
    };
    let mut log = SessionLog::new(format!("chat-{}", uuid::Uuid::new_v4().simple()));
    let flags = SessionFlags::default();
    let _ = writeln!(
        out,
        "session {} (type /quit to leave, /state for the session state)",
        log.id()
    );
    let mut line = String::new();
    loop {
        let _ = write!(out, "> ");
        let _ = out.flush();
        line.clear();
        match input.read_line(&mut line) {
            Ok(0) => break,
            Ok(_) => {}
            Err(e) => {
                eprintln!("error: reading input: {e}");
                return EXIT_USAGE;
            }
        }
        let text = line.trim();
        match text {
            "" => continue,
            "/quit" => break,
            "/state" => {
                let _ = writeln!(out, "{}", serde_json::to_string_pretty(log.state()).unwrap_or_default());
                continue;
            }
            _ => {}
        }
        let before = log.events().len();
        let outcome = engine.handle_message(&mut log, text, &flags, clock.as_ref());
        if let Err(e) = store.append_all(log.events_since(before)) {
            eprintln!("error: saving session: {e}");
        }
        match outcome {
            Ok(r) => {
                let _ = writeln!(out, "[{}] {}", r.stage_after.title(), r.reply);
                if show_thinking {
                    if let Some(chain) = &r.reasoning_chain {
                        for l in chain.lines() {
                            let _ = writeln!(out, "    | {l}");
                        }
                    }
                }
                if let Some(plan) = &r.plan {
                    for (step, verdict) in plan.plan.steps.iter().zip(&plan.verdicts) {
                        let mark = if verdict.feasibility.is_feasible() {
                            "ok"
                        } else {
                            "infeasible"
                        };
                        let _ = writeln!(
                            out,
                            "    step {} ({}): {} [{mark}]",
                            step.index, step.schedule_hint, step.description
                        );
                    }
                }
                if r.stage_after == crate::stage::Stage::Closed {
                    break;
                }
            }
            Err(TurnError::Backend(e)) => {
                eprintln!("error: {e}");
                return EXIT_BACKEND;
            }
            Err(TurnError::EmptyText) => continue,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        }
    }
    EXIT_OK
}

fn run_eval(
    dir: &Path,
    ablate: Option<AblationAxis>,
    config_path: Option<&Path>,
    json: bool,
    transcripts: Option<&Path>,
    out: &mut dyn Write,
) -> u8 {
    let config = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let mut personas = match eval::load_personas(dir) {
        Ok(p) if !p.is_empty() => p,
        Ok(_) => {
            eprintln!("error: no personas in {}", dir.display());
            return EXIT_USAGE;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    for p in &mut personas {
        p.persona.turn_cap.get_or_insert(config.eval.turn_cap);
    }
    // Personas that bring their own script do not need a configured backend.
    let engine = if personas.iter().all(|p| p.script_path.is_some()) && config.backend.script_path.is_empty() {
        Engine::bundled(
            Arc::new(crate::gateway::ScriptedBackend::default()),
            config.detector,
            config.dialogue.clone(),
        )
    } else {
        match build_engine(&config) {
            Ok(e) => e,
            Err(code) => return code,
        }
    };

    let fail = |e: eval::EvalError| {
        eprintln!("error: {e}");
        match e {
            eval::EvalError::Turn {
                source: TurnError::Backend(_),
                ..
            } => EXIT_BACKEND,
            _ => EXIT_CONFIG,
        }
    };
    let baseline = SessionFlags::default();
    let (base, base_transcripts) = match eval::run_arm("baseline", &personas, &engine, baseline) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    if let Some(dir) = transcripts {
        if let Err(e) = write_transcripts(dir, "", &base_transcripts) {
            eprintln!("error: writing transcripts: {e}");
            return EXIT_CONFIG;
        }
    }
    let text = match ablate {
        None if json => serde_json::to_string_pretty(&base).unwrap_or_default(),
        None => eval::render_table(&base.dialogues),
        Some(axis) => {
            let (variant, variant_transcripts) = match eval::run_arm(
                &format!("without {}", axis_name(axis)),
                &personas,
                &engine,
                axis.variant_flags(),
            ) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            if let Some(dir) = transcripts {
                let suffix = format!(".no-{}", axis_name(axis));
                if let Err(e) = write_transcripts(dir, &suffix, &variant_transcripts) {
                    eprintln!("error: writing transcripts: {e}");
                    return EXIT_CONFIG;
                }
            }
            let report = eval::compare(base, variant);
            if json {
                serde_json::to_string_pretty(&report).unwrap_or_default()
            } else {
                eval::render_comparison(&report)
            }
        }
    };
    let _ = writeln!(out, "{}", text.trim_end());
    EXIT_OK
}

fn axis_name(axis: AblationAxis) -> &'static str {
    match axis {
        AblationAxis::Stage => "stage",
        AblationAxis::Thinking => "thinking",
        AblationAxis::Both => "both",
    }
}

fn write_transcripts(dir: &Path, suffix: &str, transcripts: &[eval::Transcript]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for t in transcripts {
        let sid = t.events.first().map_or_else(|| t.persona_id.clone(), |e| e.sid.clone());
        std::fs::write(dir.join(format!("{sid}{suffix}.events.jsonl")), t.to_jsonl())?;
    }
    Ok(())
}

/// Rebuilds state twice (pure fold and in-place replay), checks both agree
/// and that each record re-serializes to its original line.
pub fn verify_log(raw: &str, events: &[SessionEvent]) -> Result<SessionState, String> {
    let replayed = replay(events).map_err(|e| e.to_string())?;
    let mut folded = SessionState::new(events.first().map(|e| e.sid.clone()).unwrap_or_default());
    for (i, e) in events.iter().enumerate() {
        folded = folded.apply_event(e).map_err(|err| format!("event {i}: {err}"))?;
    }
    let a = serde_json::to_string(&replayed).map_err(|e| e.to_string())?;
    let b = serde_json::to_string(&folded).map_err(|e| e.to_string())?;
    if a != b {
        return Err("replayed state differs from the event-by-event fold".into());
    }
    for (line, event) in raw.lines().filter(|l| !l.trim().is_empty()).zip(events) {
        if line.trim_end() != event.to_line() {
            return Err(format!(
                "record at turn {} does not re-serialize identically",
                event.turn
            ));
        }
    }
    Ok(replayed)
}

fn run_replay(path: &Path, quiet: bool, out: &mut dyn Write) -> u8 {
    let loaded = match load_file(path) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return EXIT_USAGE;
        }
    };
    if loaded.truncated {
        eprintln!("warning: dropped a partial final record");
    }
    let raw = std::fs::read_to_string(path).unwrap_or_default();
    let state = match verify_log(&raw, &loaded.events) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: replay check failed: {e}");
            return EXIT_USAGE;
        }
    };
    if !quiet {
        for e in &loaded.events {
            match &e.body {
                EventBody::UserMsg { text } => {
                    let _ = writeln!(out, "#{:<3} user: {text}", e.turn);
                }
                EventBody::AgentMsg(m) => {
                    let _ = writeln!(out, "#{:<3} agent [{}]: {}", e.turn, m.stage.title(), m.reply);
                }
                EventBody::Transition { from, signal, to } if from != to => {
                    let _ = writeln!(out, "     -- {from} -> {to} ({})", signal.kind);
                }
                EventBody::OperatorOverride { from, to, note } => {
                    let _ = writeln!(out, "     -- operator: {from} -> {to} ({note})");
                }
                _ => {}
            }
        }
        let _ = writeln!(out, "events: {}, turns: {}", loaded.events.len(), state.turn_index);
    }
    let _ = writeln!(out, "final stage: {}", state.stage);
    EXIT_OK
}

fn run_serve(config_path: Option<&Path>, bind: Option<String>) -> u8 {
    let config = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    // The blocking HTTP client must be built outside the async runtime.
    let engine = match build_engine(&config) {
        Ok(e) => e,
        Err(code) => return code,
    };
    let store = match open_store(&config) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let manager =
        Arc::new(SessionManager::new(engine, store, Arc::new(SystemClock)).with_eval_turn_cap(config.eval.turn_cap));
    let addr = bind.unwrap_or(config.server.bind.clone());
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: starting runtime: {e}");
            return EXIT_CONFIG;
        }
    };
    runtime.block_on(async move {
        let listener = match tokio::net::TcpListener::bind(&addr).await {
            Ok(l) => l,
            Err(e) => {
                eprintln!("error: binding {addr}: {e}");
                return EXIT_CONFIG;
            }
        };
        tracing::info!(%addr, "listening");
        match crate::service::serve(listener, manager).await {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("error: server: {e}");
                EXIT_CONFIG
            }
        }
    })
}
