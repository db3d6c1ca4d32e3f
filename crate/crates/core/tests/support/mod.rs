//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod oracle;
pub mod transcripts;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use stagewise::clock::LogicalClock;
use stagewise::detector::DetectorConfig;
use stagewise::engine::{DialogueConfig, Engine, SessionFlags};
use stagewise::eval::{engine_for, load_persona, run_dialogue, LoadedPersona, Transcript};
use stagewise::gateway::{ChatBackend, ScriptedBackend};
use stagewise::service::SessionManager;
use stagewise::session::MemoryStore;
use stagewise::stage::SignalKind;

pub fn asset(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets").join(rel)
}

/// Bundled lexicon, prompts and fallbacks over `backend`.
pub fn engine_over(backend: Arc<dyn ChatBackend>) -> Engine {
    Engine::bundled(backend, DetectorConfig::default(), DialogueConfig::default())
}

/// Engine whose backend answers turn 1, 2, ... with `responses`.
pub fn scripted_engine(responses: &[&str]) -> (Engine, Arc<ScriptedBackend>) {
    let backend = Arc::new(ScriptedBackend::from_turns(responses.iter().copied()));
    (engine_over(backend.clone()), backend)
}

pub fn load(rel: &str) -> LoadedPersona {
    load_persona(&asset(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

/// Runs a bundled persona against its own script.
pub fn run_persona(rel: &str, flags: &SessionFlags) -> (LoadedPersona, Transcript, Engine) {
    let p = load(rel);
    let engine = engine_for(&p, &engine_over(Arc::new(ScriptedBackend::default()))).unwrap();
    let t = run_dialogue(&p.persona, &engine, flags).unwrap();
    (p, t, engine)
}

/// Labeled detector corpus: `(utterance, expected signal)`.
pub fn corpus() -> Vec<(String, SignalKind)> {
    let raw = std::fs::read_to_string(asset("corpus.tsv")).unwrap();
    raw.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (text, label) = l.split_once('\t').unwrap_or_else(|| panic!("no tab in {l:?}"));
            (
                text.to_string(),
                label.parse().unwrap_or_else(|_| panic!("bad label in {l:?}")),
            )
        })
        .collect()
}

/// An HTTP service on an ephemeral port, running on its own thread.
pub struct TestServer {
    pub addr: SocketAddr,
    pub manager: Arc<SessionManager>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl TestServer {
    pub fn start(engine: Engine) -> Self {
        let manager = Arc::new(SessionManager::new(
            engine,
            Arc::new(MemoryStore::new()),
            Arc::new(LogicalClock::default()),
        ));
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let m = manager.clone();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                let app = stagewise::service::router(m);
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
                    .unwrap();
            });
        });
        let addr = addr_rx.recv_timeout(Duration::from_secs(10)).unwrap();
        TestServer {
            addr,
            manager,
            shutdown: Some(tx),
            thread: Some(thread),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(30))
        .build()
        .unwrap()
}

/// A dialogue driven turn by turn, keeping the incrementally maintained log.
pub struct LiveRun {
    pub persona: LoadedPersona,
    pub engine: Engine,
    pub log: stagewise::session::SessionLog,
    pub turns: Vec<stagewise::engine::TurnResult>,
}

/// Same loop as the evaluation runner, with the session log kept.
pub fn live_run(rel: &str) -> LiveRun {
    use stagewise::eval::{simulate_turn, AgentView, PersonaState};
    use stagewise::stage::Stage;

    let persona = load(rel);
    let engine = engine_for(&persona, &engine_over(Arc::new(ScriptedBackend::default()))).unwrap();
    let clock = LogicalClock::default();
    let mut log = stagewise::session::SessionLog::new(format!("eval-{}", persona.persona.persona_id));
    engine
        .seed_resources(&mut log, &persona.persona.resources, &clock)
        .unwrap();
    let mut state = PersonaState::new();
    let mut turns: Vec<stagewise::engine::TurnResult> = Vec::new();
    while (turns.len() as u64) < persona.persona.turn_cap() {
        let view = turns.last().map(AgentView::from);
        let (said, next) = simulate_turn(&persona.persona, &state, view.as_ref());
        state = next;
        let r = engine
            .handle_message(&mut log, &said.utterance, &SessionFlags::default(), &clock)
            .unwrap();
        let closed = r.stage_after == Stage::Closed;
        turns.push(r);
        if closed {
            break;
        }
    }
    LiveRun {
        persona,
        engine,
        log,
        turns,
    }
}

type Gate = (std::sync::mpsc::Sender<()>, std::sync::mpsc::Receiver<()>);

/// Scripted backend that can be made to hold one call open until released.
pub struct GateBackend {
    inner: ScriptedBackend,
    armed: parking_lot::Mutex<Option<Gate>>,
}

impl GateBackend {
    pub fn new(inner: ScriptedBackend) -> Self {
        GateBackend {
            inner,
            armed: parking_lot::Mutex::new(None),
        }
    }

    /// The next call signals `entered` and then waits on `release`.
    pub fn arm(&self) -> (std::sync::mpsc::Receiver<()>, std::sync::mpsc::Sender<()>) {
        let (entered_tx, entered_rx) = std::sync::mpsc::channel();
        let (release_tx, release_rx) = std::sync::mpsc::channel();
        *self.armed.lock() = Some((entered_tx, release_rx));
        (entered_rx, release_tx)
    }
}

impl ChatBackend for GateBackend {
    fn complete(
        &self,
        request: &stagewise::gateway::CompletionRequest<'_>,
    ) -> Result<String, stagewise::gateway::BackendError> {
        let gate = self.armed.lock().take();
        if let Some((entered, release)) = gate {
            let _ = entered.send(());
            let _ = release.recv_timeout(Duration::from_secs(20));
        }
        self.inner.complete(request)
    }

    fn calls(&self) -> u64 {
        self.inner.calls()
    }
}
