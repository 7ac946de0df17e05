//! Sessions: prompt intake, chain proposal, confirmation and execution.
//!
//! Every state change is appended to the session's log file first and then
//! folded into the in-memory copy with the same function replay uses, so a
//! restarted orchestrator reconstructs identical sessions. Operations on
//! one session are serialized by its writer lock; readers only take a
//! short read lock on the folded state.

mod log;
mod session;
mod suggest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

pub use self::log::{apply, read_log, replay, LogWriter, Record, ReplayError};
pub use self::session::{EventKind, Session, SessionSummary, Status, StepEvent};
pub use self::suggest::suggest_questions;
use crate::chain::{ApiChain, ChainError, END};
use crate::exemplar::{reference_chains, ExemplarError, ExemplarStore};
use crate::graph::{parse_graph, serialize_graph, GraphError};
use crate::planner::{generate_chain, PlanError, RolloutConfig};
use crate::registry::{Registry, RegistryError};
use crate::sequentializer::PathCoverConfig;
use crate::tools::{render_report, ApiResult, ExecContext, GraphStore};

pub const SEED_ENV: &str = "GRAPHCHAIN_SEED";
pub const EMBED_BACKEND_ENV: &str = "GRAPHCHAIN_EMBED_BACKEND";

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("planning: {0}")]
    Plan(#[from] PlanError),
    #[error("references: {0}")]
    Exemplar(#[from] ExemplarError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("chain: {0}")]
    Chain(#[from] ChainError),
    #[error("unknown api `{0}` in chain")]
    UnknownApi(String),
    #[error("session `{0}` not found")]
    NotFound(String),
    #[error("session `{id}` is {found}, expected {expected}")]
    WrongStatus { id: String, expected: Status, found: Status },
    #[error("invalid {name}: {message}")]
    Config { name: String, message: String },
    #[error("session log: {0}")]
    Replay(#[from] ReplayError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub trait Clock: Send + Sync {
    /// Milliseconds since the Unix epoch.
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
    }
}

/// Starts at `start` and advances by one on every reading.
pub struct StepClock(AtomicU64);

impl StepClock {
    pub fn new(start: u64) -> Self {
        Self(AtomicU64::new(start))
    }
}

impl Clock for StepClock {
    fn now_ms(&self) -> u64 {
        self.0.fetch_add(1, Ordering::SeqCst)
    }
}

pub trait IdSource: Send + Sync {
    fn next_id(&self) -> String;
}

/// Random 128-bit ids as 32 lowercase hex digits.
pub struct RandomIds;

impl IdSource for RandomIds {
    fn next_id(&self) -> String {
        uuid::Uuid::new_v4().simple().to_string()
    }
}

/// `000…001`, `000…002`, … in the same 32-hex-digit shape.
#[derive(Default)]
pub struct SequentialIds(AtomicU64);

impl IdSource for SequentialIds {
    fn next_id(&self) -> String {
        format!("{:032x}", self.0.fetch_add(1, Ordering::SeqCst) + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrchestratorConfig {
    pub rollout: RolloutConfig,
    /// Exemplars retrieved as references per question.
    pub references: usize,
    pub path_cover: PathCoverConfig,
}

impl Default for OrchestratorConfig {
    /// Exact best-completion scoring over a small pool: the top four
    /// retrieved apis plus those of the retrieved exemplars.
    fn default() -> Self {
        let rollout = RolloutConfig { k: 4, max_len: 5, r: 32, exhaustive: true, reference_apis: true, ..RolloutConfig::default() };
        Self { rollout, references: 1, path_cover: PathCoverConfig::default() }
    }
}

impl OrchestratorConfig {
    /// Defaults with the seed taken from `GRAPHCHAIN_SEED` when set.
    pub fn from_env() -> Result<Self, OrchestratorError> {
        let mut cfg = Self::default();
        if let Ok(raw) = std::env::var(SEED_ENV) {
            cfg.rollout.seed = raw
                .trim()
                .parse()
                .map_err(|e| OrchestratorError::Config { name: SEED_ENV.into(), message: format!("{raw:?}: {e}") })?;
        }
        Ok(cfg)
    }
}

struct Entry {
    writer: Mutex<LogWriter>,
    state: RwLock<Session>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

pub struct Orchestrator {
    registry: Arc<Registry>,
    exemplars: Arc<ExemplarStore>,
    store: Arc<GraphStore>,
    log_dir: PathBuf,
    cfg: OrchestratorConfig,
    clock: Arc<dyn Clock>,
    ids: Arc<dyn IdSource>,
    sessions: RwLock<BTreeMap<String, Arc<Entry>>>,
}

impl Orchestrator {
    /// Opens `log_dir`, creating it if needed, and replays every session
    /// log found there.
    pub fn open(
        registry: Arc<Registry>,
        exemplars: Arc<ExemplarStore>,
        store: Arc<GraphStore>,
        log_dir: impl Into<PathBuf>,
        cfg: OrchestratorConfig,
    ) -> Result<Self, OrchestratorError> {
        let log_dir = log_dir.into();
        std::fs::create_dir_all(&log_dir)?;
        let mut sessions = BTreeMap::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&log_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let records = read_log(&path)?;
            let session = replay(&records, &cfg.path_cover)?;
            let entry = Entry { writer: Mutex::new(LogWriter::open(&path, records.len())?), state: RwLock::new(session) };
            let id = entry.state.read().unwrap_or_else(|e| e.into_inner()).id.clone();
            sessions.insert(id, Arc::new(entry));
        }
        Ok(Self {
            registry,
            exemplars,
            store,
            log_dir,
            cfg,
            clock: Arc::new(SystemClock),
            ids: Arc::new(RandomIds),
            sessions: RwLock::new(sessions),
        })
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_ids(mut self, ids: Arc<dyn IdSource>) -> Self {
        self.ids = ids;
        self
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn store(&self) -> &Arc<GraphStore> {
        &self.store
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.cfg
    }

    pub fn log_path(&self, id: &str) -> PathBuf {
        self.log_dir.join(format!("{id}.jsonl"))
    }

    fn entry(&self, id: &str) -> Result<Arc<Entry>, OrchestratorError> {
        let map = self.sessions.read().unwrap_or_else(|e| e.into_inner());
        map.get(id).cloned().ok_or_else(|| OrchestratorError::NotFound(id.to_string()))
    }

    fn commit(entry: &Entry, writer: &mut LogWriter, record: Record) -> Result<(), OrchestratorError> {
        writer.append(&record)?;
        let mut state = entry.state.write().unwrap_or_else(|e| e.into_inner());
        apply(&mut state, &record, writer.records())?;
        Ok(())
    }

    fn snapshot(entry: &Entry) -> Session {
        entry.state.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn plan(&self, question: &str, graph: &crate::graph::Graph, seed: u64) -> Result<(ApiChain, Vec<ApiChain>, Vec<crate::planner::StepTrace>), OrchestratorError> {
        let q = self.registry.embed(question)?;
        let refs = reference_chains(&q, &self.exemplars, self.cfg.references)?;
        let cfg = RolloutConfig { seed, ..self.cfg.rollout };
        let outcome = generate_chain(question, graph, &self.registry, &refs, &cfg)?;
        Ok((outcome.chain, refs.chains().to_vec(), outcome.trace))
    }

    fn needs_confirmation(&self, session: &Session) -> Record {
        Record::StepEvent {
            event: StepEvent {
                seq: session.last_seq() + 1,
                step_index: 0,
                kind: EventKind::NeedsConfirmation,
                payload: session.proposed.to_text(),
                at: self.clock.now_ms(),
            },
        }
    }

    /// Parses the graph, plans a chain and persists a new session in
    /// status `proposed`. Nothing is written when parsing or planning fails.
    pub fn submit_prompt(&self, question: &str, graph_document: &str) -> Result<Session, OrchestratorError> {
        let graph = parse_graph(graph_document)?;
        let seed = self.cfg.rollout.seed;
        let (chain, references, trace) = self.plan(question, &graph, seed)?;
        let id = self.ids.next_id();
        let path = self.log_path(&id);
        let created =
            Record::SessionCreated { id: id.clone(), question: question.to_string(), graph_document: serialize_graph(&graph), at: self.clock.now_ms() };
        let mut writer = LogWriter::create(&path)?;
        writer.append(&created)?;
        let entry = Arc::new(Entry { state: RwLock::new(log::start(&created, &self.cfg.path_cover)?), writer: Mutex::new(writer) });
        {
            let mut w = lock(&entry.writer);
            Self::commit(&entry, &mut w, Record::ChainProposed { chain, references, trace, seed, at: self.clock.now_ms() })?;
            let ask = self.needs_confirmation(&Self::snapshot(&entry));
            Self::commit(&entry, &mut w, ask)?;
        }
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(id, entry.clone());
        Ok(Self::snapshot(&entry))
    }

    fn expect_status(session: &Session, expected: Status) -> Result<(), OrchestratorError> {
        if session.status != expected {
            return Err(OrchestratorError::WrongStatus { id: session.id.clone(), expected, found: session.status });
        }
        Ok(())
    }

    /// Checks an edited chain against the registry.
    pub fn validate_chain(&self, chain: &ApiChain) -> Result<(), OrchestratorError> {
        if chain.partial {
            return Err(ChainError::EmptyChain.into());
        }
        chain.validate()?;
        if let Some(step) = chain.steps.iter().find(|s| s.api == END || self.registry.get(&s.api).is_none()) {
            return Err(OrchestratorError::UnknownApi(step.api.clone()));
        }
        Ok(())
    }

    /// Replaces the proposed chain; the session stays `proposed`.
    pub fn edit_chain(&self, id: &str, chain: ApiChain) -> Result<Session, OrchestratorError> {
        let entry = self.entry(id)?;
        let mut w = lock(&entry.writer);
        Self::expect_status(&Self::snapshot(&entry), Status::Proposed)?;
        self.validate_chain(&chain)?;
        Self::commit(&entry, &mut w, Record::ChainEdited { chain, at: self.clock.now_ms() })?;
        Ok(Self::snapshot(&entry))
    }

    /// Confirms the proposal, first recording `edited` when supplied.
    pub fn confirm_chain(&self, id: &str, edited: Option<ApiChain>) -> Result<Session, OrchestratorError> {
        let entry = self.entry(id)?;
        let mut w = lock(&entry.writer);
        Self::expect_status(&Self::snapshot(&entry), Status::Proposed)?;
        if let Some(chain) = edited {
            self.validate_chain(&chain)?;
            Self::commit(&entry, &mut w, Record::ChainEdited { chain, at: self.clock.now_ms() })?;
        }
        Self::commit(&entry, &mut w, Record::StatusChanged { status: Status::Confirmed, report: None, at: self.clock.now_ms() })?;
        Ok(Self::snapshot(&entry))
    }

    /// Plans again with `seed` (or the previous seed plus one).
    pub fn regenerate(&self, id: &str, seed: Option<u64>) -> Result<Session, OrchestratorError> {
        let entry = self.entry(id)?;
        let mut w = lock(&entry.writer);
        let current = Self::snapshot(&entry);
        Self::expect_status(&current, Status::Proposed)?;
        let seed = seed.unwrap_or(current.seed.wrapping_add(1));
        let (chain, references, trace) = self.plan(&current.question, &current.graph, seed)?;
        Self::commit(&entry, &mut w, Record::ChainProposed { chain, references, trace, seed, at: self.clock.now_ms() })?;
        let ask = self.needs_confirmation(&Self::snapshot(&entry));
        Self::commit(&entry, &mut w, ask)?;
        Ok(Self::snapshot(&entry))
    }

    /// Moves a confirmed session to `executing` without running anything.
    pub fn begin_execution(&self, id: &str) -> Result<Session, OrchestratorError> {
        let entry = self.entry(id)?;
        let mut w = lock(&entry.writer);
        Self::expect_status(&Self::snapshot(&entry), Status::Confirmed)?;
        Self::commit(&entry, &mut w, Record::StatusChanged { status: Status::Executing, report: None, at: self.clock.now_ms() })?;
        Ok(Self::snapshot(&entry))
    }

    /// Runs the steps of an `executing` session, calling `on_event` after
    /// each event is persisted. Step failures end the run with status
    /// `failed`; they are not returned as errors.
    pub fn run_execution(&self, id: &str, mut on_event: impl FnMut(&StepEvent)) -> Result<Session, OrchestratorError> {
        let entry = self.entry(id)?;
        let mut w = lock(&entry.writer);
        let session = Self::snapshot(&entry);
        Self::expect_status(&session, Status::Executing)?;
        let chain = session.proposed.clone();
        let mut outputs: Vec<ApiResult> = Vec::with_capacity(chain.len());
        let mut seq = session.last_seq();
        let mut emit = |w: &mut LogWriter, step_index: usize, kind: EventKind, payload: String| -> Result<(), OrchestratorError> {
            seq += 1;
            let event = StepEvent { seq, step_index, kind, payload, at: self.clock.now_ms() };
            Self::commit(&entry, w, Record::StepEvent { event: event.clone() })?;
            on_event(&event);
            Ok(())
        };
        for (i, call) in chain.steps.iter().enumerate() {
            emit(&mut w, i, EventKind::Started, call.to_string())?;
            let ctx = ExecContext { graph: &session.graph, store: &self.store, steps: &chain.steps[..i], outputs: &outputs };
            match self.registry.execute(call, &ctx) {
                Ok(out) => {
                    emit(&mut w, i, EventKind::Finished, out.render())?;
                    outputs.push(out);
                }
                Err(e) => {
                    emit(&mut w, i, EventKind::Error, e.to_string())?;
                    Self::commit(&entry, &mut w, Record::StatusChanged { status: Status::Failed, report: None, at: self.clock.now_ms() })?;
                    return Ok(Self::snapshot(&entry));
                }
            }
        }
        let report = match outputs.last() {
            Some(ApiResult::Report(text)) => text.clone(),
            _ => render_report(&session.question, &chain.steps, &outputs),
        };
        Self::commit(&entry, &mut w, Record::StatusChanged { status: Status::Done, report: Some(report), at: self.clock.now_ms() })?;
        Ok(Self::snapshot(&entry))
    }

    /// [`Self::begin_execution`] followed by [`Self::run_execution`].
    pub fn execute_chain(&self, id: &str, on_event: impl FnMut(&StepEvent)) -> Result<Session, OrchestratorError> {
        self.begin_execution(id)?;
        self.run_execution(id, on_event)
    }

    pub fn get_session(&self, id: &str) -> Result<Session, OrchestratorError> {
        let entry = self.entry(id)?;
        Ok(Self::snapshot(&entry))
    }

    /// Summaries ordered by creation time, then id.
    pub fn list_sessions(&self) -> Vec<SessionSummary> {
        let entries: Vec<Arc<Entry>> = self.sessions.read().unwrap_or_else(|e| e.into_inner()).values().cloned().collect();
        let mut out: Vec<SessionSummary> = entries.iter().map(|e| Self::snapshot(e).summary()).collect();
        out.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        out
    }

    /// Events with `seq > since`, and the session status at read time.
    pub fn events_since(&self, id: &str, since: u64) -> Result<(Vec<StepEvent>, Status), OrchestratorError> {
        let entry = self.entry(id)?;
        let state = entry.state.read().unwrap_or_else(|e| e.into_inner());
        Ok((state.events_since(since).to_vec(), state.status))
    }

    /// Rebuilds a session from its log file alone.
    pub fn replay_from_disk(&self, id: &str) -> Result<Session, OrchestratorError> {
        replay_file(&self.log_path(id), &self.cfg.path_cover)
    }
}

pub fn replay_file(path: &Path, path_cover: &PathCoverConfig) -> Result<Session, OrchestratorError> {
    Ok(replay(&read_log(path)?, path_cover)?)
}
