//! HTTP service over the orchestrator. Request and response bodies are JSON;
//! the event stream is newline-delimited JSON.

use std::sync::Arc;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use graphchain_core::chain::{parse_chain, ApiChain};
use graphchain_core::graph::parse_graph;
use graphchain_core::orchestrator::{suggest_questions, Orchestrator, OrchestratorError, Session, SessionSummary, Status, StepEvent};
use graphchain_core::planner::StepTrace;
use graphchain_core::registry::ApiSpec;
use graphchain_core::tools::{classify_graph, label_summary};
use graphchain_core::Graph;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Clone)]
pub struct AppState {
    pub orchestrator: Arc<Orchestrator>,
    /// How often a streaming events response checks for new records.
    pub poll_interval: Duration,
}

impl AppState {
    pub fn new(orchestrator: Arc<Orchestrator>) -> Self {
        Self { orchestrator, poll_interval: Duration::from_millis(100) }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(submit).get(list))
        .route("/sessions/{id}", get(show))
        .route("/sessions/{id}/confirm", post(confirm))
        .route("/sessions/{id}/edit", post(edit))
        .route("/sessions/{id}/regenerate", post(regenerate))
        .route("/sessions/{id}/execute", post(execute))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/sequences", get(sequences))
        .route("/apis", get(apis))
        .route("/apis/retrieve", post(retrieve))
        .route("/suggestions", post(suggestions))
        .with_state(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub kind: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, kind: "bad_request", message: message.into() }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self { status: StatusCode::INTERNAL_SERVER_ERROR, kind: "internal", message: message.into() }
    }
}

impl From<OrchestratorError> for ApiError {
    fn from(e: OrchestratorError) -> Self {
        use OrchestratorError as E;
        let (status, kind) = match &e {
            E::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            E::WrongStatus { .. } => (StatusCode::CONFLICT, "wrong_status"),
            E::Graph(_) => (StatusCode::BAD_REQUEST, "graph"),
            E::Chain(_) => (StatusCode::BAD_REQUEST, "chain"),
            E::UnknownApi(_) => (StatusCode::BAD_REQUEST, "unknown_api"),
            E::Plan(_) => (StatusCode::UNPROCESSABLE_ENTITY, "planning"),
            E::Registry(_) | E::Exemplar(_) => (StatusCode::BAD_GATEWAY, "retrieval"),
            E::Config { .. } | E::Replay(_) | E::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self { status, kind, message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message, kind: self.kind.to_string() })).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> Result<T, OrchestratorError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?.map_err(ApiError::from)
}

/// Parses a JSON body, treating an empty body as `T::default()`.
fn optional_json<T: DeserializeOwned + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn required_json<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub question: String,
    pub graph_document: String,
}

/// A chain given either in chain-file text or as structured steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChainInput {
    Text(String),
    Steps(ApiChain),
}

impl ChainInput {
    fn into_chain(self) -> ApiResult<ApiChain> {
        match self {
            ChainInput::Text(t) => parse_chain(&t).map_err(|e| ApiError { status: StatusCode::BAD_REQUEST, kind: "chain", message: e.to_string() }),
            ChainInput::Steps(c) => Ok(c),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfirmRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRequest {
    pub chain: ChainInput,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegenerateRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct EventsQuery {
    #[serde(default)]
    pub since: u64,
    #[serde(default)]
    pub stream: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsResponse {
    pub events: Vec<StepEvent>,
    pub status: Status,
    /// Cursor for the next poll.
    pub next_since: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieveRequest {
    pub question: String,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedApi {
    pub id: String,
    pub description: String,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestRequest {
    pub graph_document: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestResponse {
    pub suggestions: Vec<String>,
    pub graph: GraphSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub name: String,
    pub nodes: usize,
    pub edges: usize,
    pub kind: String,
    pub labels: Vec<(String, usize)>,
}

impl GraphSummary {
    pub fn of(g: &Graph) -> Self {
        Self {
            name: g.name().to_string(),
            nodes: g.node_count(),
            edges: g.edge_count(),
            kind: classify_graph(g).to_string(),
            labels: label_summary(g),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub question: String,
    pub status: Status,
    pub chain: ApiChain,
    pub chain_text: String,
    pub graph: GraphSummary,
    pub suggestions: Vec<String>,
    pub references: Vec<ApiChain>,
    pub trace: Vec<StepTrace>,
    pub seed: u64,
    pub events: Vec<StepEvent>,
    pub report: Option<String>,
    pub created_at: u64,
    pub updated_at: u64,
}

impl From<Session> for SessionView {
    fn from(s: Session) -> Self {
        Self {
            chain_text: s.proposed.to_text(),
            graph: GraphSummary::of(&s.graph),
            suggestions: suggest_questions(&s.graph),
            id: s.id,
            question: s.question,
            status: s.status,
            chain: s.proposed,
            references: s.references,
            trace: s.trace,
            seed: s.seed,
            events: s.events,
            report: s.report,
            created_at: s.created_at,
            updated_at: s.updated_at,
        }
    }
}

async fn submit(State(st): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let req: SubmitRequest = required_json(&body)?;
    let o = st.orchestrator.clone();
    let s = blocking(move || o.submit_prompt(&req.question, &req.graph_document)).await?;
    Ok((StatusCode::CREATED, Json(s.into())))
}

async fn list(State(st): State<AppState>) -> Json<Vec<SessionSummary>> {
    Json(st.orchestrator.list_sessions())
}

async fn show(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    Ok(Json(st.orchestrator.get_session(&id)?.into()))
}

async fn confirm(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<SessionView>> {
    let req: ConfirmRequest = optional_json(&body)?;
    let chain = req.chain.map(ChainInput::into_chain).transpose()?;
    let o = st.orchestrator.clone();
    Ok(Json(blocking(move || o.confirm_chain(&id, chain)).await?.into()))
}

async fn edit(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<SessionView>> {
    let req: EditRequest = required_json(&body)?;
    let chain = req.chain.into_chain()?;
    let o = st.orchestrator.clone();
    Ok(Json(blocking(move || o.edit_chain(&id, chain)).await?.into()))
}

async fn regenerate(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<SessionView>> {
    let req: RegenerateRequest = optional_json(&body)?;
    let o = st.orchestrator.clone();
    Ok(Json(blocking(move || o.regenerate(&id, req.seed)).await?.into()))
}

/// Moves the session to `executing` and runs the steps in the background.
async fn execute(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let o = st.orchestrator.clone();
    let started = {
        let id = id.clone();
        blocking(move || o.begin_execution(&id)).await?
    };
    let o = st.orchestrator.clone();
    tokio::task::spawn_blocking(move || {
        if let Err(e) = o.run_execution(&id, |_| {}) {
            eprintln!("execution of session {id} stopped: {e}");
        }
    });
    Ok((StatusCode::ACCEPTED, Json(started.into())))
}

async fn events(State(st): State<AppState>, Path(id): Path<String>, Query(q): Query<EventsQuery>) -> ApiResult<Response> {
    let (events, status) = st.orchestrator.events_since(&id, q.since)?;
    if !q.stream {
        let next_since = events.last().map_or(q.since, |e| e.seq);
        return Ok(Json(EventsResponse { events, status, next_since }).into_response());
    }
    let o = st.orchestrator.clone();
    let interval = st.poll_interval;
    let stream = futures::stream::unfold((q.since, false), move |(cursor, finished)| {
        let o = o.clone();
        let id = id.clone();
        async move {
            if finished {
                return None;
            }
            loop {
                let (events, status) = match o.events_since(&id, cursor) {
                    Ok(x) => x,
                    Err(e) => return Some((Err::<Bytes, std::io::Error>(std::io::Error::other(e.to_string())), (cursor, true))),
                };
                if let Some(last) = events.last() {
                    let mut chunk = String::new();
                    for e in &events {
                        chunk.push_str(&serde_json::to_string(e).expect("events serialize"));
                        chunk.push('\n');
                    }
                    return Some((Ok(Bytes::from(chunk)), (last.seq, false)));
                }
                if status.is_terminal() {
                    return None;
                }
                tokio::time::sleep(interval).await;
            }
        }
    });
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(stream)).into_response())
}

async fn sequences(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(st.orchestrator.get_session(&id)?.sequences).into_response())
}

async fn apis(State(st): State<AppState>) -> Json<Vec<ApiSpec>> {
    Json(st.orchestrator.registry().specs().to_vec())
}

async fn retrieve(State(st): State<AppState>, body: Bytes) -> ApiResult<Json<Vec<RetrievedApi>>> {
    let req: RetrieveRequest = required_json(&body)?;
    if req.k == 0 {
        return Err(ApiError::bad_request("k must be at least 1"));
    }
    let o = st.orchestrator.clone();
    let hits = blocking(move || Ok(o.registry().retrieve_apis(&req.question, req.k)?)).await?;
    Ok(Json(hits.into_iter().map(|h| RetrievedApi { id: h.spec.id, description: h.spec.description, score: h.score }).collect()))
}

async fn suggestions(body: Bytes) -> ApiResult<Json<SuggestResponse>> {
    let req: SuggestRequest = required_json(&body)?;
    let g = parse_graph(&req.graph_document).map_err(|e| ApiError { status: StatusCode::BAD_REQUEST, kind: "graph", message: e.to_string() })?;
    Ok(Json(SuggestResponse { suggestions: suggest_questions(&g), graph: GraphSummary::of(&g) }))
}
