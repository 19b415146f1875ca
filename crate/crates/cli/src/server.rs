//! HTTP API over pipelines and sessions.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use braidflow::pipeline::{
    self, classify, ArtifactKind, PipelineError, PipelineStage, SessionError, SessionStore,
    StageError, StageRequest,
};
use serde::Deserialize;
use serde_json::{json, Value};

/// Parameters that name server-side files; only the built-in sets are
/// reachable over HTTP.
const FILE_PARAMS: &[&str] = &["rules", "templates"];

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    stage: Option<usize>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            stage: None,
        }
    }
}

fn pipeline_status(e: &PipelineError) -> StatusCode {
    match e {
        PipelineError::UnknownOp(_)
        | PipelineError::BadStage { .. }
        | PipelineError::BadParam { .. }
        | PipelineError::WrongInput { .. }
        | PipelineError::Parse(_)
        | PipelineError::Io { .. } => StatusCode::BAD_REQUEST,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        ApiError::new(pipeline_status(&e), e.code(), e.to_string())
    }
}

impl From<StageError> for ApiError {
    fn from(e: StageError) -> Self {
        ApiError {
            status: pipeline_status(&e.source),
            code: e.source.code(),
            message: e.to_string(),
            stage: Some(e.index),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        match e {
            SessionError::NoSession(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "no_session", message)
            }
            SessionError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", message),
            SessionError::UnknownArtifact(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "unknown_artifact", message)
            }
            SessionError::NothingToUndo => {
                ApiError::new(StatusCode::CONFLICT, "nothing_to_undo", message)
            }
            SessionError::NothingToRedo => {
                ApiError::new(StatusCode::CONFLICT, "nothing_to_redo", message)
            }
            SessionError::Pipeline(e) => e.into(),
            SessionError::Stage(e) => e.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "code": self.code, "message": self.message });
        if let Some(i) = self.stage {
            body["stage"] = json!(i);
        }
        (self.status, Json(json!({ "error": body }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone, Default)]
pub struct AppState {
    pub sessions: Arc<SessionStore>,
}

impl AppState {
    pub fn new(sessions: SessionStore) -> Self {
        AppState {
            sessions: Arc::new(sessions),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/ops", get(ops))
        .route("/v1/pipeline", post(run))
        .route("/v1/session", post(create_session))
        .route("/v1/session/{id}", get(view_session))
        .route("/v1/session/{id}/apply", post(apply))
        .route("/v1/session/{id}/undo", post(undo))
        .route("/v1/session/{id}/redo", post(redo))
        .route("/v1/session/{id}/upload", post(upload))
        .route("/v1/session/{id}/circuit", get(circuit))
        .route("/v1/session/{id}/layout", get(layout))
        .route("/v1/session/{id}/report", get(report))
        .route("/v1/session/{id}/estimate", get(estimate))
        .route("/v1/session/{id}/download/{artifact}", get(download))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "no_route", "no such endpoint") })
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(addr: &str, state: AppState) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

fn resolve(req: &StageRequest) -> ApiResult<PipelineStage> {
    let stage = req.resolve()?;
    for &name in FILE_PARAMS {
        if stage.params.get(name).is_some_and(|v| v != "default") {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "bad_param",
                format!("parameter `{name}`: only `default` is accepted over HTTP"),
            ));
        }
    }
    Ok(stage)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn ops() -> Json<Value> {
    Json(json!({ "operations": pipeline::operations() }))
}

/// Input as a list of lines or as one text blob.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Input {
    Lines(Vec<String>),
    Text(String),
}

impl Input {
    fn into_lines(self) -> Vec<String> {
        match self {
            Input::Lines(l) => l,
            Input::Text(t) => t.lines().map(str::to_string).collect(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct PipelineRequest {
    stages: Vec<StageRequest>,
    #[serde(default)]
    input: Option<Input>,
}

fn document(lines: Vec<String>) -> Value {
    let bytes = pipeline::to_bytes(&lines);
    json!({
        "kind": classify(&lines).name(),
        "digest": pipeline::digest(&bytes),
        "lines": lines,
    })
}

async fn run(Json(req): Json<PipelineRequest>) -> ApiResult<Json<Value>> {
    let stages = req
        .stages
        .iter()
        .enumerate()
        .map(|(i, s)| {
            resolve(s).map_err(|mut e| {
                e.stage = Some(i);
                e
            })
        })
        .collect::<ApiResult<Vec<_>>>()?;
    let input = req.input.map(Input::into_lines).unwrap_or_default();
    let lines = blocking(move || Ok(pipeline::run_pipeline(&stages, input)?)).await?;
    Ok(Json(document(lines)))
}

async fn create_session(State(st): State<AppState>) -> ApiResult<(StatusCode, Json<Value>)> {
    let id = st.sessions.create();
    let view = st.sessions.with(&id, |s| Ok(s.view()))?;
    Ok((StatusCode::CREATED, Json(json!(view))))
}

async fn view_session(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    Ok(Json(json!(st.sessions.with(&id, |s| Ok(s.view()))?)))
}

#[derive(Debug, Deserialize)]
struct ApplyRequest {
    stage: StageRequest,
}

async fn apply(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ApplyRequest>,
) -> ApiResult<Json<Value>> {
    let stage = resolve(&req.stage)?;
    let view = blocking(move || Ok(st.sessions.with(&id, |s| s.apply(&stage))?)).await?;
    Ok(Json(json!(view)))
}

async fn undo(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(st.sessions.with(&id, |s| s.undo())?)))
}

async fn redo(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(st.sessions.with(&id, |s| s.redo())?)))
}

#[derive(Debug, Deserialize)]
struct UploadRequest {
    artifact: String,
    text: String,
}

async fn upload(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<UploadRequest>,
) -> ApiResult<Json<Value>> {
    let kind = artifact_kind(&req.artifact)?;
    let view = blocking(move || Ok(st.sessions.with(&id, |s| s.upload(kind, &req.text))?)).await?;
    Ok(Json(json!(view)))
}

fn artifact_kind(name: &str) -> ApiResult<ArtifactKind> {
    ArtifactKind::parse(name).ok_or_else(|| SessionError::UnknownArtifact(name.to_string()).into())
}

fn fetch(st: &AppState, id: &str, kind: ArtifactKind) -> ApiResult<Arc<String>> {
    Ok(st.sessions.with(id, |s| s.artifact(kind))?)
}

async fn circuit(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let text = fetch(&st, &id, ArtifactKind::Circuit)?;
    let lines: Vec<String> = text.lines().map(str::to_string).collect();
    let c = braidflow::parse_circuit(&lines).map_err(PipelineError::from)?;
    Ok(Json(json!({
        "digest": pipeline::digest(&text),
        "metrics": braidflow::metrics(&c),
        "lines": lines,
    })))
}

fn json_artifact(st: &AppState, id: &str, kind: ArtifactKind) -> ApiResult<Response> {
    let text = fetch(st, id, kind)?;
    Ok((
        [(header::CONTENT_TYPE, "application/json")],
        text.as_str().to_owned(),
    )
        .into_response())
}

async fn layout(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    json_artifact(&st, &id, ArtifactKind::Layout)
}

async fn report(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    json_artifact(&st, &id, ArtifactKind::Report)
}

async fn estimate(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    json_artifact(&st, &id, ArtifactKind::Estimate)
}

async fn download(
    State(st): State<AppState>,
    Path((id, artifact)): Path<(String, String)>,
) -> ApiResult<Response> {
    let kind = artifact_kind(&artifact)?;
    let text = fetch(&st, &id, kind)?;
    let disposition = format!("attachment; filename=\"{}\"", kind.file_name());
    Ok((
        [
            (header::CONTENT_TYPE, "application/octet-stream".to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        text.as_str().to_owned(),
    )
        .into_response())
}
