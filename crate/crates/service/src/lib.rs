//! HTTP session API: describe a task, fill in missing parameters, preview
//! and approve the reference path, generate, download.

pub mod error;
pub mod store;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use gcodeloop::corrector::{run_loop_in_session, LoopConfig, LoopError, LoopResult};
use gcodeloop::extract::{
    count_shapes, extract_parameters, fill_defaults, Extractor, RemoteExtractor, RuleBasedExtractor,
};
use gcodeloop::gcode::parse_program;
use gcodeloop::generation::{
    FaultInjectingGenerator, FaultScript, Generator, RemoteGenerator, TemplateGenerator,
};
use gcodeloop::params::{find_missing, merge_user_answers, TaskParameters};
use gcodeloop::remote::{CompletionClient, EndpointConfig};
use gcodeloop::svg::{render_svg, Canvas, PathRole};
use gcodeloop::toolpath::{construct_user_path, interpret, Toolpath};

pub use error::{ApiError, FAILURE_HEADER};
pub use store::{Session, SessionStore};

pub const DEFAULT_TTL: Duration = Duration::from_secs(3600);
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub ttl: Duration,
    /// Completion endpoint for the remote generator (and extractor).
    pub remote: Option<EndpointConfig>,
    /// Extract parameters with the remote endpoint instead of the rules.
    pub remote_extraction: bool,
    pub loop_config: LoopConfig,
    /// Allowed browser origins; empty allows any.
    pub cors_origins: Vec<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            ttl: DEFAULT_TTL,
            remote: None,
            remote_extraction: false,
            loop_config: LoopConfig::default(),
            cors_origins: Vec::new(),
        }
    }
}

pub struct AppState {
    pub store: SessionStore,
    pub config: ServiceConfig,
}

type Shared = Arc<AppState>;

pub fn router(config: ServiceConfig) -> Router {
    let cors = if config.cors_origins.is_empty() {
        CorsLayer::new().allow_origin(Any)
    } else {
        let origins: Vec<HeaderValue> = config
            .cors_origins
            .iter()
            .filter_map(|o| o.parse().ok())
            .collect();
        CorsLayer::new().allow_origin(AllowOrigin::list(origins))
    }
    .allow_methods(Any)
    .allow_headers(Any)
    .expose_headers([header::HeaderName::from_static(FAILURE_HEADER)]);
    let state = Arc::new(AppState {
        store: SessionStore::new(config.ttl),
        config,
    });
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/params", patch(update_params))
        .route("/sessions/{id}/preview", get(preview))
        .route("/sessions/{id}/verify", post(verify))
        .route("/sessions/{id}/generate", post(generate))
        .route("/sessions/{id}/gcode", get(download))
        .layer(cors)
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(
    listener: tokio::net::TcpListener,
    config: ServiceConfig,
) -> std::io::Result<()> {
    axum::serve(listener, router(config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn health() -> Json<Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

fn blocking_error(e: tokio::task::JoinError) -> ApiError {
    ApiError::Internal(e.to_string())
}

fn session_handle(
    state: &AppState,
    id: &str,
) -> Result<Arc<tokio::sync::Mutex<Session>>, ApiError> {
    state
        .store
        .get(id)
        .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
}

fn required_keys(state: &AppState) -> &[String] {
    &state.config.loop_config.template.required_keys
}

#[derive(Deserialize)]
struct CreateRequest {
    #[serde(default)]
    description: String,
}

async fn create_session(
    State(state): State<Shared>,
    body: Option<Json<CreateRequest>>,
) -> Result<(StatusCode, Json<Session>), ApiError> {
    let description = body.map(|Json(b)| b.description).unwrap_or_default();
    if description.trim().is_empty() {
        return Err(ApiError::BadRequest("description is empty".into()));
    }
    let remote = state
        .config
        .remote_extraction
        .then(|| state.config.remote.clone())
        .flatten();
    let text = description.clone();
    let extraction = tokio::task::spawn_blocking(move || {
        let extractor: Box<dyn Extractor> = match remote.map(CompletionClient::new) {
            Some(Ok(client)) => Box::new(RemoteExtractor::new(client)),
            _ => Box::new(RuleBasedExtractor),
        };
        extract_parameters(&text, extractor.as_ref())
    })
    .await
    .map_err(blocking_error)??;
    let session = Session {
        id: uuid::Uuid::new_v4().simple().to_string(),
        missing: find_missing(&extraction.params, required_keys(&state)),
        shape_count: count_shapes(&description),
        description,
        params: extraction.params,
        warnings: extraction.warnings,
        verified: false,
        result: None,
    };
    state.store.insert(session.clone());
    Ok((StatusCode::CREATED, Json(session)))
}

async fn get_session(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<Session>, ApiError> {
    let handle = session_handle(&state, &id)?;
    let session = handle.lock().await;
    Ok(Json(session.clone()))
}

#[derive(Deserialize)]
struct ParamsRequest {
    #[serde(default)]
    answers: BTreeMap<String, Value>,
    /// Fill start, home, return-home and tool path with derived defaults.
    #[serde(default)]
    use_defaults: bool,
}

#[derive(Serialize)]
struct ParamsResponse {
    params: TaskParameters,
    missing: Vec<String>,
    verified: bool,
}

async fn update_params(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Json(body): Json<ParamsRequest>,
) -> Result<Json<ParamsResponse>, ApiError> {
    let handle = session_handle(&state, &id)?;
    let mut session = handle.lock().await;
    let mut params = merge_user_answers(&session.params, &body.answers)?;
    if body.use_defaults {
        params = fill_defaults(&params);
    }
    if params != session.params {
        session.verified = false;
        session.result = None;
    }
    session.missing = find_missing(&params, required_keys(&state));
    session.params = params;
    Ok(Json(ParamsResponse {
        params: session.params.clone(),
        missing: session.missing.clone(),
        verified: session.verified,
    }))
}

fn user_path(params: &TaskParameters) -> Result<Toolpath, ApiError> {
    Ok(construct_user_path(&fill_defaults(params))?)
}

#[derive(Serialize)]
struct PreviewResponse {
    svg: String,
    toolpath: Toolpath,
    gcode_toolpath: Option<Toolpath>,
}

async fn preview(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<PreviewResponse>, ApiError> {
    let handle = session_handle(&state, &id)?;
    let session = handle.lock().await;
    let toolpath = user_path(&session.params)?;
    let gcode_toolpath = session
        .result
        .as_ref()
        .and_then(|r| r.final_gcode.as_deref())
        .and_then(|g| interpret(&parse_program(g)).ok());
    let mut layers = vec![(&toolpath, PathRole::User)];
    if let Some(g) = &gcode_toolpath {
        layers.push((g, PathRole::Gcode));
    }
    let svg =
        render_svg(&layers, Canvas::default()).map_err(|e| ApiError::Conflict(e.to_string()))?;
    Ok(Json(PreviewResponse {
        svg,
        toolpath,
        gcode_toolpath,
    }))
}

#[derive(Deserialize)]
struct VerifyRequest {
    approved: bool,
}

async fn verify(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Json(body): Json<VerifyRequest>,
) -> Result<Json<Value>, ApiError> {
    let handle = session_handle(&state, &id)?;
    let mut session = handle.lock().await;
    if body.approved {
        if !session.missing.is_empty() {
            return Err(ApiError::Conflict(format!(
                "parameters still missing: {}",
                session.missing.join(", ")
            )));
        }
        user_path(&session.params)?;
    }
    session.verified = body.approved;
    Ok(Json(serde_json::json!({ "verified": session.verified })))
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum GeneratorKind {
    #[default]
    Template,
    Remote,
    Fault,
}

#[derive(Deserialize, Default)]
struct GenerateRequest {
    #[serde(default)]
    generator: GeneratorKind,
    max_iterations: Option<u32>,
    tolerance: Option<f64>,
    /// Script for the fault-injecting generator.
    #[serde(default)]
    faults: FaultScript,
}

fn build_generator(
    kind: GeneratorKind,
    remote: Option<EndpointConfig>,
    faults: FaultScript,
) -> Result<Box<dyn Generator>, ApiError> {
    Ok(match kind {
        GeneratorKind::Template => Box::new(TemplateGenerator),
        GeneratorKind::Fault => Box::new(FaultInjectingGenerator::new(faults)),
        GeneratorKind::Remote => {
            let cfg = remote.ok_or_else(|| {
                ApiError::GeneratorUnavailable("remote generator is not configured".into())
            })?;
            let client = CompletionClient::new(cfg)
                .map_err(|e| ApiError::GeneratorUnavailable(e.to_string()))?;
            Box::new(RemoteGenerator::new(client))
        }
    })
}

async fn generate(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Option<Json<GenerateRequest>>,
) -> Result<Json<LoopResult>, ApiError> {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    let handle = session_handle(&state, &id)?;
    let mut session = handle.lock().await;
    if !session.missing.is_empty() {
        return Err(ApiError::Conflict(format!(
            "parameters still missing: {}",
            session.missing.join(", ")
        )));
    }
    if !session.verified {
        return Err(ApiError::Conflict(
            "the previewed path has not been approved".into(),
        ));
    }
    let mut config = state.config.loop_config.clone();
    if let Some(n) = body.max_iterations {
        config.max_iterations = n;
    }
    if let Some(t) = body.tolerance {
        config.tolerance = t;
    }
    let params = fill_defaults(&session.params);
    let remote = state.config.remote.clone();
    let session_id = session.id.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let generator = build_generator(body.generator, remote, body.faults)?;
        Ok::<_, ApiError>(run_loop_in_session(
            &params,
            generator.as_ref(),
            &config,
            &session_id,
        ))
    })
    .await
    .map_err(blocking_error)??;
    match outcome {
        Ok(result) => {
            session.result = Some(result.clone());
            Ok(Json(result))
        }
        Err(LoopError::GeneratorUnavailable { message, partial }) => {
            session.result = Some(partial);
            Err(ApiError::GeneratorUnavailable(message))
        }
        Err(e) => Err(e.into()),
    }
}

fn failure_summary(result: &LoopResult) -> String {
    let last = result.trace.last().map(|r| {
        r.error
            .clone()
            .unwrap_or_else(|| r.feedback.lines().next().unwrap_or_default().to_string())
    });
    format!(
        "no accepted program after {} attempts{}",
        result.iterations_used,
        last.filter(|l| !l.is_empty())
            .map(|l| format!(": {l}"))
            .unwrap_or_default()
    )
}

async fn download(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let handle = session_handle(&state, &id)?;
    let session = handle.lock().await;
    let result = session
        .result
        .as_ref()
        .ok_or_else(|| ApiError::NotFound("nothing has been generated for this session".into()))?;
    match result.final_gcode.as_ref().filter(|_| result.success) {
        Some(gcode) => Ok((
            [
                (
                    header::CONTENT_TYPE,
                    "text/plain; charset=utf-8".to_string(),
                ),
                (
                    header::CONTENT_DISPOSITION,
                    format!("attachment; filename=\"{}.gcode\"", session.id),
                ),
            ],
            gcode.clone(),
        )
            .into_response()),
        None => {
            let summary = failure_summary(result);
            Err(ApiError::Failed {
                detail: format!("generation failed: {summary}"),
                summary,
            })
        }
    }
}
