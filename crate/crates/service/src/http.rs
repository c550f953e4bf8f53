//! JSON API over [`Engine`].

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tower_http::cors::CorsLayer;
use weaver_core::NodeId;

use crate::engine::Engine;
use crate::error::ServiceError;
use crate::export::ExportFormat;
use crate::session::{CreateNode, CreateSession, ExpandRequest, SuggestRequest, UpdateNode};

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        (status, Json(self.0.body())).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Validation(format!("request handler crashed: {e}")))?
        .map_err(ApiError)
}

/// Empty bodies decode to the type's default.
fn body<T: DeserializeOwned + Default>(bytes: &Bytes) -> Result<T, ServiceError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    required_body(bytes)
}

fn required_body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(bytes).map_err(|e| ServiceError::Validation(format!("invalid request body: {e}")))
}

fn node_id(raw: &str) -> Result<NodeId, ServiceError> {
    raw.parse()
        .map_err(|_| ServiceError::Validation(format!("{raw:?} is not a node id")))
}

type AppState = Arc<Engine>;

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}/tree", get(tree))
        .route("/sessions/{id}/export", get(export))
        .route("/sessions/{id}/prefetch", post(prefetch))
        .route("/sessions/{id}/nodes", post(create_node))
        .route("/sessions/{id}/nodes/{nid}", get(node).patch(update_node).delete(remove_node))
        .route("/sessions/{id}/nodes/{nid}/expand", post(expand))
        .route("/sessions/{id}/nodes/{nid}/recommend-more", post(recommend_more))
        .route("/sessions/{id}/nodes/{nid}/suggest-tests", post(suggest_tests))
        .fallback(|| async { ApiError(ServiceError::NoRoute) })
        .layer(CorsLayer::permissive())
        .with_state(engine)
}

async fn create_session(State(engine): State<AppState>, bytes: Bytes) -> ApiResult<Response> {
    let req: CreateSession = required_body(&bytes)?;
    let view = blocking(move || engine.create_session(&req)).await?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn list_sessions(State(engine): State<AppState>) -> ApiResult<Response> {
    let ids = blocking(move || engine.list_sessions()).await?;
    Ok(Json(serde_json::json!({ "sessions": ids })).into_response())
}

async fn tree(State(engine): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(move || engine.tree(&id)).await?).into_response())
}

async fn node(State(engine): State<AppState>, Path((id, nid)): Path<(String, String)>) -> ApiResult<Response> {
    let nid = node_id(&nid)?;
    Ok(Json(blocking(move || engine.node(&id, nid)).await?).into_response())
}

async fn expand(
    State(engine): State<AppState>,
    Path((id, nid)): Path<(String, String)>,
    bytes: Bytes,
) -> ApiResult<Response> {
    let nid = node_id(&nid)?;
    let req: ExpandRequest = body(&bytes)?;
    Ok(Json(blocking(move || engine.expand(&id, nid, &req)).await?).into_response())
}

async fn recommend_more(
    State(engine): State<AppState>,
    Path((id, nid)): Path<(String, String)>,
) -> ApiResult<Response> {
    let nid = node_id(&nid)?;
    Ok(Json(blocking(move || engine.recommend_more(&id, nid)).await?).into_response())
}

async fn create_node(State(engine): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let req: CreateNode = required_body(&bytes)?;
    let view = blocking(move || engine.create_node(&id, &req)).await?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn update_node(
    State(engine): State<AppState>,
    Path((id, nid)): Path<(String, String)>,
    bytes: Bytes,
) -> ApiResult<Response> {
    let nid = node_id(&nid)?;
    let req: UpdateNode = required_body(&bytes)?;
    Ok(Json(blocking(move || engine.update_node(&id, nid, &req)).await?).into_response())
}

async fn remove_node(
    State(engine): State<AppState>,
    Path((id, nid)): Path<(String, String)>,
) -> ApiResult<Response> {
    let nid = node_id(&nid)?;
    Ok(Json(blocking(move || engine.remove_node(&id, nid)).await?).into_response())
}

async fn suggest_tests(
    State(engine): State<AppState>,
    Path((id, nid)): Path<(String, String)>,
    bytes: Bytes,
) -> ApiResult<Response> {
    let nid = node_id(&nid)?;
    let req: SuggestRequest = body(&bytes)?;
    Ok(Json(blocking(move || engine.suggest_tests(&id, nid, &req)).await?).into_response())
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export(
    State(engine): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Response> {
    let format: ExportFormat = q.format.as_deref().unwrap_or("json").parse()?;
    let text = blocking(move || engine.export(&id, format)).await?;
    let mut response = text.into_response();
    response
        .headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static(format.content_type()));
    Ok(response)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrefetchRequest {
    #[serde(default)]
    nodes: Vec<NodeId>,
}

/// Checks the session, then warms caches in the background and answers 202
/// straight away.
async fn prefetch(State(engine): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let req: PrefetchRequest = body(&bytes)?;
    let check = engine.clone();
    let sid = id.clone();
    blocking(move || check.tree(&sid).map(|_| ())).await?;
    let nodes = req.nodes.clone();
    tokio::task::spawn_blocking(move || {
        if let Err(e) = engine.prefetch(&id, &nodes) {
            log::debug!("prefetch for {id} failed: {e}");
        }
    });
    Ok((StatusCode::ACCEPTED, Json(serde_json::json!({ "scheduled": req.nodes }))).into_response())
}

/// Serves until ctrl-c. `on_bound` receives the bound address, which
/// matters when the requested port is 0.
pub async fn serve(engine: Arc<Engine>, addr: SocketAddr, on_bound: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
