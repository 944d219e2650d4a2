//! Local HTTP advisor for live screening campaigns.
//!
//! Routes (all JSON):
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | GET | `/campaigns` | | `{"campaigns": [id…]}` |
//! | POST | `/campaigns` | [`CreateCampaign`] | [`CampaignView`], 201 |
//! | GET | `/campaigns/{id}` | | [`CampaignView`] |
//! | POST | `/campaigns/{id}/suggest` | | `Suggestion` |
//! | POST | `/campaigns/{id}/observe` | `Observation` | [`CampaignView`] |
//! | GET | `/campaigns/{id}/observations` | | `[Observation]` |
//! | GET | `/campaigns/{id}/posterior?arms=a,b` | | `[PosteriorEntry]` |
//! | POST | `/campaigns/{id}/whatif` | [`WhatIf`] | `Suggestion` |
//!
//! Errors are `{"code": …, "message": …}` with status 404 (unknown campaign
//! or arm), 409 (repeated observation), 422 (malformed request) or 500.

pub mod error;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use gptree_core::harness::{Campaign, CampaignSpec, CampaignStatus, Observation, PosteriorEntry, Suggestion};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

pub use error::{ApiError, ErrorBody};
pub use store::CampaignStore;

type ApiResult<T> = Result<T, ApiError>;
type Shared = Arc<CampaignStore>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateCampaign {
    /// Generated as `campaign-N` when absent.
    #[serde(default)]
    pub id: Option<String>,
    /// Candidate CSV text: `id,y,f1,…` where `y` may be left empty.
    pub candidates_csv: String,
    pub spec: CampaignSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignView {
    pub id: String,
    #[serde(flatten)]
    pub status: CampaignStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIf {
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct PosteriorQuery {
    /// Comma-separated arm ids; every candidate when absent or empty.
    #[serde(default)]
    pub arms: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignList {
    pub campaigns: Vec<String>,
}

/// Where campaigns live and which UI bundle, if any, to serve.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub store: PathBuf,
    pub static_dir: Option<PathBuf>,
}

fn view(id: &str, c: &Campaign) -> CampaignView {
    CampaignView {
        id: id.to_string(),
        status: c.status(),
    }
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> gptree_core::Result<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(ApiError::from)
}

async fn list(State(store): State<Shared>) -> ApiResult<Json<CampaignList>> {
    let campaigns = store.list().map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(CampaignList { campaigns }))
}

async fn create(
    State(store): State<Shared>,
    body: Result<Json<CreateCampaign>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<CampaignView>)> {
    let Json(req) = body?;
    let (id, campaign) = store.create(req.id, req.spec, req.candidates_csv).await?;
    Ok((StatusCode::CREATED, Json(view(&id, &campaign))))
}

async fn status(State(store): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<CampaignView>> {
    let campaign = store.snapshot(&id)?;
    Ok(Json(view(&id, &campaign)))
}

async fn suggest(State(store): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Suggestion>> {
    let campaign = store.snapshot(&id)?;
    Ok(Json(blocking(move || campaign.suggest()).await?))
}

async fn observe(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<Observation>, JsonRejection>,
) -> ApiResult<Json<CampaignView>> {
    let Json(obs) = body?;
    let campaign = store.update(&id, move |c| c.observe(&obs.arm_id, obs.y)).await?;
    Ok(Json(view(&id, &campaign)))
}

async fn observations(State(store): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Vec<Observation>>> {
    Ok(Json(store.snapshot(&id)?.observations().to_vec()))
}

async fn posterior(
    State(store): State<Shared>,
    Path(id): Path<String>,
    query: Result<Query<PosteriorQuery>, QueryRejection>,
) -> ApiResult<Json<Vec<PosteriorEntry>>> {
    let Query(q) = query?;
    let arms: Vec<String> = q
        .arms
        .unwrap_or_default()
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    let campaign = store.snapshot(&id)?;
    Ok(Json(campaign.posterior(&arms)?))
}

async fn whatif(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<WhatIf>, JsonRejection>,
) -> ApiResult<Json<Suggestion>> {
    let Json(req) = body?;
    let campaign = store.snapshot(&id)?;
    Ok(Json(blocking(move || campaign.whatif(&req.observations)).await?))
}

async fn unknown_route() -> ApiError {
    ApiError::not_found("no such route")
}

/// The API routes over a store, without static files.
pub fn api_router(store: Arc<CampaignStore>) -> Router {
    Router::new()
        .route("/campaigns", get(list).post(create))
        .route("/campaigns/{id}", get(status))
        .route("/campaigns/{id}/suggest", post(suggest))
        .route("/campaigns/{id}/observe", post(observe))
        .route("/campaigns/{id}/observations", get(observations))
        .route("/campaigns/{id}/posterior", get(posterior))
        .route("/campaigns/{id}/whatif", post(whatif))
        .with_state(store)
}

pub fn router(cfg: &ServiceConfig) -> std::io::Result<Router> {
    let store = Arc::new(CampaignStore::new(&cfg.store)?);
    let api = api_router(store);
    Ok(match &cfg.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(unknown_route),
    })
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, cfg: ServiceConfig) -> std::io::Result<()> {
    let app = router(&cfg)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("advisor listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).await
}
