//! Axum service over the hmpf pipeline.
//!
//! Sessions hold a bound pipeline plus its ground truth so that repeated
//! queries and experiments do not recompute descriptors. Everything CPU
//! heavy runs on the blocking pool.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hmpf_core::evaluation::{
    generate_synthetic_benchmark, method_recall_curves, run_experiment, sweep, GroundTruthOracle,
};
use hmpf_core::hmpf::{to_f32_rows, write_feature_file};
use hmpf_core::pipeline::extract_features;
use hmpf_core::{load_config, load_dataset, Error, ErrorCategory, MatchResult, Pipeline};
use hmpf_proto::{
    CreateSession, ErrorBody, Evaluation, EvaluateRequest, ExperimentRun, ExtractRequest, ExtractResponse, Health,
    QueryRequest, RunRequest, SessionInfo, SweepRequest, SweepResponse, SynthRequest, SyntheticSummary, TierInfo,
};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use uuid::Uuid;

struct Session {
    pipeline: Pipeline,
    oracle: GroundTruthOracle,
}

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<Uuid, Arc<Session>>>>,
}

impl AppState {
    fn session(&self, id: Uuid) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }
}

/// An error on its way to the wire.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn not_found(message: String) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            body: ErrorBody { category: ErrorCategory::Usage, message },
        }
    }
}

/// HTTP status used for each error category.
pub fn status_for(category: ErrorCategory) -> StatusCode {
    match category {
        ErrorCategory::Usage | ErrorCategory::Parse => StatusCode::BAD_REQUEST,
        ErrorCategory::Validation | ErrorCategory::Mismatch => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorCategory::Io | ErrorCategory::Internal => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let category = e.category();
        ApiError {
            status: status_for(category),
            body: ErrorBody { category, message: e.to_string() },
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: ErrorBody { category: ErrorCategory::Usage, message: r.body_text() },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(category = %self.body.category, "{}", self.body.message);
        }
        (self.status, Json(self.body)).into_response()
    }
}

/// `Json` whose rejections use the service's error body.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let Json(v) = Json::<T>::from_request(req, state).await?;
        Ok(ApiJson(v))
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> hmpf_core::Result<T> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => Ok(Json(r?)),
        Err(e) => Err(Error::Internal(format!("worker task: {e}")).into()),
    }
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

async fn create_session(State(state): State<AppState>, ApiJson(req): ApiJson<CreateSession>) -> ApiResult<SessionInfo> {
    let Json(session) = blocking(move || {
        let dataset = load_dataset(&req.manifest)?;
        let mut config = load_config(&req.config)?;
        if let Some(schedule) = &req.schedule {
            config = config.with_schedule(schedule)?;
        }
        let oracle = GroundTruthOracle::new(&dataset)?;
        let pipeline = Pipeline::bind(config, &dataset)?;
        Ok(Session { pipeline, oracle })
    })
    .await?;
    let id = Uuid::new_v4();
    let config = session.pipeline.config();
    let info = SessionInfo {
        session: id,
        num_references: session.pipeline.num_references(),
        num_queries: session.pipeline.num_queries(),
        combined: config.combined,
        tiers: config
            .tiers
            .iter()
            .map(|t| TierInfo {
                k_out: t.k_out,
                weight: t.weight,
                methods: t.methods.iter().map(|m| m.name.clone()).collect(),
            })
            .collect(),
    };
    state.sessions.write().expect("session map poisoned").insert(id, Arc::new(session));
    tracing::info!(%id, "session created");
    Ok(Json(info))
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<Uuid>) -> Result<StatusCode, ApiError> {
    match state.sessions.write().expect("session map poisoned").remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::not_found(format!("no session {id}"))),
    }
}

async fn query(
    State(state): State<AppState>,
    Path(id): Path<Uuid>,
    ApiJson(req): ApiJson<QueryRequest>,
) -> ApiResult<MatchResult> {
    let s = state.session(id)?;
    blocking(move || {
        if req.query.0 >= s.pipeline.num_queries() {
            return Err(Error::Usage(format!(
                "query {} out of range (session has {} queries)",
                req.query.0,
                s.pipeline.num_queries()
            )));
        }
        s.pipeline.run_query(req.query)
    })
    .await
}

async fn run(
    State(state): State<AppState>,
    Path(id): Path<Uuid>,
    ApiJson(req): ApiJson<RunRequest>,
) -> ApiResult<ExperimentRun> {
    let s = state.session(id)?;
    blocking(move || run_experiment(&s.pipeline, &s.oracle, req.name.as_deref().unwrap_or("run"), req.workers)).await
}

async fn evaluate(
    State(state): State<AppState>,
    Path(id): Path<Uuid>,
    ApiJson(req): ApiJson<EvaluateRequest>,
) -> ApiResult<Evaluation> {
    let s = state.session(id)?;
    blocking(move || {
        let curves = method_recall_curves(&s.pipeline, &s.oracle, &req.n_values, req.workers)?;
        let run = run_experiment(&s.pipeline, &s.oracle, req.name.as_deref().unwrap_or("eval"), req.workers)?;
        Ok(Evaluation { run, curves })
    })
    .await
}

async fn sweep_handler(
    State(state): State<AppState>,
    Path(id): Path<Uuid>,
    ApiJson(req): ApiJson<SweepRequest>,
) -> ApiResult<SweepResponse> {
    let s = state.session(id)?;
    blocking(move || {
        let reports = sweep(&s.pipeline, &s.oracle, &req.schedules, req.workers)?;
        Ok(SweepResponse { reports })
    })
    .await
}

async fn extract(ApiJson(req): ApiJson<ExtractRequest>) -> ApiResult<ExtractResponse> {
    blocking(move || {
        let dataset = load_dataset(&req.manifest)?;
        let features = extract_features(&dataset, req.list, &req.method)?;
        write_feature_file(&req.out, features.dim, &to_f32_rows(&features.vectors))?;
        Ok(ExtractResponse {
            out: req.out,
            count: features.len(),
            dim: features.dim,
        })
    })
    .await
}

async fn synth(ApiJson(req): ApiJson<SynthRequest>) -> ApiResult<SyntheticSummary> {
    blocking(move || generate_synthetic_benchmark(&req.spec, &req.out_dir)).await
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", axum::routing::delete(delete_session))
        .route("/v1/sessions/{id}/query", post(query))
        .route("/v1/sessions/{id}/run", post(run))
        .route("/v1/sessions/{id}/evaluate", post(evaluate))
        .route("/v1/sessions/{id}/sweep", post(sweep_handler))
        .route("/v1/extract", post(extract))
        .route("/v1/synth", post(synth))
        .with_state(state)
}

/// Serves on an already bound listener until the future is dropped.
pub async fn serve(listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(AppState::default())).await
}

/// Binds `addr` (port 0 picks a free one) and serves in a background task.
pub async fn spawn(addr: SocketAddr) -> std::io::Result<(SocketAddr, JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((local, tokio::spawn(serve(listener))))
}
