//! HTTP service: sessions over cohort patients, synchronous simulation,
//! asynchronous exploration jobs and PNG slices of stored states.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use anyhow::Context as _;
use axum::body::{Body, Bytes};
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mewm_core::actions::{
    propose_action_base, ObservationSummary, PolicyConfig, RuleViolation, Vocabulary,
};
use mewm_core::explorer::{explore, ExplorationConfig};
use mewm_core::{ComboNames, CoxModel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::cli::{read_json, ServeArgs};
use crate::engine::{patient_context, simulate_combo, PatientContext};
use crate::slice::{encode_png, mask_slice, volume_slice, Axis, Layer};
use crate::store::{EvaluatedProtocol, ExplorationRecord, JobStatus, SessionState, Store};

/// Header carrying the client's retry key for POST requests.
pub const REQUEST_ID_HEADER: &str = "x-request-id";
pub const MAX_REPLICAS: usize = 64;
pub const MAX_BEAMS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<RuleViolation>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: code.into(),
                message: message.into(),
                violations: vec![],
            },
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad-request", message)
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "not-found",
            format!("unknown {what} {id}"),
        )
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl From<mewm_core::Error> for ApiError {
    fn from(e: mewm_core::Error) -> Self {
        use mewm_core::Error as E;
        let status = match e.root() {
            E::RuleViolation(_) | E::DeadEnd { .. } => StatusCode::CONFLICT,
            E::InvalidArgument(_)
            | E::UnknownUnit(_)
            | E::TooLarge { .. }
            | E::NoTumor
            | E::EmptyLiver => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let violations = match e.root() {
            E::RuleViolation(v) => v.clone(),
            _ => vec![],
        };
        ApiError {
            status,
            body: ErrorBody {
                error: e.code().into(),
                message: e.to_string(),
                violations,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// JSON body whose parse failures are reported as 400 with the error body.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        serde_json::from_slice(&bytes)
            .map(ApiJson)
            .map_err(|e| ApiError::bad_request(format!("invalid body: {e}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    pub patient_id: String,
    /// `planted` or a model JSON relative to the data root.
    #[serde(default)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    pub combo: ComboNames,
    #[serde(rename = "T", alias = "replicas", default = "one")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub provenance: Option<String>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub combo: ComboNames,
    pub mean_risk: f64,
    pub replica_risks: Vec<f64>,
    pub state_id: String,
    #[serde(rename = "T")]
    pub replicas: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploreRequest {
    pub config: ExplorationConfig,
    #[serde(default)]
    pub goal: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub id: String,
    pub session_id: String,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<mewm_core::explorer::Plan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SliceQuery {
    #[serde(default = "default_axis")]
    pub axis: Axis,
    pub index: usize,
    #[serde(default)]
    pub layer: Layer,
}

fn default_axis() -> Axis {
    Axis::Z
}

#[derive(Clone)]
struct Cached {
    status: StatusCode,
    content_type: Option<HeaderValue>,
    body: Bytes,
}

type Slot = Arc<tokio::sync::Mutex<Option<Cached>>>;

struct Inner {
    store: Store,
    vocabulary: Vocabulary,
    policy: PolicyConfig,
    sessions: Mutex<HashMap<String, SessionState>>,
    /// Job id to owning session id; job state lives in the session record.
    jobs: Mutex<HashMap<String, String>>,
    contexts: Mutex<HashMap<String, Arc<PatientContext>>>,
    replies: Mutex<HashMap<String, Slot>>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

fn new_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

impl AppState {
    /// Opens the store and reloads persisted sessions; jobs that were still
    /// active are marked failed.
    pub fn open(
        store: Store,
        vocabulary: Vocabulary,
        mut policy: PolicyConfig,
    ) -> anyhow::Result<Self> {
        vocabulary.validate()?;
        policy.vocabulary = vocabulary.clone();
        let mut sessions = HashMap::new();
        let mut jobs = HashMap::new();
        for mut s in store.load_sessions()? {
            let mut interrupted = false;
            if let Some(rec) = s.exploration.as_mut() {
                if rec.status.is_active() {
                    rec.status = JobStatus::Failed;
                    rec.error = Some("interrupted by service restart".into());
                    interrupted = true;
                }
                jobs.insert(rec.job_id.clone(), s.id.clone());
            }
            if interrupted {
                store.save_session(&s)?;
            }
            sessions.insert(s.id.clone(), s);
        }
        Ok(AppState {
            inner: Arc::new(Inner {
                store,
                vocabulary,
                policy,
                sessions: Mutex::new(sessions),
                jobs: Mutex::new(jobs),
                contexts: Mutex::new(HashMap::new()),
                replies: Mutex::new(HashMap::new()),
            }),
        })
    }

    fn session(&self, id: &str) -> ApiResult<SessionState> {
        self.inner
            .sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }

    /// Applies `f` to the session and persists it, under the session map lock.
    fn update_session<R>(
        &self,
        id: &str,
        f: impl FnOnce(&mut SessionState) -> ApiResult<R>,
    ) -> ApiResult<R> {
        let mut map = self.inner.sessions.lock().unwrap();
        let s = map
            .get_mut(id)
            .ok_or_else(|| ApiError::not_found("session", id))?;
        let mut next = s.clone();
        let r = f(&mut next)?;
        self.inner
            .store
            .save_session(&next)
            .map_err(ApiError::internal)?;
        *s = next;
        Ok(r)
    }

    fn load_model(&self, model: &str) -> ApiResult<Option<CoxModel>> {
        if model == "planted" {
            return Ok(None);
        }
        let path = self
            .inner
            .store
            .resolve(model)
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        if !path.exists() {
            return Err(ApiError::not_found("model", model));
        }
        CoxModel::load(&path)
            .map(Some)
            .map_err(|e| ApiError::bad_request(format!("model {model}: {e}")))
    }

    async fn context(&self, session: &SessionState) -> ApiResult<Arc<PatientContext>> {
        if let Some(c) = self.inner.contexts.lock().unwrap().get(&session.id) {
            return Ok(c.clone());
        }
        let dir = self
            .inner
            .store
            .resolve(&session.patient_id)
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        let cox = self.load_model(&session.model)?;
        let vocab = self.inner.vocabulary.clone();
        let ctx =
            tokio::task::spawn_blocking(move || patient_context(&dir, None, Some(vocab), cox))
                .await
                .map_err(ApiError::internal)?
                .map_err(|e| {
                    ApiError::new(
                        StatusCode::INTERNAL_SERVER_ERROR,
                        "patient-load",
                        format!("{e:#}"),
                    )
                })?;
        let ctx = Arc::new(ctx);
        self.inner
            .contexts
            .lock()
            .unwrap()
            .insert(session.id.clone(), ctx.clone());
        Ok(ctx)
    }
}

async fn create_session(
    State(app): State<AppState>,
    ApiJson(req): ApiJson<CreateSessionRequest>,
) -> ApiResult<(StatusCode, Json<SessionState>)> {
    let dir = app
        .inner
        .store
        .resolve(&req.patient_id)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    if !mewm_core::voxel::io::header_path(&dir.join("ct")).exists() {
        return Err(ApiError::not_found("patient", &req.patient_id));
    }
    let model = req.model.unwrap_or_else(|| "planted".into());
    app.load_model(&model)?;
    let session = SessionState {
        id: new_id(),
        patient_id: req.patient_id,
        model,
        pre_state_id: new_id(),
        evaluated: vec![],
        exploration: None,
    };
    let ctx = app.context(&session).await?;
    let store = app.inner.store.clone();
    let pre_id = session.pre_state_id.clone();
    let ctx2 = ctx.clone();
    tokio::task::spawn_blocking(move || {
        store.write_state(&pre_id, &ctx2.patient.pre, &ctx2.patient.mask)
    })
    .await
    .map_err(ApiError::internal)?
    .map_err(ApiError::internal)?;
    app.inner
        .store
        .save_session(&session)
        .map_err(ApiError::internal)?;
    app.inner
        .sessions
        .lock()
        .unwrap()
        .insert(session.id.clone(), session.clone());
    Ok((StatusCode::CREATED, Json(session)))
}

async fn get_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionState>> {
    app.session(&id).map(Json)
}

async fn get_actions(State(app): State<AppState>) -> Json<Vocabulary> {
    Json(app.inner.vocabulary.clone())
}

async fn simulate_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<SimulateRequest>,
) -> ApiResult<Json<SimulateResponse>> {
    let session = app.session(&id)?;
    if req.replicas == 0 || req.replicas > MAX_REPLICAS {
        return Err(ApiError::bad_request(format!(
            "T must lie in 1..={MAX_REPLICAS}"
        )));
    }
    let ctx = app.context(&session).await?;
    let store = app.inner.store.clone();
    let state_id = new_id();
    let (names, replicas, seed) = (req.combo.clone(), req.replicas, req.seed);
    let sid = state_id.clone();
    let summary = tokio::task::spawn_blocking(move || -> ApiResult<_> {
        let (summary, ev, post_mask) = simulate_combo(&ctx, &names, replicas, seed)?;
        store
            .write_state(&sid, &ev.states[0].volume, &post_mask)
            .map_err(ApiError::internal)?;
        Ok(summary)
    })
    .await
    .map_err(ApiError::internal)??;
    let entry = EvaluatedProtocol {
        combo: summary.combo.clone(),
        mean_risk: summary.mean_risk,
        replica_risks: summary.replica_risks.clone(),
        replicas,
        seed,
        state_id: state_id.clone(),
        provenance: req.provenance.unwrap_or_else(|| "manual".into()),
    };
    app.update_session(&id, |s| {
        s.evaluated.push(entry);
        Ok(())
    })?;
    Ok(Json(SimulateResponse {
        combo: summary.combo,
        mean_risk: summary.mean_risk,
        replica_risks: summary.replica_risks,
        state_id,
        replicas,
        seed,
    }))
}

fn job_view(session: &SessionState) -> Option<JobView> {
    session.exploration.as_ref().map(|r| JobView {
        id: r.job_id.clone(),
        session_id: session.id.clone(),
        status: r.status,
        result: r.plan.clone(),
        error: r.error.clone(),
    })
}

async fn explore_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<ExploreRequest>,
) -> ApiResult<(StatusCode, Json<JobView>)> {
    req.config.validate()?;
    if req.config.beams > MAX_BEAMS || req.config.replicas > MAX_REPLICAS {
        return Err(ApiError::bad_request(format!(
            "beams and replicas are capped at {MAX_BEAMS}"
        )));
    }
    let session = app.session(&id)?;
    let ctx = app.context(&session).await?;
    let goal = req.goal.unwrap_or_else(|| "maximize survival".into());
    let job_id = new_id();
    let record = ExplorationRecord {
        job_id: job_id.clone(),
        status: JobStatus::Queued,
        config: req.config,
        goal: goal.clone(),
        plan: None,
        error: None,
    };
    let view = app.update_session(&id, |s| {
        if let Some(active) = s.exploration.as_ref().filter(|r| r.status.is_active()) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "job-active",
                format!("session already runs exploration job {}", active.job_id),
            ));
        }
        s.exploration = Some(record);
        Ok(job_view(s).expect("just set"))
    })?;
    app.inner
        .jobs
        .lock()
        .unwrap()
        .insert(job_id.clone(), id.clone());

    let app2 = app.clone();
    let cfg = req.config;
    tokio::task::spawn_blocking(move || {
        let set = |status: JobStatus, plan, error| {
            let r = app2.update_session(&id, |s| {
                if let Some(rec) = s.exploration.as_mut().filter(|r| r.job_id == job_id) {
                    rec.status = status;
                    rec.plan = plan;
                    rec.error = error;
                }
                Ok(())
            });
            if let Err(e) = r {
                log::error!("job {job_id}: could not record status: {}", e.body.message);
            }
        };
        set(JobStatus::Running, None, None);
        let outcome = propose_action_base(
            &ObservationSummary::from_mask(&ctx.patient.mask),
            &goal,
            &app2.inner.policy,
        )
        .and_then(|reply| {
            for w in &reply.warnings {
                log::warn!("job {job_id} policy {}: {}", w.code, w.message);
            }
            explore(
                &ctx.patient.pre,
                &ctx.patient.mask,
                &goal,
                &reply.base,
                &ctx.world,
                &cfg,
            )
        });
        match outcome {
            Ok(plan) => set(JobStatus::Succeeded, Some(plan), None),
            Err(e) => set(JobStatus::Failed, None, Some(format!("{}: {e}", e.code()))),
        }
    });
    Ok((StatusCode::ACCEPTED, Json(view)))
}

async fn get_job(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JobView>> {
    let session_id = app
        .inner
        .jobs
        .lock()
        .unwrap()
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("job", &id))?;
    let session = app.session(&session_id)?;
    job_view(&session)
        .filter(|j| j.id == id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found("job", &id))
}

async fn get_slice(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<SliceQuery>,
) -> ApiResult<Response> {
    if !app.inner.store.has_state(&id) {
        return Err(ApiError::not_found("state", &id));
    }
    let store = app.inner.store.clone();
    let png = tokio::task::spawn_blocking(move || -> ApiResult<Vec<u8>> {
        let (w, h, px) = match q.layer {
            Layer::Volume => {
                let v = store.read_state_volume(&id).map_err(ApiError::internal)?;
                volume_slice(&v, q.axis, q.index)
            }
            Layer::Mask => {
                let m = store.read_state_mask(&id).map_err(ApiError::internal)?;
                mask_slice(&m, q.axis, q.index)
            }
        }
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
        encode_png(w, h, &px).map_err(ApiError::internal)
    })
    .await
    .map_err(ApiError::internal)??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

/// Replays the stored response for a repeated `x-request-id` on the same
/// POST path; same-key requests are serialized.
async fn idempotency(State(app): State<AppState>, req: Request, next: Next) -> Response {
    if req.method() != Method::POST {
        return next.run(req).await;
    }
    let Some(key) = req
        .headers()
        .get(REQUEST_ID_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_owned)
    else {
        return next.run(req).await;
    };
    let slot = {
        let mut map = app.inner.replies.lock().unwrap();
        map.entry(format!("{} {key}", req.uri().path()))
            .or_default()
            .clone()
    };
    let mut guard = slot.lock().await;
    if let Some(c) = guard.as_ref() {
        let mut resp = Response::new(Body::from(c.body.clone()));
        *resp.status_mut() = c.status;
        if let Some(ct) = &c.content_type {
            resp.headers_mut().insert(header::CONTENT_TYPE, ct.clone());
        }
        resp.headers_mut()
            .insert("idempotent-replay", HeaderValue::from_static("true"));
        return resp;
    }
    let (parts, body) = next.run(req).await.into_parts();
    let bytes = match axum::body::to_bytes(body, usize::MAX).await {
        Ok(b) => b,
        Err(e) => return ApiError::internal(e).into_response(),
    };
    if !parts.status.is_server_error() {
        *guard = Some(Cached {
            status: parts.status,
            content_type: parts.headers.get(header::CONTENT_TYPE).cloned(),
            body: bytes.clone(),
        });
    }
    Response::from_parts(parts, Body::from(bytes))
}

fn cors(origins: &[String]) -> anyhow::Result<CorsLayer> {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
        .allow_headers(Any)
        .expose_headers(Any);
    if origins.is_empty() {
        return Ok(layer.allow_origin(Any));
    }
    let list = origins
        .iter()
        .map(|o| HeaderValue::from_str(o).with_context(|| format!("invalid CORS origin {o:?}")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(layer.allow_origin(AllowOrigin::list(list)))
}

pub fn router(app: AppState, cors_origins: &[String]) -> anyhow::Result<Router> {
    Ok(Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/simulate", post(simulate_session))
        .route("/sessions/{id}/explore", post(explore_session))
        .route("/jobs/{id}", get(get_job))
        .route("/actions", get(get_actions))
        .route("/states/{id}/slice", get(get_slice))
        .layer(middleware::from_fn_with_state(app.clone(), idempotency))
        .layer(cors(cors_origins)?)
        .with_state(app))
}

pub fn build(args: &ServeArgs) -> anyhow::Result<Router> {
    let store = Store::open(PathBuf::from(&args.data_dir))?;
    let vocabulary: Vocabulary = args
        .vocabulary
        .as_deref()
        .map(read_json)
        .transpose()?
        .unwrap_or_default();
    let policy: PolicyConfig = args
        .policy
        .as_deref()
        .map(read_json)
        .transpose()?
        .unwrap_or_default();
    router(
        AppState::open(store, vocabulary, policy)?,
        &args.cors_origins,
    )
}

pub fn serve_blocking(args: ServeArgs) -> anyhow::Result<()> {
    let app = build(&args)?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(async move {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        log::info!("listening on {}", listener.local_addr()?);
        eprintln!(
            "mewm serving {} on http://{}",
            args.data_dir.display(),
            listener.local_addr()?
        );
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
