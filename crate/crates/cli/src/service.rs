//! HTTP editing service. Sessions live in memory; each session's solves are serialized by its
//! own lock, and render jobs work on a snapshot taken when they are submitted, so a solve never
//! waits for a render and never changes one that is already queued.

use std::collections::{HashMap, VecDeque};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use nerfdeform::arap::{ArapError, HandleSet};
use nerfdeform::bend::WarpStrategy;
use nerfdeform::field::RadianceFieldGrid;
use nerfdeform::geom::TriMesh;
use nerfdeform::pipeline::{DeformMode, EditSession, PipelineError, RenderSnapshot};
use nerfdeform::render::{render_image, Camera, SampleSpec, SpaceWarp};

/// Render jobs waiting to start; submitting past this rejects the oldest waiting job.
pub const QUEUE_CAPACITY: usize = 4;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    index: Option<usize>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into(), index: None }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no {what} with id {id:?}"))
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let index = match &e {
            PipelineError::Arap(ArapError::HandleOutOfRange { index, .. }) => Some(*index),
            PipelineError::Arap(ArapError::DuplicateHandle(index)) => Some(*index),
            _ => None,
        };
        let status = if e.exit_code() == nerfdeform::pipeline::EXIT_NUMERICAL {
            StatusCode::INTERNAL_SERVER_ERROR
        } else {
            StatusCode::UNPROCESSABLE_ENTITY
        };
        Self { status, message: e.to_string(), index }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "version": 1, "error": self.message });
        if let Some(i) = self.index {
            body["index"] = json!(i);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct SessionEntry {
    field: Arc<RadianceFieldGrid>,
    edit: Arc<tokio::sync::Mutex<EditSession>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Done | Self::Failed)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JobInfo {
    pub version: u32,
    pub id: String,
    pub session: String,
    pub status: JobStatus,
    pub warp: WarpStrategy,
    pub camera: Camera,
    pub sampler: SampleSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct RenderTask {
    field: Arc<RadianceFieldGrid>,
    snapshot: RenderSnapshot,
    mask_vacated: bool,
}

#[derive(Default)]
struct Board {
    jobs: HashMap<u64, JobInfo>,
    tasks: HashMap<u64, RenderTask>,
    queue: VecDeque<u64>,
}

/// Bounded render queue drained by one worker thread; each render is parallel inside.
pub struct JobBoard {
    board: Mutex<Board>,
    wake: Condvar,
    next: AtomicU64,
    capacity: usize,
    out_dir: PathBuf,
}

impl JobBoard {
    pub fn start(out_dir: PathBuf, capacity: usize) -> Arc<Self> {
        let board = Arc::new(Self {
            board: Mutex::new(Board::default()),
            wake: Condvar::new(),
            next: AtomicU64::new(1),
            capacity: capacity.max(1),
            out_dir,
        });
        let worker = Arc::downgrade(&board);
        std::thread::Builder::new()
            .name("render-worker".into())
            .spawn(move || {
                while let Some(board) = worker.upgrade() {
                    board.run_next();
                }
            })
            .expect("spawn render worker");
        board
    }

    fn submit(&self, mut info: JobInfo, task: RenderTask) -> String {
        let id = self.next.fetch_add(1, Ordering::Relaxed);
        info.id = id.to_string();
        let mut b = self.board.lock().expect("job board poisoned");
        while b.queue.len() >= self.capacity {
            let old = b.queue.pop_front().expect("non-empty queue");
            b.tasks.remove(&old);
            if let Some(j) = b.jobs.get_mut(&old) {
                j.status = JobStatus::Failed;
                j.error = Some("rejected: render queue full".into());
            }
            log::warn!("render queue full; rejected job {old}");
        }
        b.jobs.insert(id, info);
        b.tasks.insert(id, task);
        b.queue.push_back(id);
        self.wake.notify_one();
        id.to_string()
    }

    pub fn get(&self, id: &str) -> Option<JobInfo> {
        let id: u64 = id.parse().ok()?;
        self.board.lock().expect("job board poisoned").jobs.get(&id).cloned()
    }

    /// Waits briefly for a job, runs it and records the outcome.
    fn run_next(&self) {
        let (id, info, task) = {
            let mut b = self.board.lock().expect("job board poisoned");
            if b.queue.is_empty() {
                let (guard, _) =
                    self.wake.wait_timeout(b, std::time::Duration::from_millis(200)).expect("job board poisoned");
                b = guard;
            }
            let Some(id) = b.queue.pop_front() else { return };
            let task = b.tasks.remove(&id).expect("queued job has a task");
            let job = b.jobs.get_mut(&id).expect("queued job is recorded");
            job.status = JobStatus::Running;
            (id, job.clone(), task)
        };
        let path = self.out_dir.join(format!("job-{id}.png"));
        let outcome = render_job(&info, &task, &path);
        let mut b = self.board.lock().expect("job board poisoned");
        if let Some(job) = b.jobs.get_mut(&id) {
            match outcome {
                Ok(()) => {
                    job.status = JobStatus::Done;
                    job.image = Some(path);
                }
                Err(e) => {
                    log::error!("render job {id} failed: {e}");
                    job.status = JobStatus::Failed;
                    job.error = Some(e);
                }
            }
        }
    }
}

fn render_job(info: &JobInfo, task: &RenderTask, path: &Path) -> Result<(), String> {
    let warp = task.snapshot.warp(info.warp, task.mask_vacated).map_err(|e| e.to_string())?;
    let image = render_image(&task.field, &info.camera, &info.sampler, Some(&warp as &dyn SpaceWarp)).map_err(|e| e.to_string())?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    }
    image.save(path).map_err(|e| e.to_string())
}

pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<SessionEntry>>>,
    next_session: AtomicU64,
    pub jobs: Arc<JobBoard>,
}

impl AppState {
    pub fn new(out_dir: PathBuf) -> Arc<Self> {
        Arc::new(Self {
            sessions: RwLock::new(HashMap::new()),
            next_session: AtomicU64::new(1),
            jobs: JobBoard::start(out_dir, QUEUE_CAPACITY),
        })
    }

    /// Registers a session under `id`, replacing any previous one.
    pub fn add_session(&self, id: &str, field: RadianceFieldGrid, session: EditSession) {
        let entry = SessionEntry { field: Arc::new(field), edit: Arc::new(tokio::sync::Mutex::new(session)) };
        self.sessions.write().expect("session table poisoned").insert(id.to_string(), Arc::new(entry));
    }

    fn session(&self, id: &str) -> ApiResult<Arc<SessionEntry>> {
        self.sessions.read().expect("session table poisoned").get(id).cloned().ok_or_else(|| ApiError::not_found("session", id))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/session", post(create_session))
        .route("/session/{id}/mesh", get(get_mesh))
        .route("/session/{id}/handles", put(put_handles))
        .route("/session/{id}/render", post(post_render))
        .route("/job/{id}", get(get_job))
        .route("/job/{id}/image", get(get_job_image))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("invalid JSON body: {e}")))
}

fn mesh_json(mesh: &TriMesh) -> Value {
    json!({ "version": 1, "vertices": mesh.vertices, "faces": mesh.faces })
}

#[derive(Deserialize)]
struct CreateSession {
    field: PathBuf,
    mesh: PathBuf,
    proxy: PathBuf,
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: CreateSession = parse_body(&body)?;
    let loaded = tokio::task::spawn_blocking(move || -> Result<_, PipelineError> {
        let field = RadianceFieldGrid::load(&req.field)?;
        let session = EditSession::load(&req.mesh, &req.proxy)?;
        Ok((field, session))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let (field, session) = loaded;
    let id = state.next_session.fetch_add(1, Ordering::Relaxed).to_string();
    let (nv, nf) = (session.rest_mesh().num_vertices(), session.rest_mesh().num_faces());
    state.add_session(&id, field, session);
    Ok(Json(json!({ "version": 1, "id": id, "vertices": nv, "faces": nf })))
}

#[derive(Deserialize)]
struct MeshQuery {
    #[serde(default)]
    pose: Option<String>,
}

/// The current deformed mesh, or the rest mesh with `?pose=rest`.
async fn get_mesh(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<MeshQuery>,
) -> ApiResult<Json<Value>> {
    let entry = state.session(&id)?;
    let edit = entry.edit.lock().await;
    let mesh = match q.pose.as_deref() {
        None | Some("deformed") => edit.deformed_mesh(),
        Some("rest") => edit.rest_mesh(),
        Some(other) => return Err(ApiError::new(StatusCode::BAD_REQUEST, format!("unknown pose {other:?}"))),
    };
    Ok(Json(mesh_json(mesh)))
}

#[derive(Deserialize)]
struct HandlesRequest {
    #[serde(default)]
    mode: DeformMode,
}

async fn put_handles(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let entry = state.session(&id)?;
    let handles: HandleSet = parse_body(&body)?;
    let mode = serde_json::from_slice::<HandlesRequest>(&body).map(|r| r.mode).unwrap_or_default();
    let guard = entry.edit.clone().lock_owned().await;
    tokio::task::spawn_blocking(move || {
        let mut edit = guard;
        let report = edit.deform(&handles, mode)?.clone();
        let mut body = mesh_json(edit.deformed_mesh());
        body["report"] = serde_json::to_value(report).map_err(PipelineError::from)?;
        Ok(Json(body))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(|e: PipelineError| e.into())
}

fn default_true() -> bool {
    true
}

#[derive(Deserialize)]
struct RenderRequest {
    camera: Camera,
    #[serde(default)]
    warp: WarpStrategy,
    #[serde(default)]
    sampler: Option<SampleSpec>,
    #[serde(default = "default_true")]
    mask_vacated: bool,
}

async fn post_render(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Response> {
    let entry = state.session(&id)?;
    let req: RenderRequest = parse_body(&body)?;
    let sampler = req.sampler.unwrap_or_default();
    req.camera.validate().map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    sampler.validate().map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let snapshot = entry.edit.lock().await.snapshot();
    let info = JobInfo {
        version: 1,
        id: String::new(),
        session: id,
        status: JobStatus::Queued,
        warp: req.warp,
        camera: req.camera,
        sampler,
        image: None,
        error: None,
    };
    let task = RenderTask { field: entry.field.clone(), snapshot, mask_vacated: req.mask_vacated };
    let job = state.jobs.submit(info, task);
    Ok((StatusCode::ACCEPTED, Json(json!({ "version": 1, "job": job, "status": JobStatus::Queued })))
        .into_response())
}

async fn get_job(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<JobInfo>> {
    state.jobs.get(&id).map(Json).ok_or_else(|| ApiError::not_found("job", &id))
}

async fn get_job_image(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let job = state.jobs.get(&id).ok_or_else(|| ApiError::not_found("job", &id))?;
    let path = match (job.status, job.image) {
        (JobStatus::Done, Some(p)) => p,
        (JobStatus::Failed, _) => {
            return Err(ApiError::new(StatusCode::CONFLICT, format!("job {id} failed: {}", job.error.unwrap_or_default())))
        }
        (s, _) => return Err(ApiError::new(StatusCode::CONFLICT, format!("job {id} is {s:?}; no image yet"))),
    };
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("reading {}: {e}", path.display())))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}
