//! HTTP service: run control, live telemetry, curves and evaluation traces.
//!
//! Every run executes on its own OS thread through the harness training
//! loop. Commands go onto the run's queue and are answered once the loop has
//! applied them. Telemetry fans out on a bounded broadcast channel; a slow
//! reader loses the oldest samples but never stalls the loop.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Body;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bytes::Bytes;
use mcar_core::env::RunLifecycle;
use mcar_core::harness::{
    control_channel, layout, read_curve, run_training, Command, CommandOutcome, CurveRow, EpisodeRecord,
    RunConfig, RunControl, RunObserver, TelemetrySample,
};
use serde::Serialize;
use serde_json::json;
use tokio::sync::{broadcast, oneshot};

/// Samples buffered per telemetry reader before the oldest are dropped.
pub const TELEMETRY_BUFFER: usize = 4096;

const NDJSON: &str = "application/x-ndjson";

#[derive(Debug)]
pub enum ApiError {
    /// Another run already holds the rig.
    RigBusy(String),
    UnknownRun(String),
    UnknownEval(String, u64),
    IllegalTransition(String),
    InvalidConfig(String),
    Internal(String),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::RigBusy(_) | ApiError::IllegalTransition(_) => StatusCode::CONFLICT,
            ApiError::UnknownRun(_) | ApiError::UnknownEval(..) => StatusCode::NOT_FOUND,
            ApiError::InvalidConfig(_) => StatusCode::BAD_REQUEST,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ApiError::RigBusy(_) => "RigBusy",
            ApiError::UnknownRun(_) => "UnknownRun",
            ApiError::UnknownEval(..) => "UnknownEval",
            ApiError::IllegalTransition(_) => "IllegalTransition",
            ApiError::InvalidConfig(_) => "InvalidConfig",
            ApiError::Internal(_) => "Internal",
        }
    }

    fn message(&self) -> String {
        match self {
            ApiError::RigBusy(id) => format!("run {id} is using the rig"),
            ApiError::UnknownRun(id) => format!("no run {id}"),
            ApiError::UnknownEval(id, n) => format!("run {id} has no evaluation {n}"),
            ApiError::IllegalTransition(m) | ApiError::InvalidConfig(m) | ApiError::Internal(m) => m.clone(),
        }
    }
}

impl From<mcar_core::Error> for ApiError {
    fn from(e: mcar_core::Error) -> Self {
        match e {
            mcar_core::Error::IllegalTransition { .. } => ApiError::IllegalTransition(e.to_string()),
            mcar_core::Error::Config(_) | mcar_core::Error::Checkpoint(_) => ApiError::InvalidConfig(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.kind(), "message": self.message() });
        (self.status(), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct RunEntry {
    id: String,
    config_snapshot: String,
    started: f64,
    out_dir: PathBuf,
    control: RunControl,
    /// Live telemetry; `None` once the run has ended.
    telemetry: Mutex<Option<broadcast::Sender<Arc<str>>>>,
    /// Resume or evaluate commands sent but not yet answered. A run with
    /// one in flight counts as holding the rig.
    pending_activations: AtomicU64,
    error: Mutex<Option<String>>,
}

impl RunEntry {
    fn lifecycle(&self) -> RunLifecycle {
        self.control.status().lifecycle()
    }

    fn holds_rig(&self) -> bool {
        !matches!(self.lifecycle(), RunLifecycle::Paused | RunLifecycle::Finished)
            || self.pending_activations.load(Ordering::SeqCst) > 0
    }
}

/// Shared service state.
pub struct Monitor {
    base: RunConfig,
    runs_dir: PathBuf,
    runs: Mutex<BTreeMap<u64, Arc<RunEntry>>>,
    next_id: AtomicU64,
}

impl Monitor {
    /// `base` supplies defaults that posted config text overrides. Runs
    /// without an explicit `out` are persisted under `runs_dir/<id>`.
    pub fn new(base: RunConfig, runs_dir: impl Into<PathBuf>) -> Arc<Self> {
        Arc::new(Self {
            base,
            runs_dir: runs_dir.into(),
            runs: Mutex::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    fn lookup(&self, id: &str) -> ApiResult<Arc<RunEntry>> {
        let key = id
            .strip_prefix("run-")
            .and_then(|n| n.parse::<u64>().ok())
            .ok_or_else(|| ApiError::UnknownRun(id.to_string()))?;
        self.runs
            .lock()
            .expect("run table lock")
            .get(&key)
            .cloned()
            .ok_or_else(|| ApiError::UnknownRun(id.to_string()))
    }

    fn busy_with(runs: &BTreeMap<u64, Arc<RunEntry>>, except: Option<&str>) -> Option<String> {
        runs.values()
            .find(|r| Some(r.id.as_str()) != except && r.holds_rig())
            .map(|r| r.id.clone())
    }

    /// Parse `text` over the base config and start a training run.
    pub fn start_run(self: &Arc<Self>, text: &str) -> ApiResult<RunView> {
        let mut config = self.base.clone();
        for (key, value) in mcar_core::harness::parse_kv(text)? {
            config.set(&key, &value)?;
        }
        config.serve = false;
        config.eval_checkpoint = None;
        config.validate()?;

        let mut runs = self.runs.lock().expect("run table lock");
        if let Some(busy) = Self::busy_with(&runs, None) {
            return Err(ApiError::RigBusy(busy));
        }
        let n = self.next_id.fetch_add(1, Ordering::SeqCst);
        let id = format!("run-{n}");
        let out_dir = config.out_dir.clone().unwrap_or_else(|| self.runs_dir.join(&id));
        config.out_dir = Some(out_dir.clone());

        let (control, receiver) = control_channel();
        let (tx, _) = broadcast::channel(TELEMETRY_BUFFER);
        let entry = Arc::new(RunEntry {
            id: id.clone(),
            config_snapshot: config.to_kv_string(),
            started: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
            out_dir,
            control,
            telemetry: Mutex::new(Some(tx.clone())),
            pending_activations: AtomicU64::new(0),
            error: Mutex::new(None),
        });
        runs.insert(n, entry.clone());
        drop(runs);

        let worker = entry.clone();
        std::thread::Builder::new()
            .name(id.clone())
            .spawn(move || {
                let mut observer = Broadcast(tx);
                let result = run_training(&config, Some(receiver), &mut observer);
                // Close live streams; later readers replay the file.
                drop(observer);
                worker.telemetry.lock().expect("telemetry lock").take();
                if let Err(e) = result {
                    *worker.error.lock().expect("error lock") = Some(e.to_string());
                }
            })
            .map_err(|e| ApiError::Internal(format!("cannot spawn run thread: {e}")))?;
        Ok(RunView::of(&entry))
    }

    /// Queue `command` on run `id` and wait until the loop applies it.
    pub async fn command(&self, id: &str, command: Command) -> ApiResult<CommandOutcome> {
        let entry = self.lookup(id)?;
        let activates = matches!(command, Command::Resume | Command::Evaluate);
        let (tx, rx) = oneshot::channel();
        let reply = Box::new(move |outcome| {
            let _ = tx.send(outcome);
        });
        {
            let runs = self.runs.lock().expect("run table lock");
            if activates {
                if let Some(busy) = Self::busy_with(&runs, Some(id)) {
                    return Err(ApiError::RigBusy(busy));
                }
                entry.pending_activations.fetch_add(1, Ordering::SeqCst);
            }
            if let Err(e) = entry.control.send(command, Some(reply)) {
                if activates {
                    entry.pending_activations.fetch_sub(1, Ordering::SeqCst);
                }
                return Err(e.into());
            }
        }
        let outcome = rx.await;
        if activates {
            entry.pending_activations.fetch_sub(1, Ordering::SeqCst);
        }
        match outcome {
            Ok(result) => Ok(result?),
            // The loop exited without applying the command.
            Err(_) => Err(ApiError::IllegalTransition(format!(
                "run {id} finished before {command:?} was applied"
            ))),
        }
    }

    pub fn status(&self) -> StatusView {
        let runs = self.runs.lock().expect("run table lock");
        StatusView {
            runs: runs.values().map(|r| RunView::of(r)).collect(),
        }
    }
}

struct Broadcast(broadcast::Sender<Arc<str>>);

impl RunObserver for Broadcast {
    fn on_sample(&mut self, sample: &TelemetrySample) {
        let mut line = sample.to_json_line();
        line.push('\n');
        // No subscribers is not an error.
        let _ = self.0.send(line.into());
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunView {
    pub id: String,
    pub state: RunLifecycle,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub steps: u64,
    pub episodes: u64,
    pub evaluations: u64,
    pub config: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunView {
    fn of(entry: &RunEntry) -> Self {
        let status = entry.control.status();
        Self {
            id: entry.id.clone(),
            state: status.lifecycle(),
            started: entry.started,
            steps: status.steps(),
            episodes: status.episodes(),
            evaluations: status.evaluations(),
            config: entry.config_snapshot.clone(),
            error: entry.error.lock().expect("error lock").clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StatusView {
    pub runs: Vec<RunView>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CommandView {
    pub id: String,
    pub state: RunLifecycle,
    pub issued_step: u64,
    pub applied_step: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationView {
    pub id: String,
    pub state: RunLifecycle,
    pub issued_step: u64,
    pub applied_step: u64,
    pub evaluation: u64,
    pub record: EpisodeRecord,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveView {
    pub id: String,
    pub curve: Vec<CurveRow>,
}

pub fn router(monitor: Arc<Monitor>) -> Router {
    Router::new()
        .route("/api/status", get(get_status))
        .route("/api/runs", post(post_run))
        .route("/api/runs/{id}/pause", post(pause))
        .route("/api/runs/{id}/resume", post(resume))
        .route("/api/runs/{id}/evaluate", post(evaluate))
        .route("/api/runs/{id}/stop", post(stop))
        .route("/api/runs/{id}/telemetry", get(telemetry))
        .route("/api/runs/{id}/curve", get(curve))
        .route("/api/runs/{id}/evals/{n}", get(eval_trace))
        .with_state(monitor)
}

/// Serve until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, monitor: Arc<Monitor>) -> std::io::Result<()> {
    axum::serve(listener, router(monitor)).await
}

async fn get_status(State(m): State<Arc<Monitor>>) -> Json<StatusView> {
    Json(m.status())
}

async fn post_run(State(m): State<Arc<Monitor>>, body: String) -> ApiResult<(StatusCode, Json<RunView>)> {
    Ok((StatusCode::CREATED, Json(m.start_run(&body)?)))
}

async fn lifecycle_command(m: &Monitor, id: String, command: Command) -> ApiResult<Json<CommandView>> {
    let outcome = m.command(&id, command).await?;
    Ok(Json(CommandView {
        id,
        state: outcome.state,
        issued_step: outcome.issued_step,
        applied_step: outcome.applied_step,
    }))
}

async fn pause(State(m): State<Arc<Monitor>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<CommandView>> {
    lifecycle_command(&m, id, Command::Pause).await
}

async fn resume(State(m): State<Arc<Monitor>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<CommandView>> {
    lifecycle_command(&m, id, Command::Resume).await
}

async fn stop(State(m): State<Arc<Monitor>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<CommandView>> {
    lifecycle_command(&m, id, Command::Stop).await
}

async fn evaluate(State(m): State<Arc<Monitor>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<EvaluationView>> {
    let outcome = m.command(&id, Command::Evaluate).await?;
    let eval = outcome
        .evaluation
        .ok_or_else(|| ApiError::IllegalTransition(format!("run {id} stopped during the evaluation")))?;
    Ok(Json(EvaluationView {
        id,
        state: outcome.state,
        issued_step: outcome.issued_step,
        applied_step: outcome.applied_step,
        evaluation: eval.index,
        record: eval.record,
    }))
}

fn ndjson(body: Body) -> Response {
    ([(header::CONTENT_TYPE, NDJSON)], body).into_response()
}

async fn read_file(path: &Path) -> ApiResult<Vec<u8>> {
    match tokio::fs::read(path).await {
        Ok(bytes) => Ok(bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(ApiError::Internal(format!("{}: {e}", path.display()))),
    }
}

async fn telemetry(State(m): State<Arc<Monitor>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let entry = m.lookup(&id)?;
    let live = entry.telemetry.lock().expect("telemetry lock").as_ref().map(|tx| tx.subscribe());
    let Some(rx) = live else {
        let bytes = read_file(&entry.out_dir.join(layout::TELEMETRY)).await?;
        return Ok(ndjson(Body::from(bytes)));
    };
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(line) => return Some((Ok::<_, Infallible>(Bytes::from(line.as_bytes().to_vec())), rx)),
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Ok(ndjson(Body::from_stream(stream)))
}

async fn curve(State(m): State<Arc<Monitor>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<CurveView>> {
    let entry = m.lookup(&id)?;
    let path = entry.out_dir.join(layout::CURVE);
    let curve = tokio::task::spawn_blocking(move || if path.exists() { read_curve(&path) } else { Ok(Vec::new()) })
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(CurveView { id, curve }))
}

async fn eval_trace(
    State(m): State<Arc<Monitor>>,
    UrlPath((id, n)): UrlPath<(String, u64)>,
) -> ApiResult<Response> {
    let entry = m.lookup(&id)?;
    let path = entry.out_dir.join(layout::eval_trace(n));
    match tokio::fs::read(&path).await {
        Ok(bytes) => Ok(ndjson(Body::from(bytes))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(ApiError::UnknownEval(id, n)),
        Err(e) => Err(ApiError::Internal(format!("{}: {e}", path.display()))),
    }
}
