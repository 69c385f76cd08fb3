//! JSON-over-HTTP facade: graph prediction, generation, retrieval and
//! evaluation.
//!
//! The model and the part library are immutable snapshots behind `Arc`s;
//! admin loads build a new snapshot and swap it in, so in-flight requests
//! finish on the one they started with.

pub mod api;

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::info;

use self::api::*;
use crate::conditioning::{load_feature_file, synthetic_features, ForegroundMask, PatchFeatureGrid, N_PATCHES};
use crate::dataset::{load_object, object_to_json, parse_object, ObjectRecord};
use crate::diffusion::{load_checkpoint, Denoiser, NoiseSchedule};
use crate::graph::{predict_ground_truth, predict_stub, GraphError, GraphPrediction, GraphSource, VlmClient, VlmConfig};
use crate::kinematics::{ArticulatedAbstraction, ConnectivityGraph};
use crate::metrics::{report, EvalObject, CSV_HEADER};
use crate::pipeline::{generate, resolve_category, GenerateParams, PipelineError};
use crate::retrieval::{assemble, export_package, urdf_string, AssembledObject, ExportManifest, PartLibrary, RetrievalConfig};

pub const TOKEN_HEADER: &str = "x-artic-token";
const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    pub checkpoint: Option<PathBuf>,
    pub library: Option<PathBuf>,
    /// AOJ files registered for `/v1/evaluate` at startup.
    pub objects_dir: Option<PathBuf>,
    pub assets_dir: PathBuf,
    /// Evaluation rows are appended here when set.
    pub report_csv: Option<PathBuf>,
    pub vlm: Option<VlmConfig>,
    /// Required in the `x-artic-token` header on everything but health.
    pub token: Option<String>,
    pub request_timeout_secs: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".into(),
            checkpoint: None,
            library: None,
            objects_dir: None,
            assets_dir: std::env::temp_dir().join("artic-assets"),
            report_csv: None,
            vlm: None,
            token: None,
            request_timeout_secs: 300.0,
        }
    }
}

impl ServiceConfig {
    /// Defaults overridden by `ARTIC_BIND`, `ARTIC_CHECKPOINT`,
    /// `ARTIC_LIBRARY`, `ARTIC_OBJECTS`, `ARTIC_ASSETS`, `ARTIC_REPORT_CSV`,
    /// `ARTIC_TOKEN` and `ARTIC_VLM_ENDPOINT` / `ARTIC_VLM_MODEL`.
    pub fn from_env() -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let mut c = ServiceConfig::default();
        if let Some(v) = var("ARTIC_BIND") {
            c.bind = v;
        }
        c.checkpoint = var("ARTIC_CHECKPOINT").map(PathBuf::from);
        c.library = var("ARTIC_LIBRARY").map(PathBuf::from);
        c.objects_dir = var("ARTIC_OBJECTS").map(PathBuf::from);
        if let Some(v) = var("ARTIC_ASSETS") {
            c.assets_dir = v.into();
        } else if let Some(home) = var("ARTIC_HOME") {
            c.assets_dir = Path::new(&home).join("assets");
        }
        c.report_csv = var("ARTIC_REPORT_CSV").map(PathBuf::from);
        c.token = var("ARTIC_TOKEN");
        if let Some(endpoint) = var("ARTIC_VLM_ENDPOINT") {
            let mut v = VlmConfig {
                endpoint,
                ..Default::default()
            };
            if let Some(m) = var("ARTIC_VLM_MODEL") {
                v.model = m;
            }
            c.vlm = Some(v);
        }
        c
    }
}

#[derive(Debug)]
pub struct LoadedModel {
    pub name: String,
    pub model: Denoiser,
    pub schedule: NoiseSchedule,
}

impl LoadedModel {
    pub fn new(name: impl Into<String>, model: Denoiser) -> Result<Self, ApiError> {
        let schedule = model.config().schedule().map_err(|e| ApiError::bad_request(e.to_string()))?;
        Ok(LoadedModel {
            name: name.into(),
            model,
            schedule,
        })
    }
}

pub struct AppState {
    cfg: ServiceConfig,
    model: RwLock<Option<Arc<LoadedModel>>>,
    library: RwLock<Option<Arc<PartLibrary>>>,
    objects: RwLock<BTreeMap<String, Arc<ObjectRecord>>>,
    vlm: Option<VlmClient>,
    csv: Mutex<()>,
    tmp_counter: AtomicU64,
}

impl AppState {
    /// Loads whatever the config points at.
    pub fn new(cfg: ServiceConfig) -> anyhow::Result<Self> {
        let vlm = cfg.vlm.clone().map(VlmClient::new).transpose()?;
        let state = AppState {
            cfg,
            model: RwLock::new(None),
            library: RwLock::new(None),
            objects: RwLock::new(BTreeMap::new()),
            vlm,
            csv: Mutex::new(()),
            tmp_counter: AtomicU64::new(0),
        };
        if let Some(p) = state.cfg.checkpoint.clone() {
            state.load_checkpoint(&p, None)?;
        }
        if let Some(p) = state.cfg.library.clone() {
            state.load_library(&p, None)?;
        }
        if let Some(dir) = state.cfg.objects_dir.clone() {
            let rd = std::fs::read_dir(&dir)?;
            let mut files: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).collect();
            files.sort();
            for f in files.iter().filter(|f| matches!(f.extension().and_then(|e| e.to_str()), Some("json" | "aoj"))) {
                state.register(load_object(f)?);
            }
        }
        Ok(state)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    pub fn set_model(&self, m: LoadedModel) {
        *self.model.write().expect("model lock") = Some(Arc::new(m));
    }

    pub fn set_library(&self, lib: PartLibrary) {
        *self.library.write().expect("library lock") = Some(Arc::new(lib));
    }

    pub fn register(&self, rec: ObjectRecord) {
        self.objects.write().expect("objects lock").insert(rec.id.clone(), Arc::new(rec));
    }

    pub fn load_checkpoint(&self, path: &Path, name: Option<String>) -> anyhow::Result<String> {
        let model = load_checkpoint(path)?;
        let name = name.unwrap_or_else(|| stem(path));
        self.set_model(LoadedModel::new(name.clone(), model).map_err(|e| anyhow::anyhow!(e.message))?);
        info!(checkpoint = %name, "checkpoint loaded");
        Ok(name)
    }

    pub fn load_library(&self, path: &Path, name: Option<String>) -> anyhow::Result<String> {
        let mut lib = PartLibrary::load_dir(path)?;
        if let Some(n) = name {
            lib.name = n;
        }
        let name = lib.name.clone();
        self.set_library(lib);
        info!(library = %name, "library loaded");
        Ok(name)
    }

    fn model(&self) -> Option<Arc<LoadedModel>> {
        self.model.read().expect("model lock").clone()
    }

    fn library(&self) -> Option<Arc<PartLibrary>> {
        self.library.read().expect("library lock").clone()
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or("checkpoint").to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(m: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", m)
    }

    pub fn not_found(m: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", m)
    }

    pub fn conflict(m: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", m)
    }

    pub fn unprocessable(m: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "unprocessable", m)
    }

    fn internal(m: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", m)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code.to_string(),
                message: self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::UnknownCategory(_) | PipelineError::SampleCount(_) => ApiError::bad_request(e.to_string()),
            PipelineError::Diffusion(_) => ApiError::internal(e.to_string()),
            _ => ApiError::unprocessable(e.to_string()),
        }
    }
}

impl From<GraphError> for ApiError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Unreachable(_) | GraphError::AuthFailed(_) => {
                ApiError::new(StatusCode::BAD_GATEWAY, "upstream", e.to_string())
            }
            GraphError::Busy => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "busy", e.to_string()),
            GraphError::Image(_) | GraphError::Config(_) | GraphError::UnknownExampleSet(_) => {
                ApiError::bad_request(e.to_string())
            }
            _ => ApiError::unprocessable(e.to_string()),
        }
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs blocking work off the reactor, bounded by the request budget.
async fn blocking<T, F>(state: &AppState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    let budget = Duration::from_secs_f64(state.cfg.request_timeout_secs);
    match tokio::time::timeout(budget, tokio::task::spawn_blocking(f)).await {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => Err(ApiError::internal(e.to_string())),
        Err(_) => Err(ApiError::new(StatusCode::GATEWAY_TIMEOUT, "timeout", "request exceeded its time budget")),
    }
}

/// Parses an inline AOJ object and validates it.
pub fn object_from_value(v: &serde_json::Value) -> Result<ObjectRecord, ApiError> {
    let rec = parse_object(&v.to_string(), Path::new(".")).map_err(|e| ApiError::bad_request(e.to_string()))?;
    rec.object.validate().map_err(|e| ApiError::unprocessable(e.to_string()))?;
    Ok(rec)
}

fn object_value(id: &str, obj: &ArticulatedAbstraction) -> serde_json::Value {
    let rec = ObjectRecord::new(id, obj.clone());
    serde_json::from_str(&object_to_json(&rec)).expect("serialized object is valid JSON")
}

fn resolve_features(input: &FeatureInput) -> Result<(PatchFeatureGrid, ForegroundMask), ApiError> {
    match input {
        FeatureInput::Path(p) => load_feature_file(p).map_err(|e| ApiError::bad_request(e.to_string())),
        FeatureInput::Inline { d_f, features, mask } => {
            let grid = PatchFeatureGrid::new(features.clone(), *d_f).map_err(|e| ApiError::bad_request(e.to_string()))?;
            let mask = match mask {
                Some(m) if m.len() == N_PATCHES => ForegroundMask(m.clone()),
                Some(m) => return Err(ApiError::bad_request(format!("mask has {} entries, expected {N_PATCHES}", m.len()))),
                None => ForegroundMask(vec![true; N_PATCHES]),
            };
            Ok((grid, mask))
        }
        FeatureInput::Synthetic { object, camera } => {
            let rec = object_from_value(object)?;
            synthetic_features(&rec.object, &camera.unwrap_or_default()).map_err(|e| ApiError::unprocessable(e.to_string()))
        }
    }
}

fn predict_graph_blocking(state: &AppState, req: &PredictGraphRequest) -> Result<GraphPrediction, ApiError> {
    match req.predictor {
        Predictor::GroundTruth => {
            let g = req.graph.as_ref().ok_or_else(|| ApiError::bad_request("ground_truth predictor needs `graph`"))?;
            Ok(predict_ground_truth(g)?)
        }
        Predictor::Stub => {
            let f = req.features.as_ref().ok_or_else(|| ApiError::bad_request("stub predictor needs `features`"))?;
            let (grid, _) = resolve_features(f)?;
            Ok(predict_stub(&grid)?)
        }
        Predictor::Vlm => {
            let client = state.vlm.as_ref().ok_or_else(|| ApiError::conflict("no VLM endpoint is configured"))?;
            let img = req.image.as_ref().ok_or_else(|| ApiError::bad_request("vlm predictor needs `image`"))?;
            Ok(client.predict(img)?)
        }
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".into(),
        checkpoint: state.model().map(|m| m.name.clone()),
        library: state.library().map(|l| l.name.clone()),
    })
}

async fn predict_graph(
    State(state): State<Arc<AppState>>,
    body: Result<Json<PredictGraphRequest>, JsonRejection>,
) -> ApiResult<PredictGraphResponse> {
    let Json(req) = body?;
    let s = state.clone();
    let p = blocking(&state, move || predict_graph_blocking(&s, &req)).await?;
    Ok(Json(PredictGraphResponse {
        graph: p.graph,
        source: p.source,
        raw_response: p.raw_response,
        attempts: p.attempts,
    }))
}

fn content_hash(asm: &AssembledObject, name: &str) -> String {
    let mut h = Sha256::new();
    h.update(urdf_string(asm, name));
    h.update(object_to_json(&ObjectRecord::new(name, asm.abstraction.clone())));
    for p in &asm.parts {
        h.update(p.mesh.to_obj_string());
    }
    hex::encode(&h.finalize()[..16])
}

/// Writes the package under its content hash unless it already exists.
fn store_asset(state: &AppState, asm: &AssembledObject) -> Result<(String, ExportManifest), ApiError> {
    let id = content_hash(asm, "object");
    let dir = state.cfg.assets_dir.join(&id);
    let manifest_path = dir.join(MANIFEST_FILE);
    if let Ok(text) = std::fs::read_to_string(&manifest_path) {
        if let Ok(m) = serde_json::from_str(&text) {
            return Ok((id, m));
        }
    }
    let n = state.tmp_counter.fetch_add(1, Ordering::Relaxed);
    let tmp = state.cfg.assets_dir.join(format!(".tmp-{id}-{}-{n}", std::process::id()));
    let io = |e: std::io::Error| ApiError::internal(e.to_string());
    let manifest = export_package(asm, "object", &tmp).map_err(|e| ApiError::internal(e.to_string()))?;
    std::fs::write(tmp.join(MANIFEST_FILE), serde_json::to_string(&manifest).expect("manifest serializes")).map_err(io)?;
    if std::fs::rename(&tmp, &dir).is_err() {
        // a concurrent identical request won the race
        let _ = std::fs::remove_dir_all(&tmp);
    }
    Ok((id, manifest))
}

fn generate_blocking(state: &AppState, req: GenerateRequest) -> Result<GenerateResponse, ApiError> {
    let loaded = state.model().ok_or_else(|| ApiError::conflict("no checkpoint is loaded"))?;
    if req.num_samples == 0 {
        return Err(ApiError::bad_request("num_samples must be at least 1"));
    }
    let features = req.features.as_ref().map(resolve_features).transpose()?;
    let (graph, graph_source): (ConnectivityGraph, GraphSource) = match (&req.graph, &features) {
        (Some(g), _) => (g.clone(), GraphSource::GroundTruth),
        (None, Some((grid, _))) => (predict_stub(grid)?.graph, GraphSource::Stub),
        (None, None) => return Err(ApiError::unprocessable("no graph given and none can be predicted without features")),
    };
    let library = if req.export {
        Some(state.library().ok_or_else(|| ApiError::not_found("no part library is loaded"))?)
    } else {
        None
    };
    let category = resolve_category(req.category.as_deref())?;
    let params = GenerateParams {
        omega: req.omega.unwrap_or(GenerateParams::default().omega),
        num_samples: req.num_samples,
        seed: req.seed,
        pins: req.pins.clone(),
    };
    let samples = generate(&loaded.model, &loaded.schedule, &graph, features, category, &params)?;
    let samples = samples
        .into_iter()
        .map(|s| {
            let asset_id = match &library {
                Some(lib) => {
                    let asm = assemble(&s.object, lib, &RetrievalConfig::default())
                        .map_err(|e| ApiError::unprocessable(e.to_string()))?;
                    Some(store_asset(state, &asm)?.0)
                }
                None => None,
            };
            Ok(SampleOut {
                seed: s.seed,
                object: object_value(&format!("sample-{}", s.seed), &s.object),
                rows: s.rows,
                asset_id,
            })
        })
        .collect::<Result<Vec<_>, ApiError>>()?;
    Ok(GenerateResponse {
        checkpoint: loaded.name.clone(),
        graph,
        graph_source,
        samples,
    })
}

async fn generate_handler(
    State(state): State<Arc<AppState>>,
    body: Result<Json<GenerateRequest>, JsonRejection>,
) -> ApiResult<GenerateResponse> {
    let Json(req) = body?;
    let s = state.clone();
    Ok(Json(blocking(&state, move || generate_blocking(&s, req)).await?))
}

fn asset_dir(state: &AppState, id: &str) -> Result<PathBuf, ApiError> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(ApiError::not_found(format!("unknown asset {id:?}")));
    }
    let dir = state.cfg.assets_dir.join(id);
    if !dir.join(MANIFEST_FILE).is_file() {
        return Err(ApiError::not_found(format!("unknown asset {id:?}")));
    }
    Ok(dir)
}

fn eval_object(state: &AppState, r: &ObjectRef) -> Result<EvalObject, ApiError> {
    let rec: ObjectRecord = match r {
        ObjectRef::Id(id) => {
            let objs = state.objects.read().expect("objects lock");
            (**objs.get(id).ok_or_else(|| ApiError::not_found(format!("unknown object {id:?}")))?).clone()
        }
        ObjectRef::Object(v) => object_from_value(v)?,
        ObjectRef::Asset(id) => {
            let dir = asset_dir(state, id)?;
            load_object(&dir.join(crate::retrieval::AOJ_FILE)).map_err(|e| ApiError::internal(e.to_string()))?
        }
    };
    crate::pipeline::eval_object(rec).map_err(|e| ApiError::unprocessable(e.to_string()))
}

fn gt_id(r: &ObjectRef) -> String {
    match r {
        ObjectRef::Id(id) | ObjectRef::Asset(id) => id.clone(),
        ObjectRef::Object(v) => v.get("id").and_then(|v| v.as_str()).unwrap_or("object").to_string(),
    }
}

fn append_csv(state: &AppState, row: &str) -> Result<(), ApiError> {
    let Some(path) = &state.cfg.report_csv else { return Ok(()) };
    use std::io::Write;
    let _guard = state.csv.lock().expect("csv lock");
    let fresh = !path.exists();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    if fresh {
        writeln!(f, "{CSV_HEADER}").map_err(|e| ApiError::internal(e.to_string()))?;
    }
    writeln!(f, "{row}").map_err(|e| ApiError::internal(e.to_string()))
}

async fn evaluate(
    State(state): State<Arc<AppState>>,
    body: Result<Json<EvaluateRequest>, JsonRejection>,
) -> ApiResult<crate::metrics::MetricReport> {
    let Json(req) = body?;
    let s = state.clone();
    let r = blocking(&state, move || {
        let gen = eval_object(&s, &req.gen)?;
        let gt = eval_object(&s, &req.gt)?;
        let id = req.id.clone().unwrap_or_else(|| gt_id(&req.gt));
        let r = report(&id, &gen, &gt, &req.config.clone().unwrap_or_default())
            .map_err(|e| ApiError::unprocessable(e.to_string()))?;
        append_csv(&s, &r.csv_row())?;
        Ok(r)
    })
    .await?;
    Ok(Json(r))
}

async fn retrieve(
    State(state): State<Arc<AppState>>,
    body: Result<Json<RetrieveRequest>, JsonRejection>,
) -> ApiResult<RetrieveResponse> {
    let Json(req) = body?;
    let s = state.clone();
    let r = blocking(&state, move || {
        let lib = s.library().ok_or_else(|| ApiError::not_found("no part library is loaded"))?;
        if req.library.as_ref().is_some_and(|n| *n != lib.name) {
            return Err(ApiError::not_found(format!("unknown library {:?}", req.library.unwrap())));
        }
        if lib.is_empty() {
            return Err(ApiError::not_found(format!("library {:?} is empty", lib.name)));
        }
        let rec = object_from_value(&req.object)?;
        let asm = assemble(&rec.object, &lib, &req.config.unwrap_or_default())
            .map_err(|e| ApiError::unprocessable(e.to_string()))?;
        let (asset_id, manifest) = store_asset(&s, &asm)?;
        Ok(RetrieveResponse {
            asset_id,
            library: lib.name.clone(),
            candidate: asm.candidate.clone(),
            parts: asm
                .parts
                .iter()
                .map(|p| PartProvenance {
                    part: p.id,
                    source: p.source.clone(),
                })
                .collect(),
            manifest,
        })
    })
    .await?;
    Ok(Json(r))
}

async fn asset_manifest(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<ExportManifest> {
    let dir = asset_dir(&state, &id)?;
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE)).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(serde_json::from_str(&text).map_err(|e| ApiError::internal(e.to_string()))?))
}

async fn asset_file(
    State(state): State<Arc<AppState>>,
    UrlPath((id, file)): UrlPath<(String, String)>,
) -> Result<Response, ApiError> {
    let dir = asset_dir(&state, &id)?;
    let rel = Path::new(&file);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Err(ApiError::not_found(format!("unknown file {file:?}")));
    }
    let bytes = std::fs::read(dir.join(rel)).map_err(|_| ApiError::not_found(format!("unknown file {file:?}")))?;
    let mime = match rel.extension().and_then(|e| e.to_str()) {
        Some("json") => "application/json",
        Some("urdf") => "application/xml",
        _ => "text/plain",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

async fn register_object(
    State(state): State<Arc<AppState>>,
    body: Result<Json<serde_json::Value>, JsonRejection>,
) -> ApiResult<RegisterResponse> {
    let Json(v) = body?;
    let rec = object_from_value(&v)?;
    let id = rec.id.clone();
    state.register(rec);
    Ok(Json(RegisterResponse { id }))
}

async fn admin_checkpoint(
    State(state): State<Arc<AppState>>,
    body: Result<Json<LoadRequest>, JsonRejection>,
) -> ApiResult<HealthResponse> {
    let Json(req) = body?;
    let s = state.clone();
    blocking(&state, move || {
        if !req.path.is_file() {
            return Err(ApiError::not_found(format!("{} does not exist", req.path.display())));
        }
        s.load_checkpoint(&req.path, req.name).map_err(|e| ApiError::bad_request(e.to_string()))
    })
    .await?;
    Ok(health(State(state)).await)
}

async fn admin_library(
    State(state): State<Arc<AppState>>,
    body: Result<Json<LoadRequest>, JsonRejection>,
) -> ApiResult<HealthResponse> {
    let Json(req) = body?;
    let s = state.clone();
    blocking(&state, move || {
        if !req.path.is_dir() {
            return Err(ApiError::not_found(format!("{} is not a directory", req.path.display())));
        }
        s.load_library(&req.path, req.name).map_err(|e| ApiError::bad_request(e.to_string()))
    })
    .await?;
    Ok(health(State(state)).await)
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.cfg.token {
        let ok = req.headers().get(TOKEN_HEADER).and_then(|v| v.to_str().ok()) == Some(token.as_str());
        if !ok {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong token").into_response();
        }
    }
    next.run(req).await
}

pub fn router(state: Arc<AppState>) -> Router {
    let protected = Router::new()
        .route("/v1/graphs/predict", post(predict_graph))
        .route("/v1/generate", post(generate_handler))
        .route("/v1/evaluate", post(evaluate))
        .route("/v1/retrieve", post(retrieve))
        .route("/v1/objects", post(register_object))
        .route("/v1/assets/{id}", get(asset_manifest))
        .route("/v1/assets/{id}/{*file}", get(asset_file))
        .route("/v1/admin/checkpoint", post(admin_checkpoint))
        .route("/v1/admin/library", post(admin_library))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/v1/health", get(health))
        .merge(protected)
        .with_state(state)
}

/// Binds and serves until the process is stopped.
pub async fn serve(cfg: ServiceConfig) -> anyhow::Result<()> {
    std::fs::create_dir_all(&cfg.assets_dir)?;
    let bind = cfg.bind.clone();
    let state = Arc::new(AppState::new(cfg)?);
    let listener = tokio::net::TcpListener::bind(&bind).await?;
    info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state)).await?;
    Ok(())
}
