use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, patch, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use tokio::task::AbortHandle;

use super::backend::{Backend, MockBackend, ToyDiffusionBackend};
use super::session::{
    EditParams, GuessState, GuessStatus, ParamsPatch, ResolveError, ResultStatus, Session,
};
use super::store::SessionStore;
use super::{BackendKind, ServiceConfig, ServiceError};
use crate::condition::{
    compile_conditions, BrushStroke, BundleMeta, EdgeExtractor, ExtractorRegistry, GenerationMeta, StrokeKind,
};
use crate::diffusion::{load_checkpoint, paste_back};
use crate::guess::{predict, GuessRequest, Predictor};
use crate::image::{BinaryMask, Image};

const BODY_LIMIT: usize = 64 * 1024 * 1024;

struct Slot {
    session: Session,
    guess_task: Option<AbortHandle>,
}

struct Inner {
    sessions: Mutex<HashMap<String, Arc<tokio::sync::Mutex<Slot>>>>,
    backend: Arc<dyn Backend>,
    predictor: Arc<dyn Predictor>,
    extractor: Arc<dyn EdgeExtractor>,
    store: SessionStore,
    max_width: usize,
    max_height: usize,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(
        config: &ServiceConfig,
        backend: Arc<dyn Backend>,
        predictor: Arc<dyn Predictor>,
    ) -> Result<Self, ServiceError> {
        let extractor = ExtractorRegistry::with_defaults()
            .resolve(&config.extractor)
            .map_err(|e| ServiceError::Config(e.to_string()))?;
        let store = SessionStore::new(config.data_dir.clone());
        let sessions = store
            .load_all()?
            .into_iter()
            .map(|s| {
                let slot = Slot {
                    session: s,
                    guess_task: None,
                };
                (slot.session.id.clone(), Arc::new(tokio::sync::Mutex::new(slot)))
            })
            .collect();
        Ok(Self {
            inner: Arc::new(Inner {
                sessions: Mutex::new(sessions),
                backend,
                predictor,
                extractor,
                store,
                max_width: config.max_width,
                max_height: config.max_height,
            }),
        })
    }

    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let backend: Arc<dyn Backend> = match config.backend.kind {
            BackendKind::Mock => Arc::new(MockBackend),
            BackendKind::ToyDiffusion => {
                let dir = config
                    .backend
                    .checkpoint
                    .as_ref()
                    .ok_or_else(|| ServiceError::Config("toy_diffusion backend needs a checkpoint".into()))?;
                let ck = load_checkpoint(dir).map_err(|e| ServiceError::Config(e.to_string()))?;
                Arc::new(ToyDiffusionBackend::new(ck))
            }
        };
        let predictor = config.predictor.build().map_err(|e| ServiceError::Config(e.to_string()))?;
        Self::new(config, backend, predictor)
    }

    pub fn session_count(&self) -> usize {
        self.inner.sessions.lock().expect("session map").len()
    }

    fn slot(&self, id: &str) -> Result<Arc<tokio::sync::Mutex<Slot>>, ApiError> {
        self.inner
            .sessions
            .lock()
            .expect("session map")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))
    }

    fn persist(&self, session: &Session) -> Result<(), ApiError> {
        self.inner
            .store
            .save(session)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("persist: {e}")))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/:id/canvas", get(get_canvas))
        .route("/sessions/:id/strokes", post(add_stroke))
        .route("/sessions/:id/strokes/:layer", delete(delete_stroke))
        .route("/sessions/:id/guess", get(get_guess))
        .route("/sessions/:id/run", post(run_edit))
        .route("/sessions/:id/results/:rid/resolve", post(resolve))
        .route("/sessions/:id/params", patch(set_params))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn decode_b64(field: &str, data: &str) -> ApiResult<Vec<u8>> {
    B64.decode(data.trim())
        .map_err(|e| ApiError::bad_request(format!("{field}: invalid base64: {e}")))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    /// Base64 PNG.
    pub image: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub params: EditParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CanvasResponse {
    pub id: String,
    pub width: usize,
    pub height: usize,
    /// Base64 PNG.
    pub image: String,
    /// Number of accepted results so far.
    pub version: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrokeRequest {
    pub kind: StrokeKind,
    /// Base64 PNG, same size as the canvas; nonzero pixels are on.
    pub mask: String,
    #[serde(default)]
    pub color: Option<[f32; 3]>,
    #[serde(default)]
    pub opacity: Option<f32>,
    #[serde(default)]
    pub visible: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrokeResponse {
    pub layer: u64,
    /// `pending` when a prediction was started, `skipped` for subtract strokes.
    pub guess: String,
    pub guess_seq: u64,
    pub layers: Vec<LayerInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerInfo {
    pub id: u64,
    pub kind: StrokeKind,
    pub visible: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunRequest {
    /// Replaces the suggested prompt; `""` runs prompt-free.
    #[serde(default)]
    pub prompt: Option<String>,
    /// Layer ids in blending order; defaults to the visible layers in stack order.
    #[serde(default)]
    pub layers: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResponse {
    pub result: String,
    pub status: ResultStatus,
    pub prompt: String,
    /// Base64 PNG.
    pub image: String,
    pub meta: BundleMeta,
    pub layers: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolveRequest {
    pub accept: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultInfo {
    pub id: String,
    pub status: ResultStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub layers: Vec<LayerInfo>,
    pub params: EditParams,
    pub guess: GuessStatus,
    pub results: Vec<ResultInfo>,
    pub accepted: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub backend: String,
    pub predictor: String,
    pub sessions: usize,
}

fn layer_infos(s: &Session) -> Vec<LayerInfo> {
    s.layers
        .iter()
        .map(|l| LayerInfo {
            id: l.id,
            kind: l.stroke.kind(),
            visible: l.visible,
        })
        .collect()
}

fn summary(s: &Session) -> SessionSummary {
    SessionSummary {
        id: s.id.clone(),
        width: s.canvas.width(),
        height: s.canvas.height(),
        layers: layer_infos(s),
        params: s.params,
        guess: s.guess.status,
        results: s
            .results
            .iter()
            .map(|r| ResultInfo {
                id: r.id.clone(),
                status: r.status,
            })
            .collect(),
        accepted: s.accepted.clone(),
    }
}

async fn healthz(State(state): State<AppState>) -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".into(),
        backend: state.inner.backend.id().to_string(),
        predictor: state.inner.predictor.id().to_string(),
        sessions: state.session_count(),
    })
}

async fn create_session(
    State(state): State<AppState>,
    Json(req): Json<CreateSessionRequest>,
) -> ApiResult<(StatusCode, Json<CreateSessionResponse>)> {
    let bytes = decode_b64("image", &req.image)?;
    let image = Image::decode(&bytes)
        .map_err(|e| ApiError::bad_request(format!("image: {e}")))?
        .quantize_u8();
    let (w, h) = image.dims();
    if w > state.inner.max_width || h > state.inner.max_height {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!(
                "image {w}x{h} exceeds {}x{}",
                state.inner.max_width, state.inner.max_height
            ),
        ));
    }
    let session = {
        let mut map = state.inner.sessions.lock().expect("session map");
        let id = loop {
            let candidate = format!("{:016x}", rand::random::<u64>());
            if !map.contains_key(&candidate) {
                break candidate;
            }
        };
        let session = Session::new(id.clone(), image);
        map.insert(
            id,
            Arc::new(tokio::sync::Mutex::new(Slot {
                session: session.clone(),
                guess_task: None,
            })),
        );
        session
    };
    state.persist(&session)?;
    Ok((
        StatusCode::CREATED,
        Json(CreateSessionResponse {
            id: session.id.clone(),
            width: w,
            height: h,
            params: session.params,
        }),
    ))
}

async fn get_canvas(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<CanvasResponse>> {
    let slot = state.slot(&id)?;
    let slot = slot.lock().await;
    let s = &slot.session;
    Ok(Json(CanvasResponse {
        id: s.id.clone(),
        width: s.canvas.width(),
        height: s.canvas.height(),
        image: B64.encode(s.canvas.encode_png()),
        version: s.accepted.len(),
    }))
}

fn parse_stroke(req: &StrokeRequest, dims: (usize, usize)) -> ApiResult<BrushStroke> {
    let mask = BinaryMask::decode(&decode_b64("mask", &req.mask)?)
        .map_err(|e| ApiError::bad_request(format!("mask: {e}")))?;
    if mask.dims() != dims {
        return Err(ApiError::unprocessable(format!(
            "mask is {}x{}, canvas is {}x{}",
            mask.width(),
            mask.height(),
            dims.0,
            dims.1
        )));
    }
    if mask.is_empty() {
        return Err(ApiError::unprocessable("mask is empty"));
    }
    match req.kind {
        StrokeKind::Add => Ok(BrushStroke::add(mask)),
        StrokeKind::Subtract => Ok(BrushStroke::subtract(mask)),
        StrokeKind::Color => {
            let color = req.color.ok_or_else(|| ApiError::unprocessable("color stroke needs `color`"))?;
            BrushStroke::color(mask, color, req.opacity.unwrap_or(1.0)).map_err(|e| ApiError::unprocessable(e.to_string()))
        }
    }
}

async fn add_stroke(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<StrokeRequest>,
) -> ApiResult<(StatusCode, Json<StrokeResponse>)> {
    let slot_arc = state.slot(&id)?;
    let mut slot = slot_arc.lock().await;
    let stroke = parse_stroke(&req, slot.session.canvas.dims())?;
    let guess_req = GuessRequest::for_stroke(&slot.session.canvas, &stroke)
        .map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let kind = stroke.kind();
    let color = match &stroke {
        BrushStroke::Color { color, .. } => Some(*color),
        _ => None,
    };
    let layer = slot.session.add_layer(stroke, req.visible.unwrap_or(true));

    let guess = match guess_req {
        None => "skipped",
        Some(greq) => {
            if let Some(prev) = slot.guess_task.take() {
                prev.abort();
            }
            let seq = slot.session.guess.begin(layer, kind, color);
            let predictor = state.inner.predictor.clone();
            let task_state = state.clone();
            let task_slot = slot_arc.clone();
            let handle = tokio::spawn(async move {
                let outcome = tokio::task::spawn_blocking(move || predict(&greq, predictor.as_ref())).await;
                let outcome = match outcome {
                    Ok(Ok(p)) => Ok(p),
                    Ok(Err(e)) => Err(e.to_string()),
                    Err(e) => Err(e.to_string()),
                };
                let mut slot = task_slot.lock().await;
                if slot.session.guess.finish(seq, outcome) {
                    if let Err(e) = task_state.persist(&slot.session) {
                        tracing::warn!("{}", e.message);
                    }
                }
            });
            slot.guess_task = Some(handle.abort_handle());
            "pending"
        }
    };
    state.persist(&slot.session)?;
    Ok((
        StatusCode::CREATED,
        Json(StrokeResponse {
            layer,
            guess: guess.to_string(),
            guess_seq: slot.session.guess.seq,
            layers: layer_infos(&slot.session),
        }),
    ))
}

async fn delete_stroke(
    State(state): State<AppState>,
    Path((id, layer)): Path<(String, u64)>,
) -> ApiResult<Json<SessionSummary>> {
    let slot = state.slot(&id)?;
    let mut slot = slot.lock().await;
    if !slot.session.remove_layer(layer) {
        return Err(ApiError::not_found(format!("unknown layer {layer}")));
    }
    state.persist(&slot.session)?;
    Ok(Json(summary(&slot.session)))
}

async fn get_guess(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<GuessState>> {
    let slot = state.slot(&id)?;
    let slot = slot.lock().await;
    Ok(Json(slot.session.guess.clone()))
}

async fn run_edit(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Option<Json<RunRequest>>,
) -> ApiResult<Json<RunResponse>> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    let slot_arc = state.slot(&id)?;
    let (canvas, strokes, params, prompt, rid, layer_ids) = {
        let mut slot = slot_arc.lock().await;
        let s = &mut slot.session;
        if s.in_flight() {
            return Err(ApiError::conflict("a generation is already running for this session"));
        }
        let picked = s.strokes_for_run(req.layers.as_deref()).map_err(ApiError::unprocessable)?;
        if picked.is_empty() {
            return Err(ApiError::unprocessable("no visible strokes to run"));
        }
        let prompt = req.prompt.clone().unwrap_or_else(|| s.guess.suggested_prompt());
        let layer_ids: Vec<u64> = picked.iter().map(|(id, _)| *id).collect();
        let strokes: Vec<BrushStroke> = picked.into_iter().map(|(_, s)| s).collect();
        let rid = s.begin_result(prompt.clone(), layer_ids.clone());
        let snapshot = (s.canvas.clone(), strokes, s.params, prompt, rid, layer_ids);
        state.persist(&slot.session)?;
        snapshot
    };

    let inner = state.inner.clone();
    let gen_prompt = prompt.clone();
    let outcome = tokio::task::spawn_blocking(move || -> Result<(Image, BundleMeta), String> {
        let mut bundle =
            compile_conditions(&canvas, &strokes, params.grow, inner.extractor.as_ref()).map_err(|e| e.to_string())?;
        bundle.meta.generation = Some(GenerationMeta {
            w_inpaint: params.w_inpaint,
            w_control: params.w_control,
            seed: params.seed,
            prompt: gen_prompt.clone(),
            backend: inner.backend.id().to_string(),
        });
        let generated = inner.backend.generate(&bundle, &gen_prompt, &params)?;
        let out = paste_back(&generated, &bundle).map_err(|e| e.to_string())?.quantize_u8();
        Ok((out, bundle.meta))
    })
    .await
    .map_err(|e| e.to_string())
    .and_then(|r| r);

    let mut slot = slot_arc.lock().await;
    match outcome {
        Ok((image, meta)) => {
            let result = slot.session.result_mut(&rid).expect("pending result exists");
            result.status = ResultStatus::Ready;
            result.image = Some(image.clone());
            result.meta = Some(meta.clone());
            state.persist(&slot.session)?;
            Ok(Json(RunResponse {
                result: rid,
                status: ResultStatus::Ready,
                prompt,
                image: B64.encode(image.encode_png()),
                meta,
                layers: layer_ids,
            }))
        }
        Err(e) => {
            slot.session.abandon_result(&rid);
            state.persist(&slot.session)?;
            Err(ApiError::unprocessable(format!("generation failed: {e}")))
        }
    }
}

async fn resolve(
    State(state): State<AppState>,
    Path((id, rid)): Path<(String, String)>,
    Json(req): Json<ResolveRequest>,
) -> ApiResult<Json<SessionSummary>> {
    let slot = state.slot(&id)?;
    let mut slot = slot.lock().await;
    match slot.session.resolve(&rid, req.accept) {
        Ok(()) => {}
        Err(ResolveError::Unknown) => return Err(ApiError::not_found(format!("unknown result `{rid}`"))),
        Err(ResolveError::NotReady(status)) => {
            return Err(ApiError::conflict(format!("result `{rid}` is {status:?}, not ready")))
        }
    }
    if req.accept {
        if let Some(task) = slot.guess_task.take() {
            task.abort();
        }
    }
    state.persist(&slot.session)?;
    Ok(Json(summary(&slot.session)))
}

async fn set_params(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(patch): Json<ParamsPatch>,
) -> ApiResult<Json<SessionSummary>> {
    let slot = state.slot(&id)?;
    let mut slot = slot.lock().await;
    slot.session.params.apply(&patch).map_err(ApiError::unprocessable)?;
    state.persist(&slot.session)?;
    Ok(Json(summary(&slot.session)))
}
