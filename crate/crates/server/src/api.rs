//! HTTP routes.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::multipart::MultipartError;
use axum::extract::{ConnectInfo, DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tinyseg::batch::{masked_fits, segment, BatchError, Input, MaskSettings};
use tinyseg::detect::DetectError;
use tinyseg::mask::{compose, EditOverlay, ObjectRegion, RleRun};
use tinyseg::npy::serialize_npy;
use tinyseg::DetectorSpec;
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;
use uuid::Uuid;

use crate::config::ServiceConfig;
use crate::frame::{encode_parts, Compression};
use crate::session::{LookupError, Registry, Session, SessionData, SessionState};

#[derive(Clone)]
pub struct AppState {
    pub config: Arc<ServiceConfig>,
    pub registry: Arc<Registry>,
    pub workers: Arc<Semaphore>,
}

impl AppState {
    pub fn new(config: ServiceConfig, registry: Arc<Registry>) -> Self {
        let workers = Arc::new(Semaphore::new(config.worker_pool_size.max(1)));
        Self {
            config: Arc::new(config),
            registry,
            workers,
        }
    }
}

/// JSON error body `{"error": CODE, "message": TEXT}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn internal(message: impl std::fmt::Display) -> Self {
        tracing::error!(%message, "internal error");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message.to_string())
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code,
            message: &self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<LookupError> for ApiError {
    fn from(e: LookupError) -> Self {
        match e {
            LookupError::Unknown => Self::new(StatusCode::NOT_FOUND, "UnknownKey", "no session with this key"),
            LookupError::Expired => Self::new(StatusCode::GONE, "Expired", "session expired"),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    let limit = usize::try_from(state.config.max_upload_bytes)
        .unwrap_or(usize::MAX)
        .saturating_add(1 << 20);
    let static_dir = state.config.static_dir.clone();
    let api = Router::new()
        .route("/api/v1/images", post(upload).layer(DefaultBodyLimit::max(limit)))
        .route("/api/v1/frame/{key}", get(frame))
        .route("/api/v1/mask/{key}", post(post_mask))
        .route("/api/v1/download/{key}", get(download))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug, Deserialize)]
struct UploadQuery {
    detector: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UploadResponse {
    pub key: String,
    pub width: usize,
    pub height: usize,
    pub objects: Vec<ObjectRegion>,
}

/// Strict 8-4-4-4-12 hex form.
pub fn parse_client_uuid(s: &str) -> Option<Uuid> {
    let s = s.trim();
    let hyphens_ok = s.len() == 36 && [8, 13, 18, 23].iter().all(|&i| s.as_bytes()[i] == b'-');
    hyphens_ok.then(|| Uuid::try_parse(s).ok()).flatten()
}

fn detector_for(query: &UploadQuery, config: &ServiceConfig) -> ApiResult<DetectorSpec> {
    let Some(text) = query.detector.as_deref().filter(|s| !s.is_empty()) else {
        return Ok(config.detector.clone());
    };
    let spec: DetectorSpec = text.parse().map_err(|e: DetectError| ApiError::bad("BadDetector", e.to_string()))?;
    if let DetectorSpec::Precomputed { path: Some(_), .. } = spec {
        return Err(ApiError::bad(
            "BadDetector",
            "precomputed maps from server paths are not selectable per request",
        ));
    }
    Ok(spec)
}

fn multipart_error(e: MultipartError) -> ApiError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "FileTooLarge", e.body_text())
    } else {
        ApiError::bad("BadMultipart", e.body_text())
    }
}

struct UploadForm {
    file: Vec<u8>,
    filename: String,
    client_uuid: String,
}

async fn read_form(mut multipart: Multipart, cap: u64) -> ApiResult<UploadForm> {
    let (mut file, mut filename, mut client_uuid) = (None, String::new(), None);
    while let Some(mut field) = multipart.next_field().await.map_err(multipart_error)? {
        match field.name() {
            Some("file") => {
                filename = field.file_name().unwrap_or("upload").to_string();
                let mut buf = Vec::new();
                while let Some(chunk) = field.chunk().await.map_err(multipart_error)? {
                    if (buf.len() + chunk.len()) as u64 > cap {
                        return Err(ApiError::new(
                            StatusCode::PAYLOAD_TOO_LARGE,
                            "FileTooLarge",
                            format!("upload exceeds {cap} bytes"),
                        ));
                    }
                    buf.extend_from_slice(&chunk);
                }
                file = Some(buf);
            }
            Some("client_uuid") => client_uuid = Some(field.text().await.map_err(multipart_error)?),
            _ => {}
        }
    }
    Ok(UploadForm {
        file: file.ok_or_else(|| ApiError::bad("MissingField", "multipart field `file` is required"))?,
        filename,
        client_uuid: client_uuid
            .ok_or_else(|| ApiError::bad("MissingField", "multipart field `client_uuid` is required"))?,
    })
}

fn detect_error(e: BatchError) -> ApiError {
    match e {
        BatchError::Detect(d @ (DetectError::RemoteUnreachable(_) | DetectError::RemoteBadResponse(_))) => {
            ApiError::new(StatusCode::BAD_GATEWAY, "DetectorFailed", d.to_string())
        }
        BatchError::Detect(d) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "DetectorFailed", d.to_string()),
        other => ApiError::internal(other),
    }
}

async fn upload(
    State(app): State<AppState>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    Query(query): Query<UploadQuery>,
    multipart: Multipart,
) -> ApiResult<Json<UploadResponse>> {
    let detector = detector_for(&query, &app.config)?;
    let form = read_form(multipart, app.config.max_upload_bytes).await?;
    let client_uuid = parse_client_uuid(&form.client_uuid)
        .ok_or_else(|| ApiError::bad("BadUuid", format!("not an RFC 4122 UUID: {:?}", form.client_uuid)))?;

    let bytes = Arc::new(form.file);
    let parsed = {
        let bytes = Arc::clone(&bytes);
        tokio::task::spawn_blocking(move || Input::parse(&bytes))
            .await
            .map_err(ApiError::internal)?
    };
    let input = parsed.map_err(|e| ApiError::bad("UnparsableFile", e.to_string()))?;

    let permit = tokio::time::timeout(app.config.queue_timeout, Arc::clone(&app.workers).acquire_owned())
        .await
        .map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "DetectorBusy", "all detector workers are busy"))?
        .map_err(ApiError::internal)?;

    let session = app
        .registry
        .create(client_uuid, peer.ip(), &form.filename)
        .map_err(ApiError::internal)?;
    let result = run_detection(&session, bytes, input, detector).await;
    drop(permit);
    match result {
        Ok(data) => {
            let (width, height) = data.input.image().dims();
            let objects = data.objects.as_ref().clone();
            app.registry.mark_ready(&session, data).await;
            tracing::info!(key = session.key(), %client_uuid, ip = %peer.ip(), width, height, "session ready");
            Ok(Json(UploadResponse {
                key: session.key().to_string(),
                width,
                height,
                objects,
            }))
        }
        Err(e) => {
            app.registry.discard(session.key());
            Err(e)
        }
    }
}

async fn run_detection(
    session: &Session,
    bytes: Arc<Vec<u8>>,
    input: Input,
    detector: DetectorSpec,
) -> ApiResult<SessionData> {
    tokio::fs::write(session.upload_path(), bytes.as_slice())
        .await
        .map_err(ApiError::internal)?;
    let (input, seg) = tokio::task::spawn_blocking(move || {
        let seg = segment(&input, &detector, MaskSettings::default(), None);
        (input, seg)
    })
    .await
    .map_err(ApiError::internal)?;
    let seg = seg.map_err(detect_error)?;
    let prob = Arc::new(seg.prob);
    let npy = {
        let prob = Arc::clone(&prob);
        tokio::task::spawn_blocking(move || serialize_npy(prob.raster()))
            .await
            .map_err(ApiError::internal)?
    };
    tokio::fs::write(session.prob_path(), npy)
        .await
        .map_err(ApiError::internal)?;
    Ok(SessionData {
        input: Arc::new(input),
        prob,
        objects: Arc::new(seg.objects),
        edit: Default::default(),
        frame: None,
    })
}

fn not_ready() -> ApiError {
    ApiError::new(StatusCode::CONFLICT, "NotReady", "detection still running")
}

/// Locks a ready session's data. The guard serializes requests per key.
async fn ready(
    app: &AppState,
    key: &str,
) -> ApiResult<(Arc<Session>, tokio::sync::OwnedMutexGuard<Option<SessionData>>)> {
    let session = app.registry.lookup(key)?;
    if session.state() == SessionState::Detecting {
        return Err(not_ready());
    }
    let guard = session.data_owned().lock_owned().await;
    match session.state() {
        SessionState::Expired => Err(LookupError::Expired.into()),
        _ if guard.is_none() => Err(not_ready()),
        _ => Ok((session, guard)),
    }
}

async fn frame(State(app): State<AppState>, Path(key): Path<String>) -> ApiResult<Response> {
    let (_session, mut guard) = ready(&app, &key).await?;
    let data = guard.as_mut().expect("checked by ready");
    let bytes = match &data.frame {
        Some(b) => b.clone(),
        None => {
            let (input, prob) = (Arc::clone(&data.input), Arc::clone(&data.prob));
            let encoded = tokio::task::spawn_blocking(move || {
                let img = input.image();
                let (w, h) = img.dims();
                encode_parts(w as u32, h as u32, img.data(), prob.raster().data(), Compression::Auto)
            })
            .await
            .map_err(ApiError::internal)?;
            let b = Bytes::from(encoded);
            data.frame = Some(b.clone());
            b
        }
    };
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

/// Edit state posted before a download.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskRequest {
    pub width: usize,
    pub height: usize,
    pub threshold: f64,
    pub dilation: usize,
    /// `(start, len, state)` runs in row-major order.
    #[serde(default)]
    pub overlay: Vec<(usize, usize, u8)>,
}

async fn post_mask(State(app): State<AppState>, Path(key): Path<String>, body: Bytes) -> ApiResult<StatusCode> {
    let (_session, mut guard) = ready(&app, &key).await?;
    let req: MaskRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad("BadRequest", e.to_string()))?;
    let data = guard.as_mut().expect("checked by ready");
    let dims = data.prob.dims();
    if (req.width, req.height) != dims {
        return Err(ApiError::bad(
            "DimensionMismatch",
            format!("edit is {}x{}, image is {}x{}", req.width, req.height, dims.0, dims.1),
        ));
    }
    if !(0.0..=1.0).contains(&req.threshold) {
        return Err(ApiError::bad("BadParameter", format!("threshold {} outside [0, 1]", req.threshold)));
    }
    let runs: Vec<RleRun> = req
        .overlay
        .iter()
        .map(|&(start, len, state)| RleRun { start, len, state })
        .collect();
    let overlay = EditOverlay::from_rle(req.width, req.height, &runs)
        .map_err(|e| ApiError::bad("MalformedRle", e.to_string()))?;
    data.edit.threshold = req.threshold;
    data.edit.dilation = req.dilation;
    data.edit.overlay = Some(overlay);
    Ok(StatusCode::NO_CONTENT)
}

/// `<stem>_masked.fits`, restricted to a safe character set.
fn download_name(upload: &str) -> String {
    let name = tinyseg::batch::output_name(std::path::Path::new(upload));
    name.to_string_lossy()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect()
}

async fn download(State(app): State<AppState>, Path(key): Path<String>) -> ApiResult<Response> {
    let (session, guard) = ready(&app, &key).await?;
    let data = guard.as_ref().expect("checked by ready").clone();
    let bytes = tokio::task::spawn_blocking(move || {
        let e = &data.edit;
        let mask = compose(&data.prob, e.threshold, e.dilation, e.overlay.as_ref()).map_err(|e| e.to_string())?;
        masked_fits(data.input.document(), &mask).map_err(|e| e.to_string())
    })
    .await
    .map_err(ApiError::internal)?
    .map_err(ApiError::internal)?;
    drop(guard);
    let disposition = format!("attachment; filename=\"{}\"", download_name(session.filename()));
    let disposition = HeaderValue::from_str(&disposition).map_err(ApiError::internal)?;
    Ok((
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("application/fits")),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        bytes,
    )
        .into_response())
}
