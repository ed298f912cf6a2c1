//! HTTP snapshot service and push channel for the teacher view.
//!
//! | route | |
//! |---|---|
//! | `GET /api/v1/state` | latest snapshot view, `ETag` = version |
//! | `GET /api/v1/panorama.png?version=V` | panorama of a retained version |
//! | `GET /api/v1/students/{id}` | profile of a matchable student |
//! | `GET/POST /api/v1/call-log` | teacher call events |
//! | `POST /api/v1/consent` | opt out / opt back in |
//! | `WS /api/v1/events` | `{"type":"snapshot","version":V}` per publish |
//!
//! Opted-out and unknown students look the same in every response.

mod ws;

pub use ws::CLOSE_POLICY;

use std::collections::BTreeMap;
use std::future::Future;
use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::config::ApiConfig;
use crate::gallery::{Consent, GalleryError, GalleryStore};
use crate::matcher::Band;
use crate::session::{unix_ms, CallEvent, CallLog, SessionError, Snapshot, SnapshotStats, SnapshotStore};

pub const TOKEN_HEADER: &str = "x-namemo-token";

#[derive(Clone)]
pub struct ApiState {
    pub store: Arc<SnapshotStore>,
    pub gallery: Arc<GalleryStore>,
    pub calls: Arc<CallLog>,
    pub config: Arc<ApiConfig>,
}

impl ApiState {
    pub fn new(store: Arc<SnapshotStore>, gallery: Arc<GalleryStore>, calls: Arc<CallLog>, config: ApiConfig) -> Self {
        Self { store, gallery, calls, config: Arc::new(config) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiAnnotation {
    #[serde(rename = "box")]
    pub bbox: ApiBox,
    pub band: Band,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub student_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSnapshotView {
    pub version: u64,
    /// Unix time, milliseconds.
    pub published_at: u64,
    pub panorama_url: String,
    pub width: u32,
    pub height: u32,
    pub annotations: Vec<ApiAnnotation>,
    pub stats: SnapshotStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentProfileView {
    pub student_id: String,
    pub display_name: String,
    pub profile: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CallRequest {
    pub student_id: String,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ConsentRequest {
    pub student_id: String,
    pub consent: Consent,
}

/// Builds the view of `snap` against the gallery as it is now: students who
/// have opted out since the snapshot are shown as unknown. Unknown entries
/// carry no identity and a zero confidence.
pub fn snapshot_view(snap: &Snapshot, gallery: &GalleryStore) -> ApiSnapshotView {
    let annotations = snap
        .annotations
        .iter()
        .map(|a| {
            let b = a.pano_box;
            let bbox = ApiBox { x: b.x, y: b.y, w: b.w, h: b.h };
            let record = a.result.student_id.as_deref().and_then(|id| gallery.matchable(id));
            match record {
                Some(r) if a.result.band != Band::Unknown => ApiAnnotation {
                    bbox,
                    band: a.result.band,
                    confidence: a.result.confidence,
                    student_id: Some(r.student_id),
                    display_name: Some(r.display_name),
                },
                _ => ApiAnnotation { bbox, band: Band::Unknown, confidence: 0.0, student_id: None, display_name: None },
            }
        })
        .collect();
    ApiSnapshotView {
        version: snap.version,
        published_at: unix_ms(snap.published_at),
        panorama_url: format!("/api/v1/panorama.png?version={}", snap.version),
        width: snap.panorama.layout.width_px,
        height: snap.panorama.layout.height_px,
        annotations,
        stats: snap.stats,
    }
}

fn error(status: StatusCode, message: &str) -> Response {
    (status, Json(serde_json::json!({ "error": message }))).into_response()
}

fn not_found() -> Response {
    error(StatusCode::NOT_FOUND, "not found")
}

fn etag(version: u64) -> HeaderValue {
    HeaderValue::from_str(&format!("\"{version}\"")).expect("digits are a valid header")
}

/// `If-None-Match` hit for `version`; quoted, bare and weak tags all count.
fn etag_matches(headers: &HeaderMap, version: u64) -> bool {
    let want = version.to_string();
    headers
        .get_all(header::IF_NONE_MATCH)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(','))
        .map(|t| t.trim().trim_start_matches("W/").trim_matches('"'))
        .any(|t| t == "*" || t == want)
}

async fn get_state(State(s): State<ApiState>, headers: HeaderMap) -> Response {
    let Some(snap) = s.store.latest() else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "no snapshot published yet");
    };
    if etag_matches(&headers, snap.version) {
        return (StatusCode::NOT_MODIFIED, [(header::ETAG, etag(snap.version))]).into_response();
    }
    let view = snapshot_view(&snap, &s.gallery);
    ([(header::ETAG, etag(snap.version))], Json(view)).into_response()
}

#[derive(Deserialize)]
struct PanoramaQuery {
    version: Option<u64>,
}

async fn get_panorama(State(s): State<ApiState>, Query(q): Query<PanoramaQuery>) -> Response {
    let snap = match q.version {
        Some(v) => s.store.get(v),
        None => s.store.latest(),
    };
    let Some(snap) = snap else { return not_found() };
    (
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("image/png")),
            (header::ETAG, etag(snap.version)),
        ],
        snap.panorama.png.to_vec(),
    )
        .into_response()
}

async fn get_student(State(s): State<ApiState>, Path(id): Path<String>) -> Response {
    match s.gallery.matchable(&id) {
        Some(r) => Json(StudentProfileView {
            student_id: r.student_id,
            display_name: r.display_name,
            profile: r.profile,
        })
        .into_response(),
        None => not_found(),
    }
}

async fn get_calls(State(s): State<ApiState>) -> Response {
    Json(serde_json::json!({ "events": s.calls.events() })).into_response()
}

async fn post_call(State(s): State<ApiState>, Json(req): Json<CallRequest>) -> Response {
    match s.calls.record_call(CallEvent::teacher_click(req.student_id, req.note), &s.gallery) {
        Ok(position) => (StatusCode::CREATED, Json(serde_json::json!({ "position": position }))).into_response(),
        Err(SessionError::UnknownId(_)) => not_found(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string()),
    }
}

async fn post_consent(State(s): State<ApiState>, Json(req): Json<ConsentRequest>) -> Response {
    match s.gallery.set_consent(&req.student_id, req.consent) {
        Ok(v) => Json(serde_json::json!({ "gallery_version": v })).into_response(),
        Err(GalleryError::UnknownId(_)) => not_found(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string()),
    }
}

async fn require_token(State(s): State<ApiState>, req: Request, next: Next) -> Response {
    if req.method() == Method::POST {
        if let Some(token) = &s.config.token {
            let given = req.headers().get(TOKEN_HEADER).and_then(|v| v.to_str().ok());
            if given != Some(token.as_str()) {
                return error(StatusCode::UNAUTHORIZED, "missing or wrong X-NaMemo-Token");
            }
        }
    }
    next.run(req).await
}

pub fn router(state: ApiState) -> Router {
    Router::new()
        .route("/api/v1/state", get(get_state))
        .route("/api/v1/panorama.png", get(get_panorama))
        .route("/api/v1/students/:id", get(get_student))
        .route("/api/v1/call-log", get(get_calls).post(post_call))
        .route("/api/v1/consent", post(post_consent))
        .route("/api/v1/events", get(ws::events))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: ApiState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
