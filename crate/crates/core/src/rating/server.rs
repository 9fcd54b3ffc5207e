use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::error::Result;
use crate::rating::session::{RatingSession, SessionItem, SESSION_FILE};
use crate::rating::store::{RatingLog, RatingRecord, RATINGS_FILE};
use crate::rating::CRITERIA;

struct SessionSlot {
    dir: PathBuf,
    session: RatingSession,
    log: Mutex<RatingLog>,
}

struct Inner {
    sessions: BTreeMap<String, SessionSlot>,
    ui_dir: Option<PathBuf>,
}

/// Sessions found under a root directory, each with its ratings log open for appending.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Loads `root` itself if it holds a session, plus every immediate subdirectory that does.
    pub fn load(root: &Path, ui_dir: Option<PathBuf>) -> Result<Self> {
        let mut dirs = vec![root.to_path_buf()];
        if root.is_dir() {
            let mut subs: Vec<PathBuf> = std::fs::read_dir(root)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir())
                .collect();
            subs.sort();
            dirs.extend(subs);
        }
        let mut sessions = BTreeMap::new();
        for dir in dirs {
            if !dir.join(SESSION_FILE).is_file() {
                continue;
            }
            let session = RatingSession::load(&dir)?;
            let log = RatingLog::open(&dir.join(RATINGS_FILE))?;
            sessions.insert(
                session.session_id.clone(),
                SessionSlot {
                    dir,
                    session,
                    log: Mutex::new(log),
                },
            );
        }
        Ok(Self(Arc::new(Inner { sessions, ui_dir })))
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.0.sessions.keys().cloned().collect()
    }
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(json!({ "error": msg.into() }))).into_response()
}

fn criteria() -> Value {
    Value::Array(CRITERIA.iter().map(|(s, t)| json!({ "score": s, "text": t })).collect())
}

#[derive(Serialize)]
struct Progress {
    total: usize,
    rated: usize,
    remaining: usize,
    completed: bool,
}

fn progress(slot: &SessionSlot, log: &RatingLog) -> Progress {
    let total = slot.session.items.len();
    let rated = slot.session.items.iter().filter(|i| log.score_of(&i.item_id).is_some()).count();
    Progress {
        total,
        rated,
        remaining: total - rated,
        completed: rated == total,
    }
}

fn item_view(session: &RatingSession, pos: usize, item: &SessionItem) -> Value {
    json!({
        "item_id": item.item_id,
        "frame_id": item.frame_id,
        "image_url": format!("/api/session/{}/overlay/{}", session.session_id, item.item_id),
        "blinded_method_id": item.blinded_method_id,
        "position": pos + 1,
        "total": session.items.len(),
        "scale_bar": session.scale_bar,
    })
}

fn slot<'a>(state: &'a AppState, id: &str) -> std::result::Result<&'a SessionSlot, Response> {
    state
        .0
        .sessions
        .get(id)
        .ok_or_else(|| error(StatusCode::NOT_FOUND, format!("unknown session {id}")))
}

async fn next(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let slot = match slot(&state, &id) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let log = slot.log.lock().expect("ratings lock");
    let p = progress(slot, &log);
    let pending = slot
        .session
        .items
        .iter()
        .enumerate()
        .find(|(_, i)| log.score_of(&i.item_id).is_none());
    let body = match pending {
        Some((pos, item)) => json!({
            "session_id": id,
            "done": false,
            "completed": false,
            "item": item_view(&slot.session, pos, item),
            "criteria": criteria(),
            "progress": p,
        }),
        None => json!({
            "session_id": id,
            "done": true,
            "completed": true,
            "item": null,
            "criteria": criteria(),
            "progress": p,
        }),
    };
    Json(body).into_response()
}

async fn rate(State(state): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> Response {
    let slot = match slot(&state, &id) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let v: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed JSON: {e}")),
    };
    let Some(item_id) = v.get("item_id").and_then(Value::as_str) else {
        return error(StatusCode::BAD_REQUEST, "body needs a string item_id");
    };
    let Some(score) = v.get("score").filter(|s| s.is_number()) else {
        return error(StatusCode::BAD_REQUEST, "body needs a numeric score");
    };
    let score = match score.as_u64() {
        Some(s) if s <= 3 => s as u8,
        _ => return error(StatusCode::UNPROCESSABLE_ENTITY, format!("score {score} is not one of 0, 1, 2, 3")),
    };
    let Some(item) = slot.session.items.iter().find(|i| i.item_id == item_id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown item {item_id}"));
    };
    let record = RatingRecord {
        rater_id: slot.session.rater_id.clone(),
        session_id: id.clone(),
        item_id: item.item_id.clone(),
        frame_id: item.frame_id,
        blinded_method_id: item.blinded_method_id.clone(),
        score,
        timestamp_ms: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64),
    };
    let mut log = slot.log.lock().expect("ratings lock");
    if let Err(e) = log.append(record) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, format!("could not store rating: {e}"));
    }
    let p = progress(slot, &log);
    Json(json!({ "item_id": item_id, "score": score, "progress": p })).into_response()
}

async fn progress_handler(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match slot(&state, &id) {
        Ok(slot) => {
            let log = slot.log.lock().expect("ratings lock");
            Json(progress(slot, &log)).into_response()
        }
        Err(r) => r,
    }
}

async fn overlay(State(state): State<AppState>, UrlPath((id, item_id)): UrlPath<(String, String)>) -> Response {
    let slot = match slot(&state, &id) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let Some(item) = slot.session.items.iter().find(|i| i.item_id == item_id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown item {item_id}"));
    };
    match tokio::fs::read(slot.dir.join(&item.image)).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "image/png")], bytes).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("overlay unreadable: {e}")),
    }
}

pub fn router(state: AppState) -> Router {
    let ui = state.0.ui_dir.clone();
    let api = Router::new()
        .route("/api/session/{id}/next", get(next))
        .route("/api/session/{id}/rating", post(rate))
        .route("/api/session/{id}/progress", get(progress_handler))
        .route("/api/session/{id}/overlay/{item}", get(overlay))
        .with_state(state);
    match ui {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until ctrl-c.
pub async fn serve(state: AppState, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
