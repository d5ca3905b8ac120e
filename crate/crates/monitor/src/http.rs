//! REST endpoints and the live message stream.
//!
//! `/stream` speaks WebSocket (one JSON message per text frame) when the
//! request asks for an upgrade, and otherwise answers with a chunked
//! `application/x-ndjson` body, one message per line. Either way a
//! subscriber that falls more than [`crate::service::STREAM_BUFFER`]
//! messages behind is disconnected.

use std::sync::Arc;

use axum::body::Body;
use axum::extract::rejection::JsonRejection;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream;
use serde_json::json;
use tokio::sync::broadcast::{self, error::RecvError};

use crate::messages::StreamMessage;
use crate::retrain::RetrainRequest;
use crate::service::Shared;

pub fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/state", get(state))
        .route("/retrain", post(retrain))
        .route("/retrain/{id}", get(retrain_status))
        .route("/alarms", get(alarms))
        .route("/alarms/{id}/ack", post(ack))
        .route("/stream", get(stream_handler))
        .with_state(shared)
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(json!({ "error": msg.into() }))).into_response()
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn state(State(s): State<Arc<Shared>>) -> Response {
    Json(s.snapshot()).into_response()
}

async fn retrain(State(s): State<Arc<Shared>>, body: Result<Json<RetrainRequest>, JsonRejection>) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    match s.start_retrain(req) {
        Ok(job_id) => (StatusCode::ACCEPTED, Json(json!({ "job_id": job_id }))).into_response(),
        Err(c) => error(
            StatusCode::CONFLICT,
            format!("retrain job {} is still running", c.running),
        ),
    }
}

async fn retrain_status(State(s): State<Arc<Shared>>, Path(id): Path<u64>) -> Response {
    match s.job(id) {
        Some(job) => Json(job).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("no retrain job {id}")),
    }
}

async fn alarms(State(s): State<Arc<Shared>>) -> Response {
    Json(s.alarms()).into_response()
}

async fn ack(State(s): State<Arc<Shared>>, Path(id): Path<u64>) -> Response {
    match s.ack_alarm(id) {
        Some(rec) => Json(rec).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("no alarm {id}")),
    }
}

async fn stream_handler(
    State(s): State<Arc<Shared>>,
    ws: Result<WebSocketUpgrade, axum::extract::ws::rejection::WebSocketUpgradeRejection>,
) -> Response {
    let rx = s.subscribe();
    match ws {
        Ok(ws) => ws.on_upgrade(move |socket| ws_session(socket, rx)),
        Err(_) => ndjson(rx),
    }
}

fn ndjson(rx: broadcast::Receiver<StreamMessage>) -> Response {
    let lines = stream::unfold(rx, |mut rx| async move {
        match rx.recv().await {
            Ok(msg) => Some((Ok::<_, std::convert::Infallible>(msg.to_line()), rx)),
            Err(RecvError::Lagged(n)) => {
                log::warn!("stream subscriber lagged by {n} messages; disconnecting");
                None
            }
            Err(RecvError::Closed) => None,
        }
    });
    (
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from_stream(lines),
    )
        .into_response()
}

async fn ws_session(mut socket: WebSocket, mut rx: broadcast::Receiver<StreamMessage>) {
    loop {
        tokio::select! {
            msg = rx.recv() => match msg {
                Ok(msg) => {
                    if socket.send(Message::Text(msg.to_json().into())).await.is_err() {
                        break;
                    }
                }
                Err(RecvError::Lagged(n)) => {
                    log::warn!("websocket subscriber lagged by {n} messages; disconnecting");
                    let _ = socket.send(Message::Close(None)).await;
                    break;
                }
                Err(RecvError::Closed) => break,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
}
