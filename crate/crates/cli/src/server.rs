//! HTTP front end for a [`Campaign`].
//!
//! | route | result |
//! |---|---|
//! | `GET /api/task?annotator=<id>` | `{"tuple_id", "items"}` or 204 when no work is left |
//! | `POST /api/response` | `{"status": "ok" \| "duplicate"}` or 400 `{"error"}` |
//! | `GET /api/progress` | `{"tuples_total", "tuples_complete", "responses_total", "fraction_complete"}` |
//! | `GET /` | annotation UI assets, or a placeholder page |

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bwslex_core::campaign::{Ack, Campaign};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

const PLACEHOLDER_PAGE: &str = r#"<!doctype html>
<html lang="en">
<head><meta charset="utf-8"><title>bwslex annotation service</title></head>
<body>
<h1>bwslex annotation service</h1>
<p>No annotation UI is installed. Start the service with <code>--ui-dir</code> to serve one.</p>
<p>API: <code>GET /api/task?annotator=ID</code>, <code>POST /api/response</code>, <code>GET /api/progress</code>.</p>
</body>
</html>
"#;

#[derive(Debug, Deserialize)]
struct TaskQuery {
    annotator: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Submission {
    annotator_id: String,
    tuple_id: String,
    best: String,
    worst: String,
}

fn error(status: StatusCode, reason: impl Into<String>) -> Response {
    (status, Json(json!({ "error": reason.into() }))).into_response()
}

async fn task(State(campaign): State<Arc<Campaign>>, Query(q): Query<TaskQuery>) -> Response {
    let annotator = match q.annotator.as_deref().map(str::trim) {
        Some(a) if !a.is_empty() => a.to_string(),
        _ => return error(StatusCode::BAD_REQUEST, "missing annotator"),
    };
    match campaign.next_task(&annotator) {
        Some(task) => Json(task).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn response(
    State(campaign): State<Arc<Campaign>>,
    body: Result<Json<Submission>, JsonRejection>,
) -> Response {
    let Json(s) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let outcome = tokio::task::spawn_blocking(move || {
        campaign.submit_response(&s.annotator_id, &s.tuple_id, &s.best, &s.worst)
    })
    .await;
    match outcome {
        Ok(Ok(Ack::Recorded(_))) => Json(json!({ "status": "ok" })).into_response(),
        Ok(Ok(Ack::Duplicate(_))) => Json(json!({ "status": "duplicate" })).into_response(),
        Ok(Ok(Ack::Rejected(reason))) => error(StatusCode::BAD_REQUEST, reason),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn progress(State(campaign): State<Arc<Campaign>>) -> Response {
    let p = campaign.progress();
    Json(json!({
        "tuples_total": p.tuples_total,
        "tuples_complete": p.tuples_complete,
        "responses_total": p.responses_total,
        "fraction_complete": p.fraction_complete,
    }))
    .into_response()
}

/// Routes for the annotation API plus static UI assets from `ui_dir`.
pub fn router(campaign: Arc<Campaign>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/task", get(task))
        .route("/api/response", post(response))
        .route("/api/progress", get(progress))
        .with_state(campaign);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER_PAGE) })),
    }
}
