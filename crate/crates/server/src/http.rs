use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Deserialize;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::api::{Api, ApiError};

fn json(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn reply(r: Result<String, ApiError>) -> Response {
    match r {
        Ok(body) => json(StatusCode::OK, body),
        Err(e) => error(e),
    }
}

fn error(e: ApiError) -> Response {
    let status = StatusCode::from_u16(e.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    json(status, e.body())
}

async fn runs(State(api): State<Arc<Api>>) -> Response {
    reply(api.runs())
}

async fn models(State(api): State<Arc<Api>>) -> Response {
    reply(Ok(api.models()))
}

async fn series(State(api): State<Arc<Api>>, Path(id): Path<String>) -> Response {
    reply(api.series(&id))
}

#[derive(Deserialize)]
struct ExcessQuery {
    run: String,
    family: Option<String>,
}

async fn excess(State(api): State<Arc<Api>>, Query(q): Query<ExcessQuery>) -> Response {
    reply(api.excess(&q.run, q.family.as_deref()))
}

#[derive(Deserialize)]
struct ProjectQuery {
    #[serde(default)]
    mode: Option<String>,
}

/// Synchronous by default; `?mode=async` answers 202 with a job ticket.
async fn project(State(api): State<Arc<Api>>, Query(q): Query<ProjectQuery>, body: Bytes) -> Response {
    let req = match Api::parse_request(&body) {
        Ok(r) => r,
        Err(e) => return error(e),
    };
    if q.mode.as_deref() == Some("async") {
        return match api.submit(req) {
            Ok(ticket) => json(StatusCode::ACCEPTED, ticket),
            Err(e) => error(e),
        };
    }
    let computed = tokio::task::spawn_blocking(move || api.project(&req)).await;
    match computed {
        Ok(Ok((body, hit))) => {
            let mut r = json(StatusCode::OK, body.as_str().to_owned());
            let tag = if hit { "hit" } else { "miss" };
            r.headers_mut().insert("x-cache", HeaderValue::from_static(tag));
            r
        }
        Ok(Err(e)) => error(e),
        Err(join) => error(ApiError::internal(format!("projection task aborted: {join}"))),
    }
}

async fn job(State(api): State<Arc<Api>>, Path(id): Path<String>) -> Response {
    reply(api.job(&id))
}

/// All endpoints under `/api`, with CORS for `origin` (any origin when
/// `None`).
pub fn router(api: Arc<Api>, origin: Option<&str>) -> Router {
    let cors = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    let cors = match origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => cors.allow_origin(AllowOrigin::list([o])),
        None => cors.allow_origin(Any),
    };
    Router::new()
        .route("/api/runs", get(runs))
        .route("/api/models", get(models))
        .route("/api/series/{id}", get(series))
        .route("/api/excess", get(excess))
        .route("/api/project", post(project))
        .route("/api/jobs/{id}", get(job))
        .layer(cors)
        .with_state(api)
}

/// Binds `0.0.0.0:port` and serves until the process ends.
pub async fn serve(api: Arc<Api>, port: u16, origin: Option<&str>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(api, origin)).await
}
