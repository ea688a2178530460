//! HTTP binding for [`Api`].

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::extract::{ConnectInfo, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::{Json, Router};

use crate::api::{Api, ApiRequest, ApiResponse};

pub const MAX_BODY_BYTES: usize = 4 << 20;

pub fn router(api: Arc<Api>) -> Router {
    Router::new().fallback(handle).with_state(api)
}

fn bearer(req: &Request) -> Option<String> {
    let value = req.headers().get(header::AUTHORIZATION)?.to_str().ok()?;
    let (scheme, token) = value.split_once(' ')?;
    scheme.eq_ignore_ascii_case("bearer").then(|| token.trim().to_owned())
}

fn reply(r: ApiResponse) -> Response {
    let status = StatusCode::from_u16(r.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let mut response = (status, Json(r.body)).into_response();
    if let Some(secs) = r.retry_after {
        response
            .headers_mut()
            .insert(header::RETRY_AFTER, HeaderValue::from(secs));
    }
    response
}

fn bad_request(message: String) -> Response {
    reply(ApiResponse {
        status: 400,
        body: serde_json::json!({ "error": { "code": "invalid_request", "message": message } }),
        retry_after: None,
    })
}

async fn handle(State(api): State<Arc<Api>>, req: Request<Body>) -> Response {
    let query = match Query::<HashMap<String, String>>::try_from_uri(req.uri()) {
        Ok(Query(q)) => q,
        Err(e) => return bad_request(e.body_text()),
    };
    let token = bearer(&req);
    let peer = req
        .extensions()
        .get::<ConnectInfo<SocketAddr>>()
        .map(|ConnectInfo(addr)| addr.ip());
    let method = req.method().as_str().to_owned();
    let path = req.uri().path().to_owned();
    let body = match to_bytes(req.into_body(), MAX_BODY_BYTES).await {
        Ok(b) => b.to_vec(),
        Err(e) => return bad_request(format!("body: {e}")),
    };
    let request = ApiRequest {
        method,
        path,
        query,
        token,
        peer,
        body,
    };
    // Store writes fsync; keep them off the async workers.
    match tokio::task::spawn_blocking(move || api.dispatch(&request)).await {
        Ok(r) => reply(r),
        Err(_) => reply(ApiResponse {
            status: 500,
            body: serde_json::json!({ "error": { "code": "internal_error", "message": "handler panicked" } }),
            retry_after: None,
        }),
    }
}
