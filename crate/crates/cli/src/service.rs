//! Read-only HTTP query service over one immutable index.
//!
//! `GET /v1/health` answers `{"status":"ok"}`. `POST /v1/query` takes
//! `{"embedding": [...]}` or `{"hash_hex": "..."}`, optionally with `"k"` and
//! an `"id"` echoed back, and returns the evidence report of the KNN vote.

use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use endofinder_core::knn::{classify_code, explain, EvidenceReport};
use endofinder_core::{quantize, BallTreeIndex, EmbeddingVector, Error, HashCode};
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub struct ServiceState {
    index: BallTreeIndex,
    default_k: usize,
}

impl ServiceState {
    pub fn new(index: BallTreeIndex, default_k: usize) -> Arc<Self> {
        Arc::new(Self { index, default_k })
    }

    pub fn index(&self) -> &BallTreeIndex {
        &self.index
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash_hex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryError {
    /// The request is not a well-formed query.
    Malformed(String),
    /// The query does not have the index's dimension.
    Dimension { expected: usize, found: usize },
}

impl QueryError {
    pub fn status(&self) -> StatusCode {
        match self {
            QueryError::Malformed(_) => StatusCode::BAD_REQUEST,
            QueryError::Dimension { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        }
    }

    fn message(&self) -> String {
        match self {
            QueryError::Malformed(m) => m.clone(),
            QueryError::Dimension { expected, found } => {
                format!("dimension mismatch: index has {expected} bits, query has {found}")
            }
        }
    }
}

impl IntoResponse for QueryError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.message() });
        (self.status(), Json(body)).into_response()
    }
}

/// The library-level answer to one request; the HTTP handler is a thin wrapper.
pub fn answer(state: &ServiceState, req: &QueryRequest) -> Result<EvidenceReport, QueryError> {
    let bits = state.index.code_bits();
    let code = match (&req.embedding, &req.hash_hex) {
        (Some(e), None) => {
            if e.len() != bits {
                return Err(QueryError::Dimension { expected: bits, found: e.len() });
            }
            let v = EmbeddingVector::from_values(e.clone()).map_err(|e| QueryError::Malformed(e.to_string()))?;
            quantize(&v)
        }
        (None, Some(hex)) => HashCode::from_hex(bits, hex).map_err(|e| match e {
            Error::DimMismatch { .. } => QueryError::Dimension {
                expected: bits,
                found: hex.trim().len() * 4,
            },
            other => QueryError::Malformed(other.to_string()),
        })?,
        _ => return Err(QueryError::Malformed("give exactly one of \"embedding\" or \"hash_hex\"".into())),
    };
    let k = req.k.unwrap_or(state.default_k);
    if k == 0 || k > state.index.len() {
        return Err(QueryError::Malformed(format!("k must be between 1 and {}", state.index.len())));
    }
    let result = classify_code(&state.index, &code, k).map_err(|e| QueryError::Malformed(e.to_string()))?;
    explain(&result, state.index.records(), req.id.as_deref()).map_err(|e| QueryError::Malformed(e.to_string()))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn query(State(state): State<Arc<ServiceState>>, body: Bytes) -> Result<Json<EvidenceReport>, QueryError> {
    let req: QueryRequest = serde_json::from_slice(&body).map_err(|e| QueryError::Malformed(e.to_string()))?;
    answer(&state, &req).map(Json)
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/query", post(query))
        .with_state(state)
}

pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<ServiceState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await?;
    Ok(())
}
