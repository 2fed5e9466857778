//! Minimal HTTP front end: result ingestion plus series and change queries.
//!
//! Writes to one series key are serialized through a per-key lock; reads and
//! detection run concurrently on the blocking pool.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use perfdrift_core::ingest::{entries_from_value, Aggregator};
use perfdrift_core::store::{parse_timestamp, store_append, store_load, StoreLayout, StoreRecord};
use perfdrift_core::{CommitId, DetectionConfig, SeriesKey, Trigger};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::net::TcpListener;

use crate::{detect_stored, plan_points, ChangesResponse, Submission};

pub const DEFAULT_MAX_BODY: usize = 1 << 20;

/// Key prefix used when a submission does not name one.
pub const DEFAULT_SERIES_PREFIX: &str = "default";

#[derive(Clone)]
struct AppState {
    layout: Arc<StoreLayout>,
    locks: Arc<Mutex<HashMap<SeriesKey, Arc<tokio::sync::Mutex<()>>>>>,
}

impl AppState {
    fn lock_for(&self, key: &SeriesKey) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.locks.lock().expect("lock map poisoned");
        locks.entry(key.clone()).or_default().clone()
    }
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

pub fn router(layout: StoreLayout, max_body: usize) -> Router {
    let state = AppState {
        layout: Arc::new(layout),
        locks: Arc::default(),
    };
    Router::new()
        .route("/api/v1/result", post(post_result))
        .route("/api/v1/series/{*key}", get(get_series))
        .route("/api/v1/changes/{*key}", get(get_changes))
        .layer(DefaultBodyLimit::max(max_body))
        .with_state(state)
}

pub async fn serve(
    listener: TcpListener,
    layout: StoreLayout,
    max_body: usize,
) -> std::io::Result<()> {
    axum::serve(listener, router(layout, max_body)).await
}

fn required_str<'a>(body: &'a Value, field: &str) -> Result<&'a str, ApiError> {
    match body.get(field) {
        None | Some(Value::Null) => Err(ApiError::bad_request(format!(
            "missing required field \"{field}\""
        ))),
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(ApiError::bad_request(format!(
            "field \"{field}\" must be a string"
        ))),
    }
}

fn optional_str<'a>(body: &'a Value, field: &str) -> Result<Option<&'a str>, ApiError> {
    match body.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(_) => required_str(body, field).map(Some),
    }
}

fn env_field(body: &Value) -> Result<BTreeMap<String, String>, ApiError> {
    match body.get("env") {
        None | Some(Value::Null) => Ok(BTreeMap::new()),
        Some(Value::Object(map)) => map
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => Ok((k.clone(), s.clone())),
                _ => Err(ApiError::bad_request(format!(
                    "field \"env.{k}\" must be a string"
                ))),
            })
            .collect(),
        Some(_) => Err(ApiError::bad_request("field \"env\" must be an object")),
    }
}

async fn post_result(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let body: Value = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request(format!("malformed JSON: {e}")))?;
    if !body.is_object() {
        return Err(ApiError::bad_request("request body must be a JSON object"));
    }
    let commit = CommitId::new(required_str(&body, "commit")?)
        .map_err(|e| ApiError::bad_request(format!("field \"commit\": {e}")))?;
    let timestamp = parse_timestamp(required_str(&body, "timestamp")?)
        .map_err(|e| ApiError::bad_request(format!("field \"timestamp\": {e}")))?;
    let trigger: Trigger = match optional_str(&body, "trigger")? {
        Some(t) => t
            .parse()
            .map_err(|e| ApiError::bad_request(format!("field \"trigger\": {e}")))?,
        None => Trigger::default(),
    };
    let prefix = optional_str(&body, "series_prefix")?.unwrap_or(DEFAULT_SERIES_PREFIX);
    let env = env_field(&body)?;
    let results = body
        .get("results")
        .ok_or_else(|| ApiError::bad_request("missing required field \"results\""))?;
    let entries = entries_from_value(results)
        .map_err(|e| ApiError::bad_request(format!("field \"results\": {e}")))?;
    let planned = plan_points(&Submission {
        prefix,
        commit,
        timestamp,
        trigger,
        env,
        aggregator: Aggregator::Mean,
        entries: &entries,
    })
    .map_err(ApiError::bad_request)?;

    let mut appended = Vec::with_capacity(planned.len());
    for (key, point) in planned {
        let lock = state.lock_for(&key);
        let _guard = lock.lock().await;
        let layout = state.layout.clone();
        let k = key.clone();
        tokio::task::spawn_blocking(move || store_append(&layout, &k, &point))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
            .map_err(|e| ApiError::internal(e.to_string()))?;
        appended.push(key.to_string());
    }
    Ok((StatusCode::CREATED, Json(json!({ "appended": appended }))))
}

fn parse_key(raw: &str) -> Result<SeriesKey, ApiError> {
    SeriesKey::parse(raw.trim_start_matches('/')).map_err(|e| ApiError::bad_request(e.to_string()))
}

/// Stored series as returned by `GET /api/v1/series/{key}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesResponse {
    pub key: String,
    pub points: Vec<StoreRecord>,
    pub warnings: Vec<String>,
}

async fn get_series(
    State(state): State<AppState>,
    Path(raw): Path<String>,
) -> Result<Json<SeriesResponse>, ApiError> {
    let key = parse_key(&raw)?;
    let layout = state.layout.clone();
    let k = key.clone();
    let loaded = tokio::task::spawn_blocking(move || store_load(&layout, &k))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(SeriesResponse {
        key: key.to_string(),
        points: loaded
            .series
            .points()
            .iter()
            .map(StoreRecord::from_point)
            .collect(),
        warnings: loaded.warnings.iter().map(ToString::to_string).collect(),
    }))
}

/// Query parameters of `GET /api/v1/changes/{key}`; unset fields keep the
/// detection defaults.
#[derive(Debug, Default, Deserialize)]
pub struct ChangesQuery {
    pub pvalue: Option<f64>,
    pub magnitude: Option<f64>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub permutations: Option<usize>,
    pub min_segment: Option<usize>,
}

impl ChangesQuery {
    pub fn config(&self) -> DetectionConfig {
        let d = DetectionConfig::default();
        DetectionConfig {
            alpha: self.alpha.unwrap_or(d.alpha),
            p_threshold: self.pvalue.unwrap_or(d.p_threshold),
            magnitude_threshold: self.magnitude.unwrap_or(d.magnitude_threshold),
            permutations: self.permutations.unwrap_or(d.permutations),
            min_segment: self.min_segment.unwrap_or(d.min_segment),
            seed: self.seed.unwrap_or(d.seed),
        }
    }
}

async fn get_changes(
    State(state): State<AppState>,
    Path(raw): Path<String>,
    Query(query): Query<ChangesQuery>,
) -> Result<Json<ChangesResponse>, ApiError> {
    let key = parse_key(&raw)?;
    let config = query.config();
    config
        .validate()
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let layout = state.layout.clone();
    let (_, changes) = tokio::task::spawn_blocking(move || detect_stored(&layout, &key, &config))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(ApiError::internal)?;
    Ok(Json(ChangesResponse { changes }))
}
