//! HTTP/JSON API over a measurement store, mounted under `/api/v1`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, NaiveDate, Utc};
use parking_lot::RwLock;
use serde::Deserialize;
use serde_json::json;

use urbansense_core::analytics::{DaytimeWindow, DEFAULT_BIN_H, DEFAULT_SUN_DELTA_C};
use urbansense_core::envelope::{EnvelopeError, UplinkEnvelope};
use urbansense_core::export::export_csv;
use urbansense_core::model::{rfc3339, DevEui};
use urbansense_core::report::{self, ReportError};
use urbansense_core::store::{IngestResult, Selector, Store, StoreError};

pub type SharedStore = Arc<RwLock<Store>>;

/// JSON error body `{error, detail}` with its status code.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub error: &'static str,
    pub detail: String,
}

impl ApiError {
    fn bad_request(error: &'static str, detail: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            error,
            detail: detail.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.error, "detail": self.detail }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let detail = e.to_string();
        let (status, error) = match &e {
            StoreError::Decode(EnvelopeError::Port(_)) => (StatusCode::UNPROCESSABLE_ENTITY, "PortError"),
            StoreError::Decode(EnvelopeError::Payload(c)) => (StatusCode::UNPROCESSABLE_ENTITY, c.kind()),
            StoreError::UnknownDevice(_) | StoreError::UnknownSquare(_) => (StatusCode::NOT_FOUND, "NotFound"),
            StoreError::Range { .. } => (StatusCode::BAD_REQUEST, "RangeError"),
            StoreError::Square { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "GeometryError"),
            StoreError::Corrupt { .. } | StoreError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "StoreError"),
        };
        Self { status, error, detail }
    }
}

impl From<ReportError> for ApiError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Store(s) => s.into(),
            ReportError::Analytics(a) => Self {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                error: "AnalyticsError",
                detail: a.to_string(),
            },
        }
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::bad_request("InvalidQuery", e.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_eui(s: &str) -> ApiResult<DevEui> {
    s.parse().map_err(|e: urbansense_core::model::DevEuiError| ApiError::bad_request("InvalidDevEui", e.to_string()))
}

fn parse_time(s: Option<&str>, default: DateTime<Utc>) -> ApiResult<DateTime<Utc>> {
    match s {
        None => Ok(default),
        Some(s) => rfc3339::parse(s).map_err(|e| ApiError::bad_request("InvalidTime", format!("{s:?}: {e}"))),
    }
}

#[derive(Debug, Deserialize)]
struct RangeQuery {
    from: Option<String>,
    to: Option<String>,
}

impl RangeQuery {
    fn bounds(&self) -> ApiResult<(DateTime<Utc>, DateTime<Utc>)> {
        Ok((
            parse_time(self.from.as_deref(), DateTime::<Utc>::MIN_UTC)?,
            parse_time(self.to.as_deref(), DateTime::<Utc>::MAX_UTC)?,
        ))
    }
}

pub fn router(store: SharedStore) -> Router {
    Router::new()
        .route("/api/v1/uplinks", post(post_uplink))
        .route("/api/v1/devices", get(get_devices))
        .route("/api/v1/devices/{eui}/measurements", get(get_measurements))
        .route("/api/v1/squares/{id}/summary", get(get_summary))
        .route("/api/v1/export.csv", get(get_export))
        .route("/api/v1/analytics/sun", get(get_sun))
        .route("/api/v1/analytics/rain", get(get_rain))
        .route("/api/v1/analytics/scatter", get(get_scatter))
        .route("/api/v1/analytics/profile", get(get_profile))
        .route("/api/v1/analytics/daily", get(get_daily))
        .with_state(store)
}

async fn post_uplink(State(store): State<SharedStore>, body: Bytes) -> ApiResult<Response> {
    let env: UplinkEnvelope = serde_json::from_slice(&body).map_err(|e| {
        let error = if e.is_data() { "InvalidEnvelope" } else { "MalformedJson" };
        ApiError::bad_request(error, e.to_string())
    })?;
    let mut s = store.write();
    let known = s.device(&env.dev_eui).is_some();
    let result = s.ingest_uplink(&env)?;
    if !known && s.device(&env.dev_eui).is_some() {
        tracing::info!(dev_eui = %env.dev_eui, "auto-registered device");
    }
    let square_id = s.device(&env.dev_eui).and_then(|d| d.square_id.clone());
    let (status, label) = match result {
        IngestResult::Created => (StatusCode::CREATED, "created"),
        IngestResult::Duplicate => (StatusCode::OK, "duplicate"),
    };
    let body = json!({
        "result": label,
        "dev_eui": env.dev_eui,
        "fcnt": env.fcnt,
        "square_id": square_id,
    });
    Ok((status, Json(body)).into_response())
}

async fn get_devices(State(store): State<SharedStore>) -> Response {
    let s = store.read();
    let devices: Vec<_> = s.devices().collect();
    Json(devices).into_response()
}

async fn get_measurements(
    State(store): State<SharedStore>,
    Path(eui): Path<String>,
    q: Result<Query<RangeQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let eui = parse_eui(&eui)?;
    let (from, to) = q?.bounds()?;
    let s = store.read();
    let records = s.query_measurements(&Selector::Device(eui), from, to)?;
    Ok(Json(records).into_response())
}

#[derive(Debug, Deserialize)]
struct DateQuery {
    date: String,
}

async fn get_summary(
    State(store): State<SharedStore>,
    Path(id): Path<String>,
    q: Result<Query<DateQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let q = q?;
    let date = NaiveDate::parse_from_str(&q.date, "%Y-%m-%d")
        .map_err(|e| ApiError::bad_request("InvalidDate", format!("{:?}: {e}", q.date)))?;
    let s = store.read();
    Ok(Json(s.square_summary(&id, date)?).into_response())
}

async fn get_export(State(store): State<SharedStore>, q: Result<Query<RangeQuery>, QueryRejection>) -> ApiResult<Response> {
    let (from, to) = q?.bounds()?;
    let s = store.read();
    let bytes = export_csv(s.range(from, to)?, s.interval_s()).map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        error: "ExportError",
        detail: e.to_string(),
    })?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], bytes).into_response())
}

#[derive(Debug, Deserialize)]
struct SunQuery {
    dev_eui: Option<String>,
    delta_c: Option<f64>,
    start_h: Option<f64>,
    end_h: Option<f64>,
}

async fn get_sun(State(store): State<SharedStore>, q: Result<Query<SunQuery>, QueryRejection>) -> ApiResult<Response> {
    let q = q?;
    let dev = q.dev_eui.as_deref().map(parse_eui).transpose()?;
    let d = DaytimeWindow::default();
    let window = DaytimeWindow {
        start_h: q.start_h.unwrap_or(d.start_h),
        end_h: q.end_h.unwrap_or(d.end_h),
    };
    let s = store.read();
    let out = report::sun_report(&s, dev, window, q.delta_c.unwrap_or(DEFAULT_SUN_DELTA_C))?;
    Ok(Json(out).into_response())
}

#[derive(Debug, Deserialize)]
struct SquareQuery {
    square: Option<String>,
    bin_h: Option<f64>,
}

impl SquareQuery {
    fn required(&self) -> ApiResult<&str> {
        self.square
            .as_deref()
            .ok_or_else(|| ApiError::bad_request("InvalidQuery", "missing query parameter `square`"))
    }
}

async fn get_rain(State(store): State<SharedStore>, q: Result<Query<SquareQuery>, QueryRejection>) -> ApiResult<Response> {
    let q = q?;
    let s = store.read();
    Ok(Json(report::rain_report(&s, q.square.as_deref())?).into_response())
}

async fn get_scatter(State(store): State<SharedStore>, q: Result<Query<SquareQuery>, QueryRejection>) -> ApiResult<Response> {
    let q = q?;
    let s = store.read();
    Ok(Json(report::scatter_report(&s, q.required()?)?).into_response())
}

async fn get_profile(State(store): State<SharedStore>, q: Result<Query<SquareQuery>, QueryRejection>) -> ApiResult<Response> {
    let q = q?;
    let s = store.read();
    let p = report::profile_report(&s, q.required()?, q.bin_h.unwrap_or(DEFAULT_BIN_H))?;
    Ok(Json(p).into_response())
}

async fn get_daily(State(store): State<SharedStore>) -> ApiResult<Response> {
    let s = store.read();
    Ok(Json(report::daily_report(&s)?).into_response())
}

/// Serves the API until Ctrl-C. Fails if the address cannot be bound.
pub async fn serve(store: Store, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let app = router(Arc::new(RwLock::new(store)));
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
