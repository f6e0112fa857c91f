//! HTTP/JSON interface.
//!
//! Image payloads are accepted either as `multipart/form-data` (an `image`
//! file part plus plain text parts) or as JSON with the image base64-encoded
//! in an `image` field. All responses are JSON except `GET /images/{id}`,
//! which returns the stored bytes.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use cbir_core::classifier::Probabilities;
use cbir_core::imagecore::decode_image;
use cbir_core::retrieval::{
    apply_feedback, enroll, query, EnrollRequest, FeedbackRequest, QueryOptions, RetrievalError,
};
use cbir_core::shape::ShapeError;
use cbir_core::store::{ImageId, Polarity, QueryId, QueryParams, Store, StoreError};
use cbir_core::Category;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::eval::LABEL_KEY;

const MAX_UPLOAD_BYTES: usize = 32 << 20;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
}

pub fn router(store: Arc<Store>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/images", post(post_image))
        .route("/images/{id}", get(get_image))
        .route("/images/{id}/meta", get(get_image_meta))
        .route("/query", post(post_query))
        .route("/feedback", post(post_feedback))
        .route("/search", get(get_search))
        .route("/categories", get(get_categories))
        .route("/healthz", get(get_health))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(AppState { store });
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until ctrl-c, then drains in-flight requests.
pub async fn serve(store: Arc<Store>, addr: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::warn!("{}: {}", self.status, self.message);
        }
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<RetrievalError> for ApiError {
    fn from(e: RetrievalError) -> Self {
        let status = match &e {
            RetrievalError::UntrainedClassifier => StatusCode::SERVICE_UNAVAILABLE,
            RetrievalError::UnfittedNormalization => StatusCode::CONFLICT,
            RetrievalError::Shape(_) | RetrievalError::Color(_) | RetrievalError::Texture(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            RetrievalError::Image(_) => StatusCode::BAD_REQUEST,
            RetrievalError::DuplicateFeedback { .. } => StatusCode::CONFLICT,
            RetrievalError::UnknownQuery(_)
            | RetrievalError::UnknownImage(_)
            | RetrievalError::Store(StoreError::NotFound(_) | StoreError::QueryNotFound(_)) => {
                StatusCode::NOT_FOUND
            }
            RetrievalError::Store(StoreError::StoreFull { .. }) => StatusCode::INSUFFICIENT_STORAGE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let message = match &e {
            RetrievalError::Shape(ShapeError::EmptyShape) => {
                "no shape found in the image (it is blank or has no edges)".to_string()
            }
            _ => e.to_string(),
        };
        Self::new(status, message)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        RetrievalError::Store(e).into()
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))?
}

/// Fields shared by the upload endpoints.
#[derive(Debug, Default, Deserialize)]
struct UploadFields {
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    keywords: Vec<String>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
    #[serde(default)]
    top_k: Option<usize>,
    #[serde(default)]
    threshold: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct JsonUpload {
    image: String,
    #[serde(flatten)]
    fields: UploadFields,
}

struct Upload {
    image: Vec<u8>,
    fields: UploadFields,
}

fn split_keywords(s: &str) -> Vec<String> {
    s.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).map(String::from).collect()
}

fn is_multipart(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"))
}

async fn read_upload(req: Request) -> Result<Upload, ApiError> {
    if is_multipart(req.headers()) {
        let mut mp = Multipart::from_request(req, &()).await.map_err(|e| ApiError::bad_request(e.body_text()))?;
        let mut image = None;
        let mut fields = UploadFields::default();
        while let Some(field) = mp.next_field().await.map_err(|e| ApiError::bad_request(e.body_text()))? {
            let name = field.name().unwrap_or_default().to_string();
            let data = field.bytes().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
            let text = || String::from_utf8_lossy(&data).trim().to_string();
            match name.as_str() {
                "image" => image = Some(data.to_vec()),
                "label" => fields.label = Some(text()).filter(|s| !s.is_empty()),
                "keywords" => fields.keywords = split_keywords(&text()),
                "metadata" => {
                    fields.metadata = serde_json::from_slice(&data)
                        .map_err(|e| ApiError::bad_request(format!("metadata must be a JSON object of strings: {e}")))?
                }
                "top_k" => {
                    fields.top_k = Some(text().parse().map_err(|_| ApiError::bad_request("top_k must be an integer"))?)
                }
                "threshold" => {
                    fields.threshold =
                        Some(text().parse().map_err(|_| ApiError::bad_request("threshold must be a number"))?)
                }
                _ => {}
            }
        }
        let image = image.ok_or_else(|| ApiError::bad_request("missing image part"))?;
        Ok(Upload { image, fields })
    } else {
        let body = Bytes::from_request(req, &()).await.map_err(|e| ApiError::bad_request(e.body_text()))?;
        let parsed: JsonUpload =
            serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))?;
        let image = base64::engine::general_purpose::STANDARD
            .decode(parsed.image.trim())
            .map_err(|e| ApiError::bad_request(format!("image is not valid base64: {e}")))?;
        Ok(Upload { image, fields: parsed.fields })
    }
}

fn parse_category(name: &str) -> Result<Category, ApiError> {
    Category::from_name(name).ok_or_else(|| ApiError::bad_request(format!("unknown category {name:?}")))
}

fn category_json(c: Option<Category>) -> Value {
    match c {
        Some(c) => Value::from(c.name()),
        None => Value::Null,
    }
}

fn image_url(id: ImageId) -> String {
    format!("/images/{id}")
}

#[derive(Serialize)]
struct EnrollResponse {
    image_id: ImageId,
    category: &'static str,
    category_code: u8,
    probs: Probabilities,
}

async fn post_image(State(app): State<AppState>, req: Request) -> Result<Json<EnrollResponse>, ApiError> {
    let upload = read_upload(req).await?;
    let label = upload.fields.label.as_deref().map(parse_category).transpose()?;
    let mut metadata = upload.fields.metadata;
    if let Some(c) = label {
        metadata.insert(LABEL_KEY.to_string(), c.name().to_string());
    }
    let request = EnrollRequest { label, keywords: upload.fields.keywords, metadata };
    let out = blocking(move || Ok(enroll(&app.store, &upload.image, request)?)).await?;
    Ok(Json(EnrollResponse {
        image_id: out.image_id,
        category: out.category.name(),
        category_code: out.category.code(),
        probs: out.probs,
    }))
}

async fn get_image(State(app): State<AppState>, Path(id): Path<ImageId>) -> Result<Response, ApiError> {
    let (format, blob) = {
        let state = app.store.read();
        let r = state.record(id).ok_or(StoreError::NotFound(id))?;
        (r.format, r.blob.clone())
    };
    Ok(([(header::CONTENT_TYPE, format.content_type())], blob).into_response())
}

async fn get_image_meta(State(app): State<AppState>, Path(id): Path<ImageId>) -> Result<Json<Value>, ApiError> {
    let state = app.store.read();
    let r = state.record(id).ok_or(StoreError::NotFound(id))?;
    let neg: BTreeMap<&str, u32> = r.state.neg_counts.iter().map(|(c, n)| (c.name(), *n)).collect();
    Ok(Json(json!({
        "image_id": r.image_id,
        "url": image_url(r.image_id),
        "format": r.format.extension(),
        "content_type": r.format.content_type(),
        "bytes": r.blob.len(),
        "category": category_json(r.category()),
        "category_code": r.category().map(|c| c.code()),
        "enroll_probs": r.enroll_probs,
        "vetoed": r.state.vetoed.iter().map(|c| c.name()).collect::<Vec<_>>(),
        "neg_counts": neg,
        "keywords": r.keywords,
        "metadata": r.metadata,
    })))
}

#[derive(Serialize)]
struct ResultJson {
    image_id: ImageId,
    color_sim: f64,
    texture_sim: f64,
    score: f64,
    rank: usize,
    url: String,
}

#[derive(Serialize)]
struct QueryResponse {
    query_id: QueryId,
    predicted_category: &'static str,
    predicted_code: u8,
    probs: Probabilities,
    comparisons: usize,
    results: Vec<ResultJson>,
}

async fn post_query(State(app): State<AppState>, req: Request) -> Result<Json<QueryResponse>, ApiError> {
    let upload = read_upload(req).await?;
    let defaults = QueryParams::default();
    let params = QueryParams {
        top_k: upload.fields.top_k.unwrap_or(defaults.top_k),
        threshold: upload.fields.threshold.unwrap_or(defaults.threshold),
    };
    if !(0.0..=1.0).contains(&params.threshold) {
        return Err(ApiError::bad_request("threshold must be within [0, 1]"));
    }
    let out = blocking(move || {
        let img = decode_image(&upload.image).map_err(RetrievalError::from)?;
        let opts = QueryOptions { params, ..QueryOptions::default() };
        Ok(query(&app.store, &img, &opts)?)
    })
    .await?;
    let query = out.query.expect("service queries are persisted");
    Ok(Json(QueryResponse {
        query_id: query.query_id,
        predicted_category: out.predicted.name(),
        predicted_code: out.predicted.code(),
        probs: out.probs,
        comparisons: out.comparisons,
        results: out
            .results
            .into_iter()
            .map(|r| ResultJson {
                image_id: r.image_id,
                color_sim: r.color_sim,
                texture_sim: r.texture_sim,
                score: r.score,
                rank: r.rank,
                url: image_url(r.image_id),
            })
            .collect(),
    }))
}

#[derive(Deserialize)]
struct FeedbackBody {
    query_id: QueryId,
    image_id: ImageId,
    polarity: Polarity,
}

async fn post_feedback(State(app): State<AppState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let body: FeedbackBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))?;
    let req = FeedbackRequest { query_id: body.query_id, image_id: body.image_id, polarity: body.polarity };
    let out = blocking(move || Ok(apply_feedback(&app.store, req)?)).await?;
    let mut resp = json!({ "reassigned": out.reassigned });
    if let Some(new) = out.new_category {
        resp["new_category"] = match new {
            Some(c) => Value::from(c.name()),
            None => Value::from("uncategorized"),
        };
    }
    Ok(Json(resp))
}

#[derive(Deserialize)]
struct SearchParams {
    #[serde(default)]
    keywords: String,
}

async fn get_search(State(app): State<AppState>, Query(p): Query<SearchParams>) -> Json<Value> {
    let tokens = split_keywords(&p.keywords);
    let state = app.store.read();
    let ids = if tokens.is_empty() { Vec::new() } else { state.search_keywords(&tokens) };
    let results: Vec<Value> = ids
        .iter()
        .filter_map(|id| state.record(*id))
        .map(|r| json!({ "image_id": r.image_id, "category": category_json(r.category()), "url": image_url(r.image_id) }))
        .collect();
    Json(json!({ "keywords": tokens, "results": results }))
}

async fn get_categories(State(app): State<AppState>) -> Json<Value> {
    let state = app.store.read();
    let rows: Vec<Value> = Category::ALL
        .iter()
        .map(|c| json!({ "code": c.code(), "name": c.name(), "count": state.list_by_category(*c).len() }))
        .collect();
    Json(Value::from(rows))
}

async fn get_health(State(app): State<AppState>) -> Json<Value> {
    let state = app.store.read();
    Json(json!({
        "status": "ok",
        "images": state.len(),
        "trained": state.has_weights(),
        "normalized": state.normalization().is_some(),
    }))
}
