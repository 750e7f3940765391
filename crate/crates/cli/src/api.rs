//! Read-only HTTP JSON API under `/api/v1/`.
//!
//! Every handler is a pure read of the immutable [`AppState`]; identical
//! requests produce byte-identical bodies.

use std::collections::HashMap;
use std::str::FromStr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use deephys_core::metrics::{shift_report_with, ShiftReport};
use deephys_core::report::{DatasetRatio, SessionDescriptor};
use deephys_core::session::CompanionNeuron;
use deephys_core::stats::{DensityPoint, DEFAULT_DENSITY_POINTS};
use deephys_core::{json, AnalysisError, AnalysisSession, DatasetId, NeuronScore};
use serde::Serialize;
use serde_json::{json, Value};

pub struct AppState {
    pub session: AnalysisSession,
    pub top_k: usize,
    reports: Vec<Result<ShiftReport, AnalysisError>>,
}

impl AppState {
    /// Precomputes the shift report of every OOD dataset.
    pub fn new(session: AnalysisSession, top_k: usize) -> Self {
        let reports = session
            .ood_ids()
            .map(|id| shift_report_with(&session, id, DEFAULT_DENSITY_POINTS))
            .collect();
        AppState {
            session,
            top_k,
            reports,
        }
    }

    fn report(&self, ood: DatasetId) -> Result<&ShiftReport, ApiError> {
        match ood {
            DatasetId::Ood(i) if i < self.reports.len() => {
                self.reports[i].as_ref().map_err(|e| ApiError::from(e.clone()))
            }
            other => Err(ApiError::not_found(format!("no OOD dataset {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    DeadNeuron,
    IncompatibleBundles,
    InsufficientData,
}

impl ErrorCode {
    fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::DeadNeuron | ErrorCode::InsufficientData => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::IncompatibleBundles => StatusCode::CONFLICT,
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            code: ErrorCode::BadRequest,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError {
            code: ErrorCode::NotFound,
            message: message.into(),
        }
    }
}

impl From<AnalysisError> for ApiError {
    fn from(e: AnalysisError) -> Self {
        let code = match &e {
            AnalysisError::DeadNeuron(_) => ErrorCode::DeadNeuron,
            AnalysisError::OutOfBounds { .. } | AnalysisError::UnknownDataset(_) => ErrorCode::NotFound,
            AnalysisError::EmptySelection
            | AnalysisError::EmptyCategory { .. }
            | AnalysisError::InsufficientData { .. } => ErrorCode::InsufficientData,
            AnalysisError::Incompatible(_) => ErrorCode::IncompatibleBundles,
            AnalysisError::InvalidArgument(_) | AnalysisError::UndefinedCorrelation => ErrorCode::BadRequest,
        };
        ApiError {
            code,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.code.status(), Json(body)).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn ok<T: Serialize>(value: &T) -> ApiResult {
    Ok(Json(json::to_value(value)))
}

struct Params(HashMap<String, String>);

impl Params {
    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, ApiError> {
        self.0
            .get(key)
            .map(|raw| {
                raw.parse()
                    .map_err(|_| ApiError::bad_request(format!("invalid value {raw:?} for `{key}`")))
            })
            .transpose()
    }

    fn dataset(&self, key: &str, default: DatasetId) -> Result<DatasetId, ApiError> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn count(&self, key: &str, default: usize) -> Result<usize, ApiError> {
        let n = self.parse(key)?.unwrap_or(default);
        if n == 0 {
            return Err(ApiError::bad_request(format!("`{key}` must be at least 1")));
        }
        Ok(n)
    }
}

fn path_id(raw: &str, what: &str) -> Result<usize, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::bad_request(format!("invalid {what} id {raw:?}")))
}

fn category_index(session: &AnalysisSession, raw: &str) -> Result<usize, ApiError> {
    if let Ok(c) = raw.parse::<usize>() {
        session.check_category(c)?;
        return Ok(c);
    }
    session
        .class_names()
        .iter()
        .position(|n| n == raw)
        .ok_or_else(|| ApiError::not_found(format!("unknown category {raw:?}")))
}

async fn session_info(State(state): State<Arc<AppState>>) -> ApiResult {
    #[derive(Serialize)]
    struct Body {
        api_version: &'static str,
        top_k: usize,
        session: SessionDescriptor,
    }
    ok(&Body {
        api_version: "v1",
        top_k: state.top_k,
        session: SessionDescriptor::of(&state.session),
    })
}

async fn neurons(State(state): State<Arc<AppState>>) -> ApiResult {
    #[derive(Serialize)]
    struct Neuron {
        neuron_id: usize,
        dead: bool,
        ind_max: f32,
        activation_ratios: Vec<DatasetRatio>,
    }
    let s = &state.session;
    let list = (0..s.neuron_count())
        .map(|j| {
            let activation_ratios = if s.is_dead(j) {
                Vec::new()
            } else {
                s.ood_ids()
                    .map(|id| Ok(DatasetRatio { dataset: id, ratio: s.activation_ratio(id, j)? }))
                    .collect::<Result<_, AnalysisError>>()?
            };
            Ok(Neuron {
                neuron_id: j,
                dead: s.is_dead(j),
                ind_max: s.ind_max()[j],
                activation_ratios,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    ok(&json!({ "neuron_count": s.neuron_count(), "neurons": json::to_value(&list) }))
}

async fn neuron_top(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    let q = Params(q);
    let neuron = path_id(&id, "neuron")?;
    let k = q.count("k", state.top_k)?;
    let mut view = state.session.neuron_view(neuron, k)?;
    if let Some(dataset) = q.parse::<DatasetId>("dataset")? {
        state.session.dataset(dataset)?;
        view.datasets.retain(|d| d.dataset == dataset);
    }
    ok(&view)
}

async fn image_neurons(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    let q = Params(q);
    let image = path_id(&id, "image")?;
    let dataset = q.dataset("dataset", DatasetId::Ind)?;
    let limit = q.count("limit", state.top_k)?;
    let k = q.count("k", state.top_k)?;
    let companion = q.dataset("companion", state.session.default_companion(dataset))?;
    ok(&state
        .session
        .image_top_neurons_with(dataset, image, limit, companion, k)?)
}

async fn image_thumbnail(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let q = Params(q);
    let image = path_id(&id, "image")?;
    let dataset = q.dataset("dataset", DatasetId::Ind)?;
    let bundle = state.session.dataset(dataset)?;
    if image >= bundle.image_count() {
        return Err(ApiError::not_found(format!("image {image} out of range in {dataset}")));
    }
    let png = bundle
        .thumbnail(image)
        .ok_or_else(|| ApiError::not_found(format!("no thumbnail for image {image} in {dataset}")))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png.to_vec()).into_response())
}

async fn category_neurons(
    State(state): State<Arc<AppState>>,
    Path(raw): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    #[derive(Serialize)]
    struct Body {
        dataset: DatasetId,
        category: usize,
        category_name: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        pair_category: Option<usize>,
        image_ids: Vec<usize>,
        companion_dataset: DatasetId,
        neurons: Vec<CompanionNeuron>,
    }
    let s = &state.session;
    let q = Params(q);
    let category = category_index(s, &raw)?;
    let dataset = q.dataset("dataset", DatasetId::Ind)?;
    let limit = q.count("limit", state.top_k)?;
    let k = q.count("k", state.top_k)?;
    let companion = q.dataset("companion", s.default_companion(dataset))?;
    s.dataset(companion)?;
    let pair = q.0.get("b").map(|b| category_index(s, b)).transpose()?;

    let image_ids = match pair {
        Some(b) => s.confusion_set(dataset, category, b)?.image_ids,
        None => s.images_of_category(dataset, category)?,
    };
    let neurons = if image_ids.is_empty() && pair.is_some() {
        Vec::new()
    } else {
        s.category_top_neurons(dataset, &image_ids, limit)?
            .into_iter()
            .map(|n| {
                Ok(CompanionNeuron {
                    neuron_id: n.neuron_id,
                    score: n.score,
                    companion: s.top_k_images(companion, n.neuron_id, k)?,
                })
            })
            .collect::<Result<_, AnalysisError>>()?
    };
    ok(&Body {
        dataset,
        category,
        category_name: s.class_names()[category].clone(),
        pair_category: pair,
        image_ids,
        companion_dataset: companion,
        neurons,
    })
}

async fn confusions(State(state): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let s = &state.session;
    let q = Params(q);
    let a = q.0.get("a").ok_or_else(|| ApiError::bad_request("missing `a`"))?;
    let b = q.0.get("b").ok_or_else(|| ApiError::bad_request("missing `b`"))?;
    let (a, b) = (category_index(s, a)?, category_index(s, b)?);
    let dataset = q.dataset("dataset", DatasetId::Ind)?;
    ok(&s.confusion_set(dataset, a, b)?)
}

#[derive(Serialize)]
struct MetricBody<'a> {
    ood: DatasetId,
    ood_name: &'a str,
    metric: &'static str,
    count: usize,
    scores: &'a [NeuronScore],
    density: Option<&'a [DensityPoint]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    density_error: Option<Value>,
    excluded_neurons: &'a [deephys_core::ExcludedNeuron],
}

fn metric_response(
    report: &ShiftReport,
    metric: &'static str,
    scores: &[NeuronScore],
    density: Option<&[DensityPoint]>,
) -> ApiResult {
    let density_error = density.is_none().then(|| {
        json!({
            "code": ErrorCode::InsufficientData,
            "message": format!("a density curve needs at least 2 scores, have {}", scores.len()),
        })
    });
    ok(&MetricBody {
        ood: report.ood,
        ood_name: &report.ood_name,
        metric,
        count: scores.len(),
        scores,
        density,
        density_error,
        excluded_neurons: &report.excluded_neurons,
    })
}

async fn metrics_novelty(State(state): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let ood = Params(q).dataset("ood", DatasetId::Ood(0))?;
    let r = state.report(ood)?;
    metric_response(r, "novelty", &r.novelty, r.novelty_density.as_deref())
}

async fn metrics_spurious(State(state): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let ood = Params(q).dataset("ood", DatasetId::Ood(0))?;
    let r = state.report(ood)?;
    metric_response(r, "spurious", &r.spurious, r.spurious_density.as_deref())
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/session", get(session_info))
        .route("/api/v1/neurons", get(neurons))
        .route("/api/v1/neurons/{id}/top", get(neuron_top))
        .route("/api/v1/images/{id}/neurons", get(image_neurons))
        .route("/api/v1/images/{id}/thumbnail", get(image_thumbnail))
        .route("/api/v1/categories/{c}/neurons", get(category_neurons))
        .route("/api/v1/confusions", get(confusions))
        .route("/api/v1/metrics/novelty", get(metrics_novelty))
        .route("/api/v1/metrics/spurious", get(metrics_spurious))
        .fallback(fallback)
        .with_state(state)
}
