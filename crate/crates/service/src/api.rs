use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::json;
use stpm_core::analytics::Level;
use stpm_core::error::{AnalyticsError, ExplainError, IngestError};
use stpm_core::explain::{explain, DEFAULT_DATASET_NOUN};
use stpm_core::ingest::{
    attribute_candidates, parse_events_csv, parse_regions_geojson, validate_region_coverage,
};
use stpm_core::views::{self, ExplainSelection, MapSelection, ScatterMetric};
use stpm_core::{run_from_bytes, RunConfig, Stage};

use crate::store::{dataset_id, run_id, DatasetRecord, ReadyRun, RunInfo, RunStatus};
use crate::AppState;

const UPLOAD_LIMIT: usize = 1 << 30;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl ToString) -> Self {
        ApiError {
            status,
            code,
            message: message.to_string(),
        }
    }

    fn bad_request(code: &'static str, message: impl ToString) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn internal(message: impl ToString) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_response(
            self.status,
            &json!({"code": self.code, "message": self.message}),
        )
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        ApiError::bad_request(e.code(), e)
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        match e {
            AnalyticsError::UnknownCluster(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "UnknownCluster", e)
            }
            AnalyticsError::UnknownRule(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "UnknownRule", e)
            }
            AnalyticsError::MissingCluster => ApiError::bad_request("MissingCluster", e),
            AnalyticsError::UnknownSlice(_) => ApiError::bad_request("UnknownSlice", e),
        }
    }
}

impl From<ExplainError> for ApiError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::EmptyContext => ApiError::bad_request("EmptyContext", e),
            ExplainError::InvalidRequest(_) => ApiError::bad_request("InvalidRequest", e),
            ExplainError::NotJson(_) => ApiError::new(StatusCode::BAD_GATEWAY, "NotJson", e),
            ExplainError::WrongShape(_) => ApiError::new(StatusCode::BAD_GATEWAY, "WrongShape", e),
            ExplainError::ProviderUnavailable(_) => {
                ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "ProviderUnavailable", e)
            }
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn json_response<T: Serialize + ?Sized>(status: StatusCode, value: &T) -> Response {
    let body = serde_json::to_string(value).expect("payload serializes");
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn ok<T: Serialize + ?Sized>(value: &T) -> ApiResult<Response> {
    Ok(json_response(StatusCode::OK, value))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/datasets", post(create_dataset))
        .route("/api/v1/datasets/{id}", get(get_dataset))
        .route("/api/v1/datasets/{id}/regions", get(get_regions))
        .route("/api/v1/runs", post(create_run))
        .route("/api/v1/runs/{id}", get(get_run))
        .route("/api/v1/runs/{id}/artifact", get(get_artifact))
        .route("/api/v1/runs/{id}/attributes", get(get_attributes))
        .route("/api/v1/runs/{id}/heatmap", get(get_heatmap))
        .route("/api/v1/runs/{id}/map", get(get_map))
        .route("/api/v1/runs/{id}/scatter", get(get_scatter))
        .route("/api/v1/runs/{id}/explain", post(post_explain))
        .layer(DefaultBodyLimit::max(UPLOAD_LIMIT))
        .with_state(state)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct DatasetSummary<'a> {
    dataset_id: &'a str,
    descriptor: &'a stpm_core::ingest::DatasetDescriptor,
    report: &'a stpm_core::ingest::IngestReport,
}

impl<'a> From<&'a DatasetRecord> for DatasetSummary<'a> {
    fn from(r: &'a DatasetRecord) -> Self {
        DatasetSummary {
            dataset_id: &r.dataset_id,
            descriptor: &r.descriptor,
            report: &r.report,
        }
    }
}

fn ingest_upload(
    events: Vec<u8>,
    regions: Option<Vec<u8>>,
    id_property: String,
) -> ApiResult<DatasetRecord> {
    let id = dataset_id(&events, regions.as_deref(), &id_property);
    let (parsed, mut descriptor, mut report) = parse_events_csv(&events, &[])?;
    // Nothing is selected yet; every non-reserved column is offered.
    descriptor.attribute_columns = attribute_candidates(&descriptor.columns);
    let regions_geojson = match regions {
        Some(bytes) => {
            let regions = parse_regions_geojson(&bytes, &id_property)?;
            report.unmatched_places = validate_region_coverage(&parsed, &regions);
            Some(
                String::from_utf8(bytes)
                    .map_err(|e| IngestError::MalformedGeoJson(e.to_string()))?,
            )
        }
        None => None,
    };
    let events_csv =
        String::from_utf8(events).map_err(|e| IngestError::MalformedCsv(e.to_string()))?;
    Ok(DatasetRecord {
        dataset_id: id,
        region_id_property: id_property,
        descriptor,
        report,
        events_csv,
        regions_geojson,
    })
}

async fn create_dataset(
    State(app): State<Arc<AppState>>,
    mut form: Multipart,
) -> ApiResult<Response> {
    let (mut events, mut regions, mut id_property) = (None, None, None);
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request("MalformedUpload", e))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request("MalformedUpload", e))?;
        match name.as_str() {
            "events" => events = Some(bytes.to_vec()),
            "regions" => regions = Some(bytes.to_vec()),
            "regionIdProperty" => {
                id_property = Some(String::from_utf8_lossy(&bytes).trim().to_string())
            }
            _ => {}
        }
    }
    let events = events.ok_or_else(|| {
        ApiError::bad_request("MissingField", "multipart field \"events\" is required")
    })?;
    let id_property = id_property
        .filter(|p| !p.is_empty())
        .unwrap_or_else(|| "name".into());
    let rec = tokio::task::spawn_blocking(move || ingest_upload(events, regions, id_property))
        .await
        .map_err(ApiError::internal)??;
    let rec = app.store.put_dataset(rec).map_err(ApiError::internal)?;
    Ok(json_response(
        StatusCode::CREATED,
        &DatasetSummary::from(rec.as_ref()),
    ))
}

fn unknown_dataset(id: &str) -> ApiError {
    ApiError::new(
        StatusCode::NOT_FOUND,
        "UnknownDataset",
        format!("no dataset {id}"),
    )
}

async fn get_dataset(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let rec = app.store.dataset(&id).ok_or_else(|| unknown_dataset(&id))?;
    ok(&DatasetSummary::from(rec.as_ref()))
}

async fn get_regions(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let rec = app.store.dataset(&id).ok_or_else(|| unknown_dataset(&id))?;
    let body = rec
        .regions_geojson
        .clone()
        .unwrap_or_else(|| r#"{"type":"FeatureCollection","features":[]}"#.into());
    Ok(([(header::CONTENT_TYPE, "application/geo+json")], body).into_response())
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct CreateRun {
    dataset_id: String,
    config: serde_json::Value,
}

async fn create_run(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: CreateRun =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("InvalidRequest", e))?;
    let dataset = app
        .store
        .dataset(&req.dataset_id)
        .ok_or_else(|| unknown_dataset(&req.dataset_id))?;
    let config: RunConfig = serde_json::from_value(req.config)
        .map_err(|e| ApiError::bad_request("InvalidConfig", e))?;
    config
        .validate()
        .map_err(|e| ApiError::bad_request("InvalidConfig", e))?;
    if let Some(c) = config
        .attribute_columns
        .iter()
        .find(|c| !dataset.descriptor.attribute_columns.contains(c))
    {
        return Err(ApiError::bad_request(
            "InvalidConfig",
            format!("dataset has no attribute column {c:?}"),
        ));
    }

    let id = run_id(&dataset.dataset_id, &config);
    let info = RunInfo {
        run_id: id.clone(),
        dataset_id: dataset.dataset_id.clone(),
        status: RunStatus::Pending,
        config,
        error: None,
    };
    let started = app.store.begin_run(info.clone());
    if started {
        let app = app.clone();
        let run = id.clone();
        tokio::task::spawn_blocking(move || {
            let mut progress = |stage| {
                let status = match stage {
                    Stage::Mining => RunStatus::Mining,
                    Stage::Clustering => RunStatus::Clustering,
                };
                app.store.set_status(&run, status);
            };
            let regions = dataset.regions_geojson.as_deref().map(str::as_bytes);
            let outcome = run_from_bytes(
                dataset.events_csv.as_bytes(),
                regions,
                &info.config,
                &mut progress,
            );
            app.store
                .finish_run(&run, outcome.map_err(|e| e.to_string()));
        });
    }
    let current = app
        .store
        .run(&id)
        .map(|e| e.info)
        .ok_or_else(|| ApiError::internal("run vanished"))?;
    Ok(json_response(
        if started {
            StatusCode::ACCEPTED
        } else {
            StatusCode::OK
        },
        &current,
    ))
}

fn unknown_run(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "UnknownRun", format!("no run {id}"))
}

async fn get_run(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let entry = app.store.run(&id).ok_or_else(|| unknown_run(&id))?;
    ok(&entry.info)
}

fn ready(app: &AppState, id: &str) -> ApiResult<Arc<ReadyRun>> {
    let entry = app.store.run(id).ok_or_else(|| unknown_run(id))?;
    entry.ready.ok_or_else(|| {
        let status = serde_json::to_value(entry.info.status).unwrap_or_default();
        let detail = entry
            .info
            .error
            .map(|e| format!(": {e}"))
            .unwrap_or_default();
        ApiError::new(
            StatusCode::CONFLICT,
            "NotReady",
            format!("run is {}{detail}", status.as_str().unwrap_or("?")),
        )
    })
}

async fn get_artifact(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let run = ready(&app, &id)?;
    Ok((
        [(header::CONTENT_TYPE, "application/json")],
        run.export.clone(),
    )
        .into_response())
}

type Params = Query<HashMap<String, String>>;

fn invalid_query(message: impl ToString) -> ApiError {
    ApiError::bad_request("InvalidQuery", message)
}

fn level_param(q: &HashMap<String, String>) -> ApiResult<Level> {
    q.get("level")
        .map_or(Ok(Level::Cluster), |s| s.parse().map_err(invalid_query))
}

fn cluster_param(q: &HashMap<String, String>) -> ApiResult<Option<usize>> {
    q.get("clusterId")
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| invalid_query(format!("clusterId {s:?} is not a cluster id")))
        })
        .transpose()
}

async fn get_attributes(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Params,
) -> ApiResult<Response> {
    let run = ready(&app, &id)?;
    ok(&views::attributes(
        &run.artifact,
        level_param(&q)?,
        cluster_param(&q)?,
    )?)
}

async fn get_heatmap(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Params,
) -> ApiResult<Response> {
    let run = ready(&app, &id)?;
    ok(&views::heatmap(
        &run.artifact,
        level_param(&q)?,
        cluster_param(&q)?,
    )?)
}

async fn get_map(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Params,
) -> ApiResult<Response> {
    let run = ready(&app, &id)?;
    let selection = MapSelection {
        cluster_id: cluster_param(&q)?,
        rule_key: q.get("ruleKey").cloned(),
        slices: q.get("slices").map(|s| {
            s.split(',')
                .filter(|p| !p.is_empty())
                .map(str::to_string)
                .collect()
        }),
    };
    ok(&views::map(&run.artifact, &selection)?)
}

async fn get_scatter(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Params,
) -> ApiResult<Response> {
    let run = ready(&app, &id)?;
    let metric = |name: &str, default: ScatterMetric| -> ApiResult<ScatterMetric> {
        q.get(name)
            .map_or(Ok(default), |s| s.parse().map_err(invalid_query))
    };
    ok(&views::scatter(
        &run.artifact,
        metric("x", ScatterMetric::RuleCount)?,
        metric("y", ScatterMetric::MeanLift)?,
    ))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ExplainBody {
    rule_key: String,
    #[serde(flatten)]
    selection: ExplainSelection,
    dataset_noun: Option<String>,
}

/// Releases the per-run explanation slot when dropped.
struct InFlight<'a> {
    app: &'a AppState,
    run: String,
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.app.explaining.lock().unwrap().remove(&self.run);
    }
}

async fn post_explain(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let run = ready(&app, &id)?;
    let body: ExplainBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("InvalidRequest", e))?;
    let noun = body.dataset_noun.as_deref().unwrap_or(DEFAULT_DATASET_NOUN);
    let req = views::explain_request(&run.artifact, &body.rule_key, &body.selection, noun)?;
    req.validate()?;

    if !app.explaining.lock().unwrap().insert(id.clone()) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "ExplainInFlight",
            "an explanation for this run is already running",
        ));
    }
    let _slot = InFlight { app: &app, run: id };
    let provider = app.provider.clone();
    let explanation = tokio::task::spawn_blocking(move || explain(&req, provider.as_ref()))
        .await
        .map_err(ApiError::internal)??;
    ok(&explanation)
}
