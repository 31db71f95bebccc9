//! HTTP API over the calibration workflow.
//!
//! Every handler is a thin shell over `calib_core::workflow` and the shared
//! [`ProjectStore`]: it parses the body, applies the call to a copy of the
//! project and commits it under the caller's version token. Bodies are
//! written in canonical form (sorted keys, nine significant digits), so
//! identical request sequences produce identical bytes.

pub mod error;
pub mod units;

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post, put};
use axum::Router;
use calib_core::annotation::AnnotationSet;
use calib_core::canonical;
use calib_core::project::{from_document, to_document, CameraRecord, ImageRef, Project, SCHEMA_VERSION};
use calib_core::stage2::{PlacementTransform, Stage2Error, VirtualMarker};
use calib_core::store::ProjectStore;
use calib_core::workflow::{self, camera_mut, WorkflowError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::units::{Units, UnitsQuery};

/// Decides who is calling. Returning an error rejects the request with
/// 401; `Ok(None)` admits an anonymous caller.
pub trait AuthHook: Send + Sync {
    fn authenticate(&self, headers: &HeaderMap) -> Result<Option<String>, String>;
}

/// Admits every request.
pub struct AllowAll;

impl AuthHook for AllowAll {
    fn authenticate(&self, _: &HeaderMap) -> Result<Option<String>, String> {
        Ok(None)
    }
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<ProjectStore>,
    pub auth: Arc<dyn AuthHook>,
}

impl AppState {
    pub fn new(store: ProjectStore) -> Self {
        Self { store: Arc::new(store), auth: Arc::new(AllowAll) }
    }
}

/// Caller identity attached to each request by the auth hook.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Principal(pub Option<String>);

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/projects", post(create_project))
        .route("/projects/{id}", get(get_project).put(put_project))
        .route("/projects/{id}/cameras", post(add_camera))
        .route("/projects/{id}/cameras/{cid}/annotation", post(submit_annotation))
        .route("/projects/{id}/cameras/{cid}/placement", put(place_camera))
        .route("/projects/{id}/markers", post(upsert_marker))
        .route("/projects/{id}/markers/overlays", get(marker_overlays))
        .route("/projects/{id}/markers/{mid}", delete(delete_marker))
        .route("/blobs", put(put_blob))
        .route("/blobs/{sha}", get(get_blob))
        .layer(middleware::from_fn_with_state(state.clone(), authenticate))
        .with_state(state)
}

async fn authenticate(State(state): State<AppState>, mut req: Request, next: Next) -> Response {
    match state.auth.authenticate(req.headers()) {
        Ok(who) => {
            req.extensions_mut().insert(Principal(who));
            next.run(req).await
        }
        Err(reason) => ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", reason).into_response(),
    }
}

pub(crate) fn json_response(status: StatusCode, body: &Value, version: Option<u64>) -> Response {
    let mut resp = (status, canonical::to_string(body)).into_response();
    let headers = resp.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    if let Some(v) = version {
        headers.insert(header::ETAG, HeaderValue::from_str(&format!("\"{v}\"")).expect("digits are a valid header"));
    }
    resp
}

fn respond(status: StatusCode, body: impl Serialize, units: Units, version: Option<u64>) -> Response {
    let mut v = serde_json::to_value(body).expect("response types serialize");
    units::outgoing(&mut v, units);
    json_response(status, &v, version)
}

fn parse_json(bytes: &Bytes) -> Result<Value, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", e.to_string()))
}

/// Parses a request body, converting angles from degrees first if asked.
fn parse_body<T: DeserializeOwned>(bytes: &Bytes, units: Units) -> Result<T, ApiError> {
    let mut v = parse_json(bytes)?;
    units::incoming(&mut v, units);
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", format!("{path}: {}", e.inner())).with_details(json!({ "path": path }))
    })
}

/// The version named by `If-Match`. Mutations must carry one.
fn expected_version(headers: &HeaderMap) -> Result<u64, ApiError> {
    let raw = headers
        .get(header::IF_MATCH)
        .ok_or_else(|| ApiError::new(StatusCode::PRECONDITION_REQUIRED, "version_required", "If-Match header with the project version is required"))?;
    raw.to_str()
        .ok()
        .map(|s| s.trim().trim_start_matches("W/").trim_matches('"'))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "invalid_version", "If-Match must hold a project version number"))
}

fn document_value(p: &Project) -> Result<Value, ApiError> {
    let text = to_document(p).map_err(ApiError::document)?;
    Ok(serde_json::from_str(&text).expect("documents are valid JSON"))
}

/// Reads a full project document; `schema_version` defaults to current.
fn parse_document(bytes: &Bytes, units: Units) -> Result<Project, ApiError> {
    let mut v = parse_json(bytes)?;
    if let Some(obj) = v.as_object_mut() {
        obj.entry("schema_version").or_insert(SCHEMA_VERSION.into());
    }
    units::incoming(&mut v, units);
    from_document(&v.to_string()).map_err(ApiError::document)
}

/// Runs a store mutation off the async workers; stage-1 solves are
/// CPU-bound.
async fn mutate<R: Send + 'static>(
    state: &AppState,
    id: String,
    expected: u64,
    f: impl FnOnce(&ProjectStore, &mut Project) -> Result<R, ApiError> + Send + 'static,
) -> Result<(R, u64), ApiError> {
    let store = state.store.clone();
    tokio::task::spawn_blocking(move || store.update(&id, expected, |p| f(&store, p)).map_err(ApiError::from))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

fn project_body(id: &str, version: u64, p: &Project) -> Result<Value, ApiError> {
    Ok(json!({ "id": id, "version": version, "project": document_value(p)? }))
}

async fn create_project(State(state): State<AppState>, Query(q): Query<UnitsQuery>, body: Bytes) -> Result<Response, ApiError> {
    let units = q.parse()?;
    let project = parse_document(&body, units)?;
    let (id, version) = state.store.create(project.clone()).map_err(ApiError::document)?;
    Ok(respond(StatusCode::CREATED, project_body(&id, version, &project)?, units, Some(version)))
}

async fn get_project(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<UnitsQuery>) -> Result<Response, ApiError> {
    let units = q.parse()?;
    let (project, version) = state.store.get(&id).ok_or_else(|| ApiError::not_found("project", &id))?;
    Ok(respond(StatusCode::OK, project_body(&id, version, &project)?, units, Some(version)))
}

async fn put_project(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<UnitsQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let units = q.parse()?;
    let expected = expected_version(&headers)?;
    let project = parse_document(&body, units)?;
    let stored = project.clone();
    let ((), version) = mutate(&state, id.clone(), expected, move |_, p| {
        *p = stored;
        Ok(())
    })
    .await?;
    Ok(respond(StatusCode::OK, project_body(&id, version, &project)?, units, Some(version)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewCamera {
    id: String,
    image: ImageRef,
}

async fn add_camera(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<UnitsQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let units = q.parse()?;
    let expected = expected_version(&headers)?;
    let cam: NewCamera = parse_body(&body, units)?;
    let record = CameraRecord::new(cam.id, cam.image);
    let added = record.clone();
    let ((), version) = mutate(&state, id, expected, move |_, p| {
        if p.camera(&added.id).is_some() {
            return Err(ApiError::new(StatusCode::CONFLICT, "duplicate_camera", format!("camera {:?} already exists", added.id))
                .with_details(json!({ "camera": added.id })));
        }
        p.cameras.push(added);
        Ok(())
    })
    .await?;
    Ok(respond(StatusCode::CREATED, json!({ "version": version, "camera": record }), units, Some(version)))
}

async fn submit_annotation(
    State(state): State<AppState>,
    Path((id, cid)): Path<(String, String)>,
    Query(q): Query<UnitsQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let units = q.parse()?;
    let expected = expected_version(&headers)?;
    let annotation: AnnotationSet = parse_body(&body, units)?;
    let camera = cid.clone();
    let (outcome, version) = mutate(&state, id, expected, move |store, p| {
        let record = camera_mut(p, &camera)?;
        if !store.has_blob(&record.image.blob) {
            return Err(ApiError::new(StatusCode::CONFLICT, "missing_image", format!("image {} has not been uploaded", record.image.blob))
                .with_details(json!({ "camera": camera, "blob": record.image.blob })));
        }
        Ok(workflow::submit_annotation(record, annotation)?)
    })
    .await?;
    let mut body = serde_json::to_value(&outcome).expect("outcome serializes");
    body["version"] = version.into();
    body["camera"] = cid.into();
    Ok(respond(StatusCode::OK, body, units, Some(version)))
}

async fn place_camera(
    State(state): State<AppState>,
    Path((id, cid)): Path<(String, String)>,
    Query(q): Query<UnitsQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let units = q.parse()?;
    let expected = expected_version(&headers)?;
    let t: PlacementTransform = parse_body(&body, units)?;
    let camera = cid.clone();
    let ((outcome, markers), version) = mutate(&state, id, expected, move |_, p| {
        let outcome = workflow::place_camera(camera_mut(p, &camera)?, &t)?;
        let markers = workflow::camera_marker_overlays(p, &outcome.model);
        Ok((outcome, markers))
    })
    .await?;
    let mut body = serde_json::to_value(&outcome).expect("outcome serializes");
    body["version"] = version.into();
    body["camera"] = cid.into();
    body["markers"] = serde_json::to_value(markers).expect("overlays serialize");
    Ok(respond(StatusCode::OK, body, units, Some(version)))
}

/// Overlays for every marker on every calibrated camera; empty when no
/// camera is calibrated yet.
fn overlays_or_empty(p: &Project) -> Result<Value, ApiError> {
    match workflow::marker_overlays(p) {
        Ok(o) => Ok(serde_json::to_value(o).expect("overlays serialize")),
        Err(WorkflowError::NoCalibratedCameras) => Ok(json!({})),
        Err(e) => Err(e.into()),
    }
}

async fn upsert_marker(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<UnitsQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let units = q.parse()?;
    let expected = expected_version(&headers)?;
    let marker: VirtualMarker = parse_body(&body, units)?;
    marker.validate().map_err(|e| ApiError::from(WorkflowError::from(e)))?;
    let stored = marker.clone();
    let (overlays, version) = mutate(&state, id, expected, move |_, p| {
        match p.markers.iter_mut().find(|m| m.id == stored.id) {
            Some(m) => *m = stored,
            None => p.markers.push(stored),
        }
        overlays_or_empty(p)
    })
    .await?;
    Ok(respond(StatusCode::OK, json!({ "version": version, "marker": marker, "overlays": overlays }), units, Some(version)))
}

async fn delete_marker(
    State(state): State<AppState>,
    Path((id, mid)): Path<(String, String)>,
    Query(q): Query<UnitsQuery>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let units = q.parse()?;
    let expected = expected_version(&headers)?;
    let (overlays, version) = mutate(&state, id, expected, move |_, p| {
        let before = p.markers.len();
        p.markers.retain(|m| m.id != mid);
        if p.markers.len() == before {
            return Err(ApiError::not_found("marker", &mid));
        }
        overlays_or_empty(p)
    })
    .await?;
    Ok(respond(StatusCode::OK, json!({ "version": version, "overlays": overlays }), units, Some(version)))
}

async fn marker_overlays(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<UnitsQuery>) -> Result<Response, ApiError> {
    let units = q.parse()?;
    let (project, version) = state.store.get(&id).ok_or_else(|| ApiError::not_found("project", &id))?;
    let overlays = tokio::task::spawn_blocking(move || workflow::marker_overlays(&project))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(respond(StatusCode::OK, json!({ "version": version, "overlays": overlays }), units, Some(version)))
}

async fn put_blob(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let known = state.store.has_blob(&calib_core::store::blob_id(&body));
    let blob = state.store.put_blob(body.to_vec()).map_err(ApiError::document)?;
    let status = if known { StatusCode::OK } else { StatusCode::CREATED };
    Ok(json_response(status, &json!({ "blob": blob }), None))
}

async fn get_blob(State(state): State<AppState>, Path(sha): Path<String>) -> Result<Response, ApiError> {
    let bytes = state.store.get_blob(&sha).ok_or_else(|| ApiError::not_found("blob", &sha))?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

impl From<Stage2Error> for ApiError {
    fn from(e: Stage2Error) -> Self {
        WorkflowError::from(e).into()
    }
}
