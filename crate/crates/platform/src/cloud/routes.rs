//! HTTP and WebSocket handlers.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tracing::debug;

use radiosense_core::cqi::{FeatureRecipe, TaskType};
use radiosense_core::inference::{infer, FeatureBatch, GatewayFeatures, LatentEstimate};

use crate::cloud::registry::{JournalOp, StartOutcome, TaskEntry};
use crate::cloud::{catalog, SharedState};
use crate::wire::{
    ActiveTasks, ErrorBody, FeatureMessage, LatentEstimateWire, ModelBundle, PushAck,
    StartTaskRequest, TaskDescriptor, TaskProfile,
};

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/api/post_CQIfeatures", post(post_features))
        .route("/api/{task_type}/get_LatentValues", get(get_latent_values))
        .route("/api/{task_type}/start_task", post(start_task))
        .route("/api/{task_type}/stop_task", post(stop_task))
        .route("/api/{task_type}/CQI_feature", get(cqi_feature))
        .route("/api/{task_type}/model", get(get_model))
        .route("/api/{task_type}/subscribe", get(subscribe))
        .route("/api/catalog", get(catalog::catalog))
        .route("/api/catalog/schema", get(catalog::catalog_schema))
        .with_state(state)
}

fn err(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: message.into() })).into_response()
}

fn parse_task_type(raw: &str) -> Option<TaskType> {
    match raw {
        "detection" => Some(TaskType::Detection),
        "localization" => Some(TaskType::Localization),
        "activity" => Some(TaskType::Activity),
        _ => None,
    }
}

pub(crate) fn presented_token<'a>(
    headers: &'a HeaderMap,
    params: &'a BTreeMap<String, String>,
) -> Option<&'a str> {
    headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .or_else(|| params.get("token").map(String::as_str))
}

fn now_us() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_micros() as u64)
        .unwrap_or(0)
}

/// Boundary validation of an inferred estimate; stored estimates are
/// checked, not trusted.
fn estimate_invariants_ok(estimate: &LatentEstimate) -> bool {
    let sum: f64 = estimate.posteriors.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return false;
    }
    if estimate.posteriors.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return false;
    }
    let mut argmax = 0;
    for (i, &p) in estimate.posteriors.iter().enumerate() {
        if p > estimate.posteriors[argmax] {
            argmax = i;
        }
    }
    argmax == estimate.estimate
}

/// Mixture components for one gateway message: one `G^k` per label,
/// summed over the message's devices.
fn message_components(entry: &TaskEntry, msg: &FeatureMessage) -> Result<Vec<f64>, Response> {
    let task = entry.task();
    let model = entry
        .model
        .as_ref()
        .ok_or_else(|| err(StatusCode::CONFLICT, "task has no model"))?;
    let compute = || -> Result<Vec<f64>, radiosense_core::CoreError> {
        let mut out = Vec::with_capacity(task.latent_labels.len());
        for label in &task.latent_labels {
            let mut acc = 0.0;
            for device in &msg.devices {
                acc += match task.feature_recipe {
                    FeatureRecipe::Pca => radiosense_core::inference::gaussian_component(
                        model,
                        &device.features,
                        label,
                    )?,
                    FeatureRecipe::PcaPeakPhase => {
                        let clf = entry.knn.as_ref().ok_or_else(|| {
                            radiosense_core::CoreError::UnknownLabel("knn model missing".into())
                        })?;
                        let mut v = device.features.clone();
                        if let Some(extra) = &device.extra {
                            v.extend(extra.to_vec());
                        }
                        clf.knn_component(&v, label)?
                    }
                };
            }
            out.push(acc);
        }
        Ok(out)
    };
    compute().map_err(|e| err(StatusCode::CONFLICT, e.to_string()))
}

async fn post_features(
    State(state): State<SharedState>,
    body: Json<serde_json::Value>,
) -> Response {
    let deserializer = body.0;
    let msg: FeatureMessage = match serde_path_to_error::deserialize(&deserializer) {
        Ok(msg) => msg,
        Err(e) => {
            return err(
                StatusCode::BAD_REQUEST,
                format!("{}: {}", e.path(), e.inner()),
            )
        }
    };
    let ingested_at_us = now_us();
    let mut registry = state.registry.write().expect("registry lock");
    let Some(entry) = registry.get_mut(&msg.task_id) else {
        return err(StatusCode::NOT_FOUND, format!("unknown task {}", msg.task_id));
    };
    if !entry.gw_ids.contains(&msg.gw_id) {
        return err(
            StatusCode::FORBIDDEN,
            format!("gateway {} not assigned to {}", msg.gw_id, msg.task_id),
        );
    }
    let Some(expected_features) = entry.model.as_ref().map(|m| m.components) else {
        return err(StatusCode::CONFLICT, "task has no model");
    };
    if let Err(field) = msg.validate(expected_features) {
        return err(StatusCode::BAD_REQUEST, field);
    }
    if let Some(&last) = entry.last_window_start.get(&msg.gw_id) {
        if msg.window.start_ms <= last {
            return err(
                StatusCode::CONFLICT,
                format!("stale window {} <= {last}", msg.window.start_ms),
            );
        }
    }
    entry.last_window_start.insert(msg.gw_id.clone(), msg.window.start_ms);
    entry.last_msgs.insert(msg.gw_id.clone(), msg.clone());

    // combine the freshest message of every assigned gateway within
    // the staleness horizon
    let task = entry.task().clone();
    let horizon = i64::from(state.cfg.staleness_factor) * i64::from(task.window_ms);
    let mut gateways = Vec::new();
    let mut components: Vec<Vec<f64>> = vec![Vec::new(); task.latent_labels.len()];
    let fresh: Vec<FeatureMessage> = entry
        .last_msgs
        .values()
        .filter(|m| (msg.timestamp_ms - m.timestamp_ms).abs() <= horizon)
        .cloned()
        .collect();
    for m in &fresh {
        let per_label = match message_components(entry, m) {
            Ok(c) => c,
            Err(resp) => return resp,
        };
        for (k, g) in per_label.into_iter().enumerate() {
            components[k].push(g);
        }
        gateways.push(GatewayFeatures {
            gw_id: m.gw_id.clone(),
            features: m.device_vectors().concat(),
        });
    }
    let batch = FeatureBatch {
        task_id: task.task_id.clone(),
        timestamp_ms: msg.timestamp_ms,
        gateways,
    };
    let estimate = match infer(&task, &batch, &components) {
        Ok(e) => e,
        Err(e) => return err(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    };
    if !estimate_invariants_ok(&estimate) {
        return err(
            StatusCode::INTERNAL_SERVER_ERROR,
            "estimate failed posterior invariants",
        );
    }
    entry.seq += 1;
    let seq = entry.seq;
    let wire = Arc::new(LatentEstimateWire::from_estimate(
        &estimate,
        &task.latent_labels,
        seq,
        ingested_at_us,
    ));
    let ring = state.cfg.history_ring;
    entry.push_estimate(wire, ring);
    (StatusCode::ACCEPTED, Json(PushAck { accepted: true, seq })).into_response()
}

/// Resolve the task a (type, GW, optional task param) query addresses.
fn resolve_task<'r>(
    registry: &'r crate::cloud::TaskRegistry,
    task_type: TaskType,
    params: &BTreeMap<String, String>,
) -> Option<&'r TaskEntry> {
    if let Some(id) = params.get("task") {
        return registry.get(id).filter(|e| e.task().task_type == task_type);
    }
    let gw = params.get("GW")?;
    registry
        .tasks
        .values()
        .find(|e| e.task().task_type == task_type && e.gw_ids.contains(gw))
}

async fn get_latent_values(
    State(state): State<SharedState>,
    Path(task_type): Path<String>,
    Query(params): Query<BTreeMap<String, String>>,
    headers: HeaderMap,
) -> Response {
    let Some(task_type) = parse_task_type(&task_type) else {
        return err(StatusCode::NOT_FOUND, "unknown task type");
    };
    let registry = state.registry.read().expect("registry lock");
    let Some(entry) = resolve_task(&registry, task_type, &params) else {
        return err(StatusCode::NOT_FOUND, "no matching task");
    };
    if entry.profile() == TaskProfile::Private
        && !state.token_ok(presented_token(&headers, &params))
    {
        return err(StatusCode::UNAUTHORIZED, "private task requires a token");
    }
    if let Some(n) = params.get("history") {
        let n: usize = n.parse().unwrap_or(0);
        let items: Vec<LatentEstimateWire> = entry
            .history
            .iter()
            .rev()
            .take(n)
            .rev()
            .map(|e| (**e).clone())
            .collect();
        return Json(items).into_response();
    }
    match entry.latest() {
        Some(latest) => Json((*latest).clone()).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn start_task(
    State(state): State<SharedState>,
    Path(task_type): Path<String>,
    Query(params): Query<BTreeMap<String, String>>,
    headers: HeaderMap,
    body: Json<serde_json::Value>,
) -> Response {
    let Some(task_type) = parse_task_type(&task_type) else {
        return err(StatusCode::NOT_FOUND, "unknown task type");
    };
    let request: StartTaskRequest = match serde_path_to_error::deserialize(&body.0) {
        Ok(r) => r,
        Err(e) => {
            return err(
                StatusCode::BAD_REQUEST,
                format!("{}: {}", e.path(), e.inner()),
            )
        }
    };
    let Some(gw_id) = params.get("GW").cloned() else {
        return err(StatusCode::BAD_REQUEST, "GW: missing query parameter");
    };
    if request.task.task_type != task_type {
        return err(StatusCode::BAD_REQUEST, "task.task_type: does not match path");
    }
    if let Err(e) = request.task.validate() {
        return err(StatusCode::BAD_REQUEST, e.to_string());
    }
    if request.profile == TaskProfile::Private
        && !state.token_ok(presented_token(&headers, &params))
    {
        return err(StatusCode::UNAUTHORIZED, "private task requires a token");
    }
    let task_id = request.task.task_id.clone();
    let outcome = {
        let mut registry = state.registry.write().expect("registry lock");
        match registry.start_task(&gw_id, request.clone()) {
            Ok(o) => o,
            Err(e) => return err(StatusCode::BAD_REQUEST, e.to_string()),
        }
    };
    match outcome {
        StartOutcome::Conflict => err(
            StatusCode::CONFLICT,
            format!("task {task_id} already registered with different parameters"),
        ),
        StartOutcome::Created | StartOutcome::Idempotent => {
            if outcome == StartOutcome::Created {
                if let Err(e) = state.record(JournalOp::StartTask { gw_id, request }) {
                    debug!("journal append failed: {e}");
                }
            }
            let registry = state.registry.read().expect("registry lock");
            let version = registry.get(&task_id).map(|e| e.model_version).unwrap_or(0);
            (
                StatusCode::CREATED,
                Json(serde_json::json!({ "task_id": task_id, "model_version": version })),
            )
                .into_response()
        }
    }
}

async fn stop_task(
    State(state): State<SharedState>,
    Path(task_type): Path<String>,
    Query(params): Query<BTreeMap<String, String>>,
    headers: HeaderMap,
) -> Response {
    let Some(task_type) = parse_task_type(&task_type) else {
        return err(StatusCode::NOT_FOUND, "unknown task type");
    };
    let Some(task_id) = params.get("task").cloned() else {
        return err(StatusCode::BAD_REQUEST, "task: missing query parameter");
    };
    let gw = params.get("GW").cloned();
    {
        let registry = state.registry.read().expect("registry lock");
        let Some(entry) = registry.get(&task_id) else {
            return err(StatusCode::NOT_FOUND, format!("unknown task {task_id}"));
        };
        if entry.task().task_type != task_type {
            return err(StatusCode::NOT_FOUND, "task type mismatch");
        }
        if entry.profile() == TaskProfile::Private
            && !state.token_ok(presented_token(&headers, &params))
        {
            return err(StatusCode::UNAUTHORIZED, "private task requires a token");
        }
    }
    let removed = {
        let mut registry = state.registry.write().expect("registry lock");
        registry.stop_task(&task_id, gw.as_deref())
    };
    if removed {
        if let Err(e) = state.record(JournalOp::StopTask { task_id: task_id.clone(), gw_id: gw }) {
            debug!("journal append failed: {e}");
        }
    }
    Json(serde_json::json!({ "task_id": task_id, "stopped": removed })).into_response()
}

async fn cqi_feature(
    State(state): State<SharedState>,
    Path(task_type): Path<String>,
    Query(params): Query<BTreeMap<String, String>>,
    headers: HeaderMap,
) -> Response {
    let Some(task_type) = parse_task_type(&task_type) else {
        return err(StatusCode::NOT_FOUND, "unknown task type");
    };
    let gw_id = params.get("GW").cloned().unwrap_or_default();
    let include_private = state.cfg.private_token.is_some()
        && state.token_ok(presented_token(&headers, &params));
    let registry = state.registry.read().expect("registry lock");
    let active_tasks: Vec<TaskDescriptor> = registry
        .tasks_for_gw(task_type, &gw_id, include_private)
        .into_iter()
        .map(|e| TaskDescriptor { task: e.task().clone(), model_version: e.model_version })
        .collect();
    Json(ActiveTasks { gw_id, active_tasks }).into_response()
}

async fn get_model(
    State(state): State<SharedState>,
    Path(task_type): Path<String>,
    Query(params): Query<BTreeMap<String, String>>,
    headers: HeaderMap,
) -> Response {
    let Some(task_type) = parse_task_type(&task_type) else {
        return err(StatusCode::NOT_FOUND, "unknown task type");
    };
    let Some(task_id) = params.get("task").cloned() else {
        return err(StatusCode::BAD_REQUEST, "task: missing query parameter");
    };
    let registry = state.registry.read().expect("registry lock");
    let Some(entry) = registry.get(&task_id) else {
        return err(StatusCode::NOT_FOUND, format!("unknown task {task_id}"));
    };
    if entry.task().task_type != task_type {
        return err(StatusCode::NOT_FOUND, "task type mismatch");
    }
    if entry.profile() == TaskProfile::Private
        && !state.token_ok(presented_token(&headers, &params))
    {
        return err(StatusCode::UNAUTHORIZED, "private task requires a token");
    }
    Json(ModelBundle {
        task_id,
        model_version: entry.model_version,
        model: entry.model_file().cloned(),
        knn: entry.knn_file().cloned(),
    })
    .into_response()
}

async fn subscribe(
    State(state): State<SharedState>,
    Path(task_type): Path<String>,
    Query(params): Query<BTreeMap<String, String>>,
    headers: HeaderMap,
    ws: WebSocketUpgrade,
) -> Response {
    let Some(task_type) = parse_task_type(&task_type) else {
        return err(StatusCode::NOT_FOUND, "unknown task type");
    };
    let rx = {
        let registry = state.registry.read().expect("registry lock");
        let Some(entry) = resolve_task(&registry, task_type, &params) else {
            return err(StatusCode::NOT_FOUND, "no matching task");
        };
        if entry.profile() == TaskProfile::Private
            && !state.token_ok(presented_token(&headers, &params))
        {
            return err(StatusCode::UNAUTHORIZED, "private task requires a token");
        }
        entry.subscribers.subscribe()
    };
    ws.on_upgrade(move |socket| stream_estimates(socket, rx))
}

async fn stream_estimates(
    mut socket: WebSocket,
    mut rx: tokio::sync::broadcast::Receiver<Arc<LatentEstimateWire>>,
) {
    loop {
        match rx.recv().await {
            Ok(estimate) => {
                let text = match serde_json::to_string(&*estimate) {
                    Ok(t) => t,
                    Err(_) => break,
                };
                if socket.send(Message::Text(text.into())).await.is_err() {
                    break;
                }
            }
            // consumer lagged past the backlog: drop it
            Err(tokio::sync::broadcast::error::RecvError::Lagged(_)) => break,
            Err(tokio::sync::broadcast::error::RecvError::Closed) => break,
        }
    }
    let _ = socket.send(Message::Close(None)).await;
}
