//! Machine-readable resource catalog: services, radio links, actuators
//! and sensing tasks, in the spirit of minimal service model
//! descriptions. Applications discover every resource here instead of
//! hard-coding paths.

use std::collections::BTreeMap;

use axum::extract::{Query, State};
use axum::http::HeaderMap;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use crate::cloud::SharedState;
use crate::wire::TaskProfile;

/// The OTA-programmable radio functions gateways expose.
pub const OTA_FUNCTIONS: [&str; 5] = [
    "one_hop_neighborhood",
    "frequency_and_bandwidth",
    "transmission_duty_cycle",
    "cqi_type",
    "cqi_sampling",
];

fn services() -> serde_json::Value {
    json!([
        {
            "name": "post_CQIfeatures",
            "method": "POST",
            "path": "/api/post_CQIfeatures",
            "input": "FeatureMessage",
            "output": "PushAck"
        },
        {
            "name": "get_LatentValues",
            "method": "GET",
            "path": "/api/{task_type}/get_LatentValues?GW={gw_id}",
            "input": "query",
            "output": "LatentEstimate"
        },
        {
            "name": "start_task",
            "method": "POST",
            "path": "/api/{task_type}/start_task?GW={gw_id}",
            "input": "StartTaskRequest",
            "output": "TaskCreated"
        },
        {
            "name": "stop_task",
            "method": "POST",
            "path": "/api/{task_type}/stop_task?task={task_id}&GW={gw_id}",
            "input": "query",
            "output": "TaskStopped"
        },
        {
            "name": "CQI_feature",
            "method": "GET",
            "path": "/api/{task_type}/CQI_feature?GW={gw_id}",
            "input": "query",
            "output": "ActiveTasks"
        },
        {
            "name": "model",
            "method": "GET",
            "path": "/api/{task_type}/model?task={task_id}",
            "input": "query",
            "output": "ModelBundle"
        },
        {
            "name": "subscribe",
            "method": "WS",
            "path": "/api/{task_type}/subscribe?GW={gw_id}",
            "input": "query",
            "output": "LatentEstimate stream"
        }
    ])
}

pub async fn catalog(
    State(state): State<SharedState>,
    Query(params): Query<BTreeMap<String, String>>,
    headers: HeaderMap,
) -> Response {
    let include_private = state.cfg.private_token.is_some()
        && state.token_ok(super::routes::presented_token(&headers, &params));
    let registry = state.registry.read().expect("registry lock");

    // gateway id -> (links, rf profiles) from deployment + assignments
    let mut gateways: BTreeMap<String, (Vec<serde_json::Value>, Vec<serde_json::Value>)> =
        BTreeMap::new();
    if let Some(deployment) = &state.cfg.deployment {
        let links: Vec<serde_json::Value> = deployment
            .links
            .iter()
            .enumerate()
            .map(|(id, l)| {
                json!({
                    "link_id": id,
                    "tx_device": l.tx_device,
                    "rx_device": l.rx_device
                })
            })
            .collect();
        for gw in &deployment.gateways {
            gateways.insert(gw.gw_id.clone(), (links.clone(), Vec::new()));
        }
    }
    let mut sensing_tasks = Vec::new();
    for entry in registry.tasks.values() {
        let private = entry.profile() == TaskProfile::Private;
        if private && !include_private {
            continue;
        }
        let task = entry.task();
        for gw in &entry.gw_ids {
            let slot = gateways.entry(gw.clone()).or_default();
            slot.1.push(serde_json::to_value(&task.ota_profile).expect("profile json"));
            if slot.0.is_empty() {
                slot.0 = task
                    .ota_profile
                    .neighborhood_links
                    .iter()
                    .map(|id| json!({ "link_id": id }))
                    .collect();
            }
        }
        sensing_tasks.push(json!({
            "task_id": task.task_id,
            "task_type": task.task_type.as_str(),
            "latent_labels": task.latent_labels,
            "feature_recipe": task.feature_recipe,
            "window_ms": task.window_ms,
            "profile": if private { "private" } else { "public" },
            "gw_ids": entry.gw_ids.iter().collect::<Vec<_>>(),
            "model_version": entry.model_version
        }));
    }
    let radio_links: Vec<serde_json::Value> = gateways
        .iter()
        .map(|(gw, (links, profiles))| {
            json!({ "gw_id": gw, "links": links, "rf_interfaces": profiles })
        })
        .collect();
    let actuators: Vec<serde_json::Value> = gateways
        .keys()
        .map(|gw| json!({ "gw_id": gw, "ota_functions": OTA_FUNCTIONS }))
        .collect();

    Json(json!({
        "version": 1,
        "schema_url": "/api/catalog/schema",
        "services": services(),
        "radio_links": radio_links,
        "actuators": actuators,
        "sensing_tasks": sensing_tasks
    }))
    .into_response()
}

/// JSON Schema the catalog itself validates against.
pub async fn catalog_schema() -> Response {
    Json(json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "radiosense resource catalog",
        "type": "object",
        "required": ["version", "schema_url", "services", "radio_links", "actuators", "sensing_tasks"],
        "properties": {
            "version": { "type": "integer" },
            "schema_url": { "type": "string" },
            "services": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["name", "method", "path", "input", "output"],
                    "properties": {
                        "name": { "type": "string" },
                        "method": { "type": "string", "enum": ["GET", "POST", "WS"] },
                        "path": { "type": "string" },
                        "input": { "type": "string" },
                        "output": { "type": "string" }
                    }
                }
            },
            "radio_links": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["gw_id", "links", "rf_interfaces"],
                    "properties": {
                        "gw_id": { "type": "string" },
                        "links": { "type": "array", "items": { "type": "object" } },
                        "rf_interfaces": { "type": "array", "items": { "type": "object" } }
                    }
                }
            },
            "actuators": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["gw_id", "ota_functions"],
                    "properties": {
                        "gw_id": { "type": "string" },
                        "ota_functions": { "type": "array", "items": { "type": "string" } }
                    }
                }
            },
            "sensing_tasks": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["task_id", "task_type", "latent_labels", "window_ms", "profile"],
                    "properties": {
                        "task_id": { "type": "string" },
                        "task_type": { "type": "string", "enum": ["detection", "localization", "activity"] },
                        "latent_labels": { "type": "array", "items": { "type": "string" } },
                        "window_ms": { "type": "integer" },
                        "profile": { "type": "string", "enum": ["public", "private"] }
                    }
                }
            }
        }
    }))
    .into_response()
}
