#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use deephys_cli::api::{router, AppState};
use deephys_core::synth::{generate_pair, SYNTHETIC_LAYER};
use deephys_core::{AnalysisSession, DatasetBundle, ShiftKind, SyntheticShiftSpec};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub fn spec(kind: ShiftKind) -> SyntheticShiftSpec {
    SyntheticShiftSpec {
        category_count: 10,
        images_per_category: 30,
        neuron_count: 24,
        shift_kind: kind,
        drift_magnitude: 0.1,
        noise_sigma: 0.05,
        seed: 17,
        thumbnails: true,
    }
}

/// Zeroes out (negates) one neuron in the InD bundle so it is dead.
pub fn kill_neuron(bundle: DatasetBundle, neuron: usize) -> DatasetBundle {
    let (header, labels, logits, mut acts, thumbs) = bundle.into_parts();
    let m = &mut acts[0];
    for i in 0..m.rows() {
        let v = m.get(i, neuron);
        m.set(i, neuron, -v.abs() - 0.01);
    }
    DatasetBundle::new(header, labels, logits, acts, thumbs).unwrap()
}

/// InD + permuted OOD + identity OOD, neuron 5 dead.
pub fn fixture_state() -> Arc<AppState> {
    let (ind, permuted) = generate_pair(&spec(ShiftKind::Permuted)).unwrap();
    let (_, identity) = generate_pair(&spec(ShiftKind::Identity)).unwrap();
    let ind = kill_neuron(ind, 5);
    let session = AnalysisSession::build(ind, [permuted, identity], SYNTHETIC_LAYER).unwrap();
    Arc::new(AppState::new(session, 9))
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: String,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes)
            .unwrap_or_else(|e| panic!("body is not JSON ({e}): {:?}", String::from_utf8_lossy(&self.bytes)))
    }

    pub fn error_code(&self) -> String {
        self.json()["error"]["code"].as_str().unwrap().to_string()
    }
}

pub async fn get(state: &Arc<AppState>, uri: &str) -> Reply {
    let response = router(Arc::clone(state))
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = response.status();
    let content_type = response
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string())
        .unwrap_or_default();
    let bytes = response.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        content_type,
        bytes,
    }
}

/// Checks `value` against a shape template: objects list required keys,
/// a one-element array describes every element, and strings name a type
/// ("number", "integer", "string", "boolean", "dataset", "any", or
/// "nullable:<type>"; `"nullable:array"` matches null or any array).
pub fn check_shape(value: &Value, shape: &Value, path: &str) -> Result<(), String> {
    let fail = |what: &str| Err(format!("{path}: expected {what}, got {value}"));
    match shape {
        Value::Object(fields) => {
            let Some(obj) = value.as_object() else { return fail("object") };
            for (key, sub) in fields {
                let v = obj.get(key).ok_or_else(|| format!("{path}: missing key `{key}`"))?;
                check_shape(v, sub, &format!("{path}.{key}"))?;
            }
            Ok(())
        }
        Value::Array(elems) => {
            let Some(arr) = value.as_array() else { return fail("array") };
            if let Some(elem) = elems.first() {
                for (i, v) in arr.iter().enumerate() {
                    check_shape(v, elem, &format!("{path}[{i}]"))?;
                }
            }
            Ok(())
        }
        Value::String(kind) => {
            if let Some(inner) = kind.strip_prefix("nullable:") {
                if value.is_null() {
                    return Ok(());
                }
                if inner == "array" {
                    return if value.is_array() { Ok(()) } else { fail("array or null") };
                }
                return check_shape(value, &Value::String(inner.to_string()), path);
            }
            let ok = match kind.as_str() {
                "number" => value.is_number(),
                "integer" => value.is_u64(),
                "string" => value.is_string(),
                "boolean" => value.is_boolean(),
                "dataset" => value
                    .as_str()
                    .is_some_and(|s| s == "ind" || (s.starts_with("ood") && s[3..].parse::<usize>().is_ok())),
                "any" => true,
                other => return Err(format!("{path}: unknown shape type {other}")),
            };
            if ok {
                Ok(())
            } else {
                fail(kind)
            }
        }
        _ => Err(format!("{path}: bad shape template")),
    }
}

pub fn ranked_image() -> Value {
    json!({"image_id": "integer", "score": "number"})
}

pub fn companion_neuron() -> Value {
    json!({"neuron_id": "integer", "score": "number", "companion": [ranked_image()]})
}

pub fn error_shape() -> Value {
    json!({"error": {"code": "string", "message": "string"}})
}

pub fn metric_shape() -> Value {
    json!({
        "ood": "dataset",
        "ood_name": "string",
        "metric": "string",
        "count": "integer",
        "scores": [{"neuron_id": "integer", "score": "number"}],
        "density": "nullable:array",
        "excluded_neurons": [{"neuron_id": "integer", "reason": "string"}],
    })
}

/// (uri, shape) for every documented endpoint that answers JSON.
pub fn endpoint_shapes() -> Vec<(&'static str, Value)> {
    vec![
        (
            "/api/v1/session",
            json!({
                "api_version": "string",
                "top_k": "integer",
                "session": {
                    "layer": "string",
                    "neuron_count": "integer",
                    "class_count": "integer",
                    "class_names": ["string"],
                    "live_neurons": "integer",
                    "dead_neurons": ["integer"],
                    "datasets": [{"id": "dataset", "name": "string", "image_count": "integer", "accuracy": "number"}],
                },
            }),
        ),
        (
            "/api/v1/neurons",
            json!({
                "neuron_count": "integer",
                "neurons": [{
                    "neuron_id": "integer",
                    "dead": "boolean",
                    "ind_max": "number",
                    "activation_ratios": [{"dataset": "dataset", "ratio": "number"}],
                }],
            }),
        ),
        (
            "/api/v1/neurons/7/top?dataset=ood0&k=9",
            json!({
                "neuron_id": "integer",
                "datasets": [{"dataset": "dataset", "images": [ranked_image()], "activation_ratio": "number"}],
            }),
        ),
        (
            "/api/v1/images/12/neurons?dataset=ood0&limit=3",
            json!({
                "dataset": "dataset",
                "image_id": "integer",
                "label": "integer",
                "prediction": "integer",
                "companion_dataset": "dataset",
                "neurons": [companion_neuron()],
            }),
        ),
        (
            "/api/v1/categories/3/neurons?dataset=ind&limit=4",
            json!({
                "dataset": "dataset",
                "category": "integer",
                "category_name": "string",
                "image_ids": ["integer"],
                "companion_dataset": "dataset",
                "neurons": [companion_neuron()],
            }),
        ),
        (
            "/api/v1/confusions?a=0&b=1&dataset=ood0",
            json!({"category_a": "integer", "category_b": "integer", "dataset": "dataset", "image_ids": ["integer"]}),
        ),
        ("/api/v1/metrics/novelty?ood=ood0", metric_shape()),
        ("/api/v1/metrics/spurious?ood=ood0", metric_shape()),
        ("/api/v1/metrics/novelty?ood=ood1", metric_shape()),
    ]
}
