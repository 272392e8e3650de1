#![allow(dead_code)]

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;
use uupl_core::calibration::{default_uncertainty_factors, CalibrationCurve};
use uupl_core::UncertaintyLevel;
use uupl_service::session::QueryRecord;
use uupl_sim::{oracle_answer, Choice, ChoiceMode, GroundTruthTask, OracleConfig, TaskKind};

/// Noise-free answers from the task's ground truth.
pub struct ScriptedUser {
    task: GroundTruthTask,
    cfg: OracleConfig,
}

impl ScriptedUser {
    pub fn new(kind: TaskKind) -> Self {
        Self {
            task: GroundTruthTask::new(kind).unwrap(),
            cfg: OracleConfig {
                factors: default_uncertainty_factors(CalibrationCurve::standard()).unwrap(),
                choice_mode: ChoiceMode::Deterministic,
                rng_seed: None,
            },
        }
    }

    pub fn answer(&self, q: &QueryRecord) -> (Choice, UncertaintyLevel) {
        let a = oracle_answer(&self.task, (&q.x1, &q.x2), &self.cfg).unwrap();
        (a.choice, a.level)
    }
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap()
}
