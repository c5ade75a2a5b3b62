#![allow(dead_code)]

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use jedi::experiment::Bandwidth;
use jedi::service::{DatasetEntry, Registry};
use jedi_core::data::{gen_mixture2d, Mixture2dSpec};
use jedi_core::model::{Concept, EtaSchedule, Label, LearnerState};
use jedi_core::rng::{stream_rng, Stream, StreamRng};
use serde_json::Value;
use tower::ServiceExt;

pub const DATASET: &str = "toy";

/// The 2D mixture as a service dataset.
pub fn toy_entry(seed: u64) -> DatasetEntry {
    let d = gen_mixture2d(&Mixture2dSpec::default(), seed).unwrap();
    DatasetEntry::new(DATASET, d.teach, d.eval, Bandwidth::Factor(1.0)).unwrap()
}

pub fn toy_registry() -> Registry {
    let mut r = Registry::new();
    r.insert(toy_entry(3));
    r
}

pub async fn call(app: &Router, method: Method, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, v)
}

/// Create a session and return `(id, token, body)`.
pub async fn create(app: &Router, body: Value) -> (String, String, Value) {
    let (s, v) = call(app, Method::POST, "/sessions", None, Some(body)).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    (v["id"].as_str().unwrap().to_string(), v["token"].as_str().unwrap().to_string(), v)
}

/// A simulated learner answering over the wire, drawing tie-breaks and
/// noise exactly as an in-process run with the same seed does.
pub struct ScriptedLearner {
    pub state: LearnerState,
    tie: StreamRng,
    noise: StreamRng,
}

impl ScriptedLearner {
    pub fn new(w0: Concept, beta: f64, schedule: EtaSchedule, noise_std: f64, seed: u64) -> Self {
        ScriptedLearner {
            state: LearnerState::new(w0, beta, schedule, noise_std).unwrap(),
            tie: stream_rng(seed, Stream::TieBreak),
            noise: stream_rng(seed, Stream::Noise),
        }
    }

    pub fn answer(&mut self, x: &[f64]) -> Label {
        self.state.predict(x, &mut self.tie).unwrap()
    }

    pub fn learn(&mut self, x: &[f64], y: Label, step: usize) {
        let eta = self.state.schedule.eta(step);
        self.state = self.state.update(x, y, eta, &mut self.noise).unwrap();
    }

    /// One full teaching step over HTTP. Returns the reveal body.
    pub async fn step(&mut self, app: &Router, id: &str, token: &str) -> Value {
        let (s, p) = call(app, Method::GET, &format!("/sessions/{id}/next"), Some(token), None).await;
        assert_eq!(s, StatusCode::OK, "{p}");
        assert!(p.get("label").is_none() && p.get("y").is_none(), "label leaked: {p}");
        let x: Vec<f64> = serde_json::from_value(p["x"].clone()).unwrap();
        let label = self.answer(&x);
        let body = serde_json::json!({ "example_id": p["example_id"], "label": label });
        let (s, r) = call(app, Method::POST, &format!("/sessions/{id}/label"), Some(token), Some(body)).await;
        assert_eq!(s, StatusCode::OK, "{r}");
        let y: Label = serde_json::from_value(r["true_label"].clone()).unwrap();
        self.learn(&x, y, p["step"].as_u64().unwrap() as usize);
        r
    }
}
