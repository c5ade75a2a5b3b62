mod common;

use std::collections::HashSet;

use axum::http::{Method, StatusCode};
use axum::Router;
use jedi::service::session::{teaching_gain, LogRecord, SessionEvent};
use jedi::service::store::{EVENTS_FILE, SNAPSHOT_FILE};
use jedi::service::{app, ServiceConfig};
use jedi::trace::read_jsonl;
use jedi_core::model::{Concept, Label, LearnerState, TeachingEvent};
use jedi_core::rng::{stream_rng, Stream};
use jedi_core::teacher::{run_teaching, TeacherKind, TeacherVariant, HUMAN_COLD_START};
use serde_json::{json, Value};

use common::{call, create, toy_entry, toy_registry, ScriptedLearner, DATASET};

fn memory_app() -> Router {
    app(toy_registry(), ServiceConfig::default()).unwrap().0
}

fn url(id: &str, tail: &str) -> String {
    format!("/sessions/{id}/{tail}")
}

#[tokio::test]
async fn creation_validates_its_config() {
    let app = memory_app();
    let (s, v) = call(&app, Method::POST, "/sessions", None, Some(json!({ "dataset": "nope" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
    let (s, _) = call(&app, Method::POST, "/sessions", None, Some(json!({ "dataset": DATASET, "beta": 1.0 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, Method::POST, "/sessions", None, Some(json!({ "dataset": DATASET, "colour": "red" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (_, _, v) = create(&app, json!({ "dataset": DATASET })).await;
    assert_eq!(v["phase"], "calibration");
    let (_, _, v) = create(&app, json!({ "dataset": DATASET, "beta": 0.875 })).await;
    assert_eq!(v["phase"], "teaching");
    assert_eq!(v["budget"], 40);
    assert_eq!(v["memory"]["n_bar"], 8.0);
}

#[tokio::test]
async fn tokens_guard_sessions() {
    let app = memory_app();
    let (id, token, _) = create(&app, json!({ "dataset": DATASET })).await;
    let (s, _) = call(&app, Method::GET, &format!("/sessions/{id}"), None, None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = call(&app, Method::GET, &format!("/sessions/{id}"), Some("wrong"), None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = call(&app, Method::GET, "/sessions/missing", Some(&token), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (other, _, _) = create(&app, json!({ "dataset": DATASET })).await;
    let (s, _) = call(&app, Method::GET, &url(&other, "next"), Some(&token), None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, v) = call(&app, Method::GET, &format!("/sessions/{id}"), Some(&token), None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v.get("token").is_none());
}

#[tokio::test]
async fn calibration_sets_memory_and_budget_once() {
    let app = memory_app();
    let (id, token, _) = create(&app, json!({ "dataset": DATASET })).await;
    let (s, _) = call(&app, Method::GET, &url(&id, "next"), Some(&token), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call(&app, Method::POST, &url(&id, "calibration"), Some(&token), Some(json!({ "scores": [4, 6] }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, v) = call(&app, Method::POST, &url(&id, "calibration"), Some(&token), Some(json!({ "scores": [4, 6, 8] }))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["memory"]["beta"].as_f64().unwrap(), 6.0 / 7.0);
    assert_eq!(v["budget"], 40);
    assert_eq!(v["phase"], "teaching");
    let (s, v) = call(&app, Method::POST, &url(&id, "calibration"), Some(&token), Some(json!({ "scores": [4, 6, 8] }))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["phase"], "teaching");

    let (id, token, _) = create(&app, json!({ "dataset": DATASET })).await;
    let (_, v) = call(&app, Method::POST, &url(&id, "calibration"), Some(&token), Some(json!({ "scores": [2, 2, 3] }))).await;
    assert_eq!((v["memory"]["n_bar"].as_f64(), v["budget"].as_u64()), (Some(2.5), Some(20)));
}

fn trial(n: usize) -> Value {
    let rounds: Vec<Value> = (2..=n.min(8) + 1)
        .map(|k| {
            let shown: Vec<usize> = (0..k).rev().collect();
            let mut rec = shown.clone();
            if k > n {
                rec.swap(0, 1);
            }
            json!({ "set_size": k, "shown_order": shown, "recovered_order": rec, "exposure_seconds": 1 + k })
        })
        .collect();
    json!({ "rounds": rounds })
}

#[tokio::test]
async fn full_trials_are_scored_on_the_server() {
    let app = memory_app();
    let (id, token, _) = create(&app, json!({ "dataset": DATASET })).await;
    let body = json!({ "trials": [trial(8), trial(4), trial(6)] });
    let (s, v) = call(&app, Method::POST, &url(&id, "calibration"), Some(&token), Some(body)).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["memory"]["trial_scores"], json!([8, 4, 6]));
    assert_eq!(v["memory"]["n_bar"], 7.0);
    let (id, token, _) = create(&app, json!({ "dataset": DATASET })).await;
    let bad = json!({ "trials": [{ "rounds": [{ "set_size": 2, "shown_order": [0, 0], "recovered_order": [0, 0], "exposure_seconds": 3 }] }, trial(3), trial(3)] });
    let (s, _) = call(&app, Method::POST, &url(&id, "calibration"), Some(&token), Some(bad)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn memoryless_teachers_get_the_fixed_budget() {
    let app = memory_app();
    for teacher in ["imt", "rt"] {
        let (id, token, _) = create(&app, json!({ "dataset": DATASET, "teacher": teacher })).await;
        let (_, v) = call(&app, Method::POST, &url(&id, "calibration"), Some(&token), Some(json!({ "scores": [4, 6, 8] }))).await;
        assert_eq!(v["budget"], 30, "{teacher}");
    }
}

#[tokio::test]
async fn next_is_idempotent_until_labeled() {
    let app = memory_app();
    let (id, token, _) = create(&app, json!({ "dataset": DATASET, "beta": 0.5, "seed": 2 })).await;
    let (_, first) = call(&app, Method::GET, &url(&id, "next"), Some(&token), None).await;
    for _ in 0..5 {
        let (s, again) = call(&app, Method::GET, &url(&id, "next"), Some(&token), None).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(again, first);
    }
    assert!(first.get("label").is_none() && first.get("true_label").is_none());
    let (_, st) = call(&app, Method::GET, &format!("/sessions/{id}"), Some(&token), None).await;
    assert_eq!(st["recommendations_computed"], 1);

    let wrong = json!({ "example_id": "not-it", "label": 1 });
    let (s, _) = call(&app, Method::POST, &url(&id, "label"), Some(&token), Some(wrong)).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call(&app, Method::POST, &url(&id, "label"), Some(&token), Some(json!({ "example_id": first["example_id"], "label": 0 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let good = json!({ "example_id": first["example_id"], "label": -1 });
    let (s, r) = call(&app, Method::POST, &url(&id, "label"), Some(&token), Some(good.clone())).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(r["correct"], json!(r["true_label"] == json!(-1)));
    let (s, _) = call(&app, Method::POST, &url(&id, "label"), Some(&token), Some(good)).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (_, st) = call(&app, Method::GET, &format!("/sessions/{id}"), Some(&token), None).await;
    assert_eq!((st["taught"].as_u64(), st["recommendations_computed"].as_u64()), (Some(1), Some(1)));
}

fn first_seen_accuracy(events: &[TeachingEvent]) -> f64 {
    let mut seen = HashSet::new();
    let firsts: Vec<bool> = events.iter().filter(|e| seen.insert(e.example_id.clone())).map(|e| e.correct()).collect();
    firsts.iter().filter(|c| **c).count() as f64 / firsts.len() as f64
}

async fn teach_to_evaluation(app: &Router, body: Value) -> (String, String) {
    let (id, token, _) = create(app, body).await;
    let entry = toy_entry(3);
    let mut learner = ScriptedLearner::new(Concept(vec![0.1, -0.2]), 0.5, entry.schedule, 0.0, 1);
    loop {
        let r = learner.step(app, &id, &token).await;
        if r["phase"] == "evaluation" {
            assert_eq!(r["remaining"], 0);
            break;
        }
    }
    (id, token)
}

#[tokio::test]
async fn evaluation_flow_and_gain() {
    let app = memory_app();
    let entry = toy_entry(3);
    let (id, token) = teach_to_evaluation(&app, json!({ "dataset": DATASET, "teacher": "rt", "beta": 0.5, "budget": 12, "seed": 5 })).await;
    let (s, v) = call(&app, Method::GET, &url(&id, "next"), Some(&token), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["phase"], "evaluation");
    assert!(v["error"].as_str().unwrap().contains("/evaluation"));
    let (s, _) = call(&app, Method::GET, &url(&id, "report"), Some(&token), None).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let (_, batch) = call(&app, Method::GET, &url(&id, "evaluation"), Some(&token), None).await;
    let items = batch["items"].as_array().unwrap();
    assert_eq!(items.len(), 100);
    let teach_ids: HashSet<&str> = entry.teach.examples().iter().map(|e| e.id.as_str()).collect();
    let truth = |id: &str| entry.eval.iter().find(|e| e.id == id).unwrap().y;
    let pos = items.iter().filter(|it| truth(it["example_id"].as_str().unwrap()) == Label::Pos).count();
    assert_eq!(pos, 50);
    assert!(items.iter().all(|it| !teach_ids.contains(it["example_id"].as_str().unwrap()) && it.get("label").is_none()));

    let mut answers: Vec<Value> = items
        .iter()
        .map(|it| json!({ "example_id": it["example_id"], "label": truth(it["example_id"].as_str().unwrap()) }))
        .collect();
    let last = answers.pop().unwrap();
    let (s, _) = call(&app, Method::POST, &url(&id, "evaluation"), Some(&token), Some(json!({ "answers": answers }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    answers.push(last);
    let (s, g) = call(&app, Method::POST, &url(&id, "evaluation"), Some(&token), Some(json!({ "answers": answers }))).await;
    assert_eq!(s, StatusCode::OK, "{g}");

    let (_, report) = call(&app, Method::GET, &url(&id, "report"), Some(&token), None).await;
    let events: Vec<TeachingEvent> = serde_json::from_value(report["events"].clone()).unwrap();
    let acc = first_seen_accuracy(&events);
    assert_eq!(g["evaluation_accuracy"], 1.0);
    assert_eq!(g["teaching_accuracy_first_seen"].as_f64().unwrap(), acc);
    assert!((g["teaching_gain"].as_f64().unwrap() - (1.0 - acc)).abs() < 1e-15);
    assert_eq!(report["report"], g);
    let (s, _) = call(&app, Method::POST, &url(&id, "evaluation"), Some(&token), Some(json!({ "answers": answers }))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (_, b) = call(&app, Method::GET, &url(&id, "evaluation"), Some(&token), None).await;
    assert_eq!(b["submitted"], true);
}

#[tokio::test]
async fn all_wrong_evaluation_gives_negative_teaching_accuracy() {
    let app = memory_app();
    let entry = toy_entry(3);
    let (id, token) = teach_to_evaluation(&app, json!({ "dataset": DATASET, "teacher": "rt", "beta": 0.5, "budget": 8, "eval_per_class": 5 })).await;
    let (_, batch) = call(&app, Method::GET, &url(&id, "evaluation"), Some(&token), None).await;
    let answers: Vec<Value> = batch["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|it| {
            let y = entry.eval.iter().find(|e| e.id == it["example_id"].as_str().unwrap()).unwrap().y;
            json!({ "example_id": it["example_id"], "label": y.flip() })
        })
        .collect();
    assert_eq!(answers.len(), 10);
    let (_, g) = call(&app, Method::POST, &url(&id, "evaluation"), Some(&token), Some(json!({ "answers": answers }))).await;
    assert_eq!(g["teaching_gain"].as_f64().unwrap(), -g["teaching_accuracy_first_seen"].as_f64().unwrap());
}

#[test]
fn gain_counts_first_sightings_only() {
    let ev = |id: &str, ok: bool| TeachingEvent {
        step: 0,
        example_id: id.into(),
        shown_x: vec![0.0],
        learner_label: if ok { Label::Pos } else { Label::Neg },
        true_label: Label::Pos,
        objective_value: None,
    };
    let events = [ev("a", false), ev("b", true), ev("a", true), ev("c", true), ev("d", false), ev("e", true)];
    let r = teaching_gain(&events, &[true; 10]);
    assert_eq!(r.first_seen_count, 5);
    assert!((r.teaching_accuracy_first_seen - 0.6).abs() < 1e-15);
    assert!((r.teaching_gain - 0.4).abs() < 1e-15);
}

#[tokio::test]
async fn logs_answer_before_reveal_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        log_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let (app, _) = app(toy_registry(), config).unwrap();
    let (id, _) = teach_to_evaluation(&app, json!({ "dataset": DATASET, "beta": 0.5, "budget": 10 })).await;
    let records: Vec<LogRecord> = read_jsonl(&dir.path().join(&id).join(EVENTS_FILE)).unwrap();
    assert_eq!(records.len(), 1 + 3 * 10);
    assert!(records.windows(2).all(|w| w[1].seq == w[0].seq + 1));
    let mut answered = HashSet::new();
    for r in &records {
        match &r.event {
            SessionEvent::Answered { step, .. } => assert!(answered.insert(*step)),
            SessionEvent::Revealed { step, .. } => assert!(answered.contains(step), "reveal of step {step} precedes its answer"),
            _ => {}
        }
    }
    assert!(dir.path().join(&id).join(SNAPSHOT_FILE).is_file());
}

#[tokio::test]
async fn torn_log_tail_is_dropped_on_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        log_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let (router, state) = app(toy_registry(), config.clone()).unwrap();
    let (id, token, _) = create(&router, json!({ "dataset": DATASET, "beta": 0.6, "seed": 8 })).await;
    let mut learner = ScriptedLearner::new(Concept(vec![0.3, 0.1]), 0.6, toy_entry(3).schedule, 0.0, 8);
    for _ in 0..4 {
        learner.step(&router, &id, &token).await;
    }
    let before = state.session(&id).await.unwrap();
    drop(router);
    let log = dir.path().join(&id).join(EVENTS_FILE);
    let mut text = std::fs::read_to_string(&log).unwrap();
    text.push_str("{\"seq\":14,\"at_ms\":1,\"event\":{\"type\":\"recomm");
    std::fs::write(&log, text).unwrap();

    let (router, state) = app(toy_registry(), config).unwrap();
    assert_eq!(state.session(&id).await.unwrap(), before);
    learner.step(&router, &id, &token).await;
    let records: Vec<LogRecord> = read_jsonl(&log).unwrap();
    assert_eq!(records.len(), 1 + 3 * 5);
}

#[tokio::test]
async fn interleaved_sessions_stay_isolated() {
    let app = memory_app();
    let entry = toy_entry(3);
    let setups = [(21u64, 0.8), (22u64, 0.5)];
    let mut sessions = Vec::new();
    for (seed, beta) in setups {
        let (id, token, _) = create(&app, json!({ "dataset": DATASET, "beta": beta, "seed": seed, "budget": 15 })).await;
        let w0 = Concept::random(2, &mut stream_rng(seed, Stream::LearnerInit));
        sessions.push((id, token, ScriptedLearner::new(w0, beta, entry.schedule, 0.01, seed)));
    }
    for _ in 0..15 {
        for (id, token, learner) in sessions.iter_mut() {
            learner.step(&app, id, token).await;
        }
    }
    for ((seed, beta), (id, token, _)) in setups.iter().zip(&sessions) {
        let kind = TeacherKind::new(TeacherVariant::JediHarmonic, *beta, entry.schedule, 15).with_cold_start(HUMAN_COLD_START);
        let w0 = Concept::random(2, &mut stream_rng(*seed, Stream::LearnerInit));
        let learner = LearnerState::new(w0, *beta, entry.schedule, 0.01).unwrap();
        let offline = run_teaching(&kind, learner, &entry.env(), *seed, None).unwrap();
        let (s, v) = call(&app, Method::GET, &url(id, "evaluation"), Some(token), None).await;
        assert_eq!(s, StatusCode::OK, "{v}");
        let answers: Vec<Value> = v["items"].as_array().unwrap().iter().map(|it| json!({ "example_id": it["example_id"], "label": 1 })).collect();
        call(&app, Method::POST, &url(id, "evaluation"), Some(token), Some(json!({ "answers": answers }))).await;
        let (_, report) = call(&app, Method::GET, &url(id, "report"), Some(token), None).await;
        let events: Vec<TeachingEvent> = serde_json::from_value(report["events"].clone()).unwrap();
        assert_eq!(events, offline.events);
    }
}

#[test]
fn concurrent_mutations_to_one_session_get_retry() {
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
    rt.block_on(async {
        let app = memory_app();
        let mut busy = 0;
        for _ in 0..20 {
            let (id, token, _) = create(&app, json!({ "dataset": DATASET, "beta": 0.5 })).await;
            let u = url(&id, "next");
            let (_, first) = call(&app, Method::GET, &u, Some(&token), None).await;
            let answer = json!({ "example_id": first["example_id"], "label": 1 });
            call(&app, Method::POST, &url(&id, "label"), Some(&token), Some(answer)).await;
            let (a, b) = tokio::join!(
                call(&app, Method::GET, &u, Some(&token), None),
                call(&app, Method::GET, &u, Some(&token), None)
            );
            let codes = [a.0, b.0];
            assert!(codes.contains(&StatusCode::OK));
            if codes.contains(&StatusCode::TOO_MANY_REQUESTS) {
                busy += 1;
            }
            let (_, st) = call(&app, Method::GET, &format!("/sessions/{id}"), Some(&token), None).await;
            assert_eq!(st["recommendations_computed"], 2);
        }
        assert!(busy > 0, "never observed a busy response");
    });
}

#[tokio::test]
async fn health_and_assets() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.txt"), "hello").unwrap();
    let config = ServiceConfig {
        assets_dir: Some(dir.path().to_path_buf()),
        static_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let (app, _) = app(toy_registry(), config).unwrap();
    let (s, v) = call(&app, Method::GET, "/healthz", None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["datasets"], json!([DATASET]));
    let (s, v) = call(&app, Method::GET, "/assets/a.txt", None, None).await;
    assert_eq!((s, v), (StatusCode::OK, json!("hello")));
    let (s, _) = call(&app, Method::GET, "/a.txt", None, None).await;
    assert_eq!(s, StatusCode::OK);
}
