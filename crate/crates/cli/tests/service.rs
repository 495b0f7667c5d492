//! Endpoint behaviour, driven through the router without a socket except
//! for the WebSocket test.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::http::{Request, StatusCode};
use axum::Router;
use futures::{SinkExt, StreamExt};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tower::ServiceExt;
use trailer_lab::service::{router, AppState, Defaults, ExportDocument, LiveMessage, SimResponse};
use trailer_lab_core::lqr::GainSchedule;
use trailer_lab_core::sim::{paths, Body as VehicleBody, CompletionStatus, SimScenario};
use trailer_lab_core::tracker::{Direction, PiecewiseLinearPath};

fn service() -> (Arc<AppState>, Router) {
    let state = Arc::new(AppState::default());
    (Arc::clone(&state), router(state, None))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Bytes) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes())
}

async fn post_json(app: &Router, uri: &str, body: &impl serde::Serialize) -> (StatusCode, Bytes) {
    call(app, "POST", uri, Some(serde_json::to_string(body).unwrap())).await
}

fn as_json(bytes: &Bytes) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Compares against a checked-in fixture; `TRAILER_LAB_BLESS=1` rewrites it.
fn golden(name: &str, actual: &str) {
    let path = fixture(name);
    if std::env::var_os("TRAILER_LAB_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "wire format drifted from {name}");
}

fn short_straight() -> SimScenario {
    let mut s = paths::straight_line_scenario();
    s.max_sim_time = 10.0;
    s
}

#[tokio::test]
async fn defaults_report_the_test_platform() {
    let (_, app) = service();
    let (status, body) = call(&app, "GET", "/api/v1/defaults", None).await;
    assert_eq!(status, StatusCode::OK);
    let v = as_json(&body);
    let p = &v["params"];
    assert_eq!(p["L1"], 0.19);
    assert_eq!(p["L2"], 0.14);
    assert_eq!(p["L3"], 0.345);
    assert_eq!(p["M1"], 0.036);
    assert!((p["alpha_limit"].as_f64().unwrap() - 44f64.to_radians()).abs() < 1e-15);
    assert_eq!(v["tracker"]["Lr"], 0.5);
    assert_eq!(v["tracker"]["Kp"], 0.3);
    assert_eq!(v["weights"]["Q"], json!([[10.0, 0.0], [0.0, 10.0]]));
    assert_eq!(v["rates"]["stabilizer_hz"], 100.0);
    assert_eq!(v["rates"]["tracker_hz"], 10.0);
    for preset in ["straight", "eight", "parking", "roa"] {
        let s: SimScenario = serde_json::from_value(v["presets"][preset].clone()).unwrap();
        s.validate().unwrap();
    }
    let parsed: Defaults = serde_json::from_slice(&body).unwrap();
    assert_eq!(parsed, Defaults::current());
    golden("defaults.json", std::str::from_utf8(&body).unwrap());
}

#[tokio::test]
async fn both_prefixes_serve_the_same_api() {
    let (_, app) = service();
    let (a, body_a) = call(&app, "GET", "/api/v1/defaults", None).await;
    let (b, body_b) = call(&app, "GET", "/api/defaults", None).await;
    assert_eq!((a, b), (StatusCode::OK, StatusCode::OK));
    assert_eq!(body_a, body_b);
    let (missing, _) = call(&app, "GET", "/api/v1/nope", None).await;
    assert_eq!(missing, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn parking_simulation_returns_all_three_bodies_deterministically() {
    let (_, app) = service();
    let scenario = paths::parking_scenario();
    let (status, first) = post_json(&app, "/api/v1/simulate", &scenario).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&first));
    let (_, second) = post_json(&app, "/api/v1/simulate", &scenario).await;
    assert!(first == second, "repeated request bodies differ");

    let resp: SimResponse = serde_json::from_slice(&first).unwrap();
    let rows = resp.trace.rows.len();
    assert_eq!(resp.timing.rows, rows);
    assert_eq!(resp.timing.stabilizer_hz, 100.0);
    assert!((resp.timing.duration - rows as f64 / 100.0).abs() < 1e-12);
    for (poly, body) in [
        (&resp.polylines.trailer, VehicleBody::Trailer),
        (&resp.polylines.dolly, VehicleBody::Dolly),
        (&resp.polylines.truck, VehicleBody::Truck),
    ] {
        assert_eq!(poly.len(), rows);
        assert_eq!(*poly, resp.trace.body_polyline(body));
    }
    assert_eq!(resp.polylines.trailer[0], [scenario.initial_state.x3, scenario.initial_state.y3]);
    assert_ne!(resp.polylines.dolly, resp.polylines.trailer);
    assert_ne!(resp.polylines.truck, resp.polylines.dolly);
    assert_eq!(resp.report.status, CompletionStatus::GoalReached);
    for e in [&resp.report.trailer, &resp.report.dolly, &resp.report.truck] {
        assert_eq!(e.errors.len(), rows);
        assert!(e.max_error >= e.mean_error && e.mean_error >= 0.0);
    }

    golden("parking_response.sha256", &format!("{}\n", hex::encode(Sha256::digest(&first))));
}

#[tokio::test]
async fn malformed_json_is_a_400_naming_the_path() {
    let (_, app) = service();
    let mut v = serde_json::to_value(short_straight()).unwrap();
    v["params"]["L2"] = json!("long");
    let (status, body) = post_json(&app, "/api/v1/simulate", &v).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let err = as_json(&body);
    assert_eq!(err["field"], "params.L2");
    assert!(err["error"].as_str().unwrap().starts_with("malformed JSON"));

    for garbage in ["", "{", "not json", "[1, 2]", "{\"params\": null}", "{} trailing"] {
        let (status, body) = call(&app, "POST", "/api/v1/simulate", Some(garbage.into())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{garbage:?}");
        assert!(as_json(&body)["error"].is_string());
    }
}

#[tokio::test]
async fn semantically_invalid_scenarios_are_422_naming_the_field() {
    let (state, app) = service();
    type Mutation = fn(&mut SimScenario);
    let cases: [(&str, Mutation); 4] = [
        ("params.L2", |s| s.params.l2 = 0.0),
        ("weights.Q", |s| s.weights.q[0][1] = 1.0),
        ("path.legs[0].waypoints", |s| s.path.legs[0].waypoints.truncate(1)),
        ("max_sim_time", |s| s.max_sim_time = 1e6),
    ];
    for (field, mutate) in cases {
        let mut s = short_straight();
        mutate(&mut s);
        let (status, body) = post_json(&app, "/api/v1/simulate", &s).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{field}");
        let err = as_json(&body);
        assert_eq!(err["field"], field);
        assert!(err["error"].as_str().unwrap().contains(field));
    }
    assert!(state.schedules.is_empty(), "rejected requests must not build schedules");
}

#[tokio::test]
async fn schedule_cache_hits_and_misses_agree() {
    let (state, app) = service();
    let mut s = short_straight();
    s.weights.q = [[7.0, 0.0], [0.0, 3.0]];
    let (_, miss) = post_json(&app, "/api/v1/simulate", &s).await;
    assert_eq!(state.schedules.len(), 1);
    let (_, hit) = post_json(&app, "/api/v1/simulate", &s).await;
    assert_eq!(state.schedules.len(), 1);
    assert!(miss == hit);

    // a fresh service has to rebuild and still lands on the same bytes
    let (fresh_state, fresh) = service();
    let (_, rebuilt) = post_json(&fresh, "/api/v1/simulate", &s).await;
    assert_eq!(fresh_state.schedules.len(), 1);
    assert!(rebuilt == miss);
}

#[tokio::test]
async fn concurrent_requests_do_not_interfere() {
    let (_, app) = service();
    let scenarios: Vec<SimScenario> = (0..4)
        .map(|i| {
            let mut s = short_straight();
            s.initial_state.y3 = -0.1 * i as f64;
            s
        })
        .collect();
    let serial: Vec<Bytes> = {
        let mut out = Vec::new();
        for s in &scenarios {
            out.push(post_json(&app, "/api/v1/simulate", s).await.1);
        }
        out
    };
    let handles: Vec<_> = scenarios
        .iter()
        .cloned()
        .map(|s| {
            let app = app.clone();
            tokio::spawn(async move { post_json(&app, "/api/v1/simulate", &s).await.1 })
        })
        .collect();
    for (h, expected) in handles.into_iter().zip(serial) {
        assert!(h.await.unwrap() == expected);
    }
}

#[tokio::test]
async fn schedule_endpoint_serves_the_gain_curve() {
    let (_, app) = service();
    let (status, body) = call(&app, "GET", "/api/v1/schedule", None).await;
    assert_eq!(status, StatusCode::OK);
    let schedule: GainSchedule = serde_json::from_slice(&body).unwrap();
    assert_eq!(schedule.grid.len(), 101);
    let n = schedule.gains.len();
    for i in 0..n {
        assert_eq!(schedule.gains[i], schedule.gains[n - 1 - i]);
        assert_eq!(schedule.grid[i], -schedule.grid[n - 1 - i]);
    }

    let (status, body) = call(&app, "GET", "/api/v1/schedule?grid=3", None).await;
    assert_eq!(status, StatusCode::OK);
    let small: GainSchedule = serde_json::from_slice(&body).unwrap();
    assert_eq!(small.grid.len(), 3);
    assert_eq!(small.gains[0], small.gains[2]);

    let (status, body) = call(&app, "GET", "/api/v1/schedule?grid=4", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(as_json(&body)["field"], "grid");
    let (status, body) = call(&app, "GET", "/api/v1/schedule?grid=lots", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(as_json(&body)["field"], "grid");
}

#[tokio::test]
async fn path_validation_reports_each_leg() {
    let (_, app) = service();
    let parking = paths::parking_scenario();
    let (status, body) = post_json(&app, "/api/v1/validate-path", &parking.path).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let v = as_json(&body);
    assert_eq!(v["legs"].as_array().unwrap().len(), parking.path.legs.len());
    assert_eq!(v["feasible"], true, "{v}");

    let turn = 170f64.to_radians();
    let hairpin = PiecewiseLinearPath {
        legs: vec![
            trailer_lab_core::tracker::Leg::new(Direction::Forward, vec![[0.0, 0.0], [1.0, 0.0]]),
            trailer_lab_core::tracker::Leg::new(
                Direction::Reverse,
                vec![[1.0, 0.0], [-2.0, 0.0], [-2.0 - 3.0 * turn.cos(), 3.0 * turn.sin()]],
            ),
        ],
    };
    let (status, body) = post_json(&app, "/api/v1/validate-path", &hairpin).await;
    assert_eq!(status, StatusCode::OK);
    let v = as_json(&body);
    assert_eq!(v["feasible"], false);
    assert_eq!(v["legs"][0]["feasible"], true);
    assert_eq!(v["legs"][1]["feasible"], false);
    assert_eq!(v["legs"][1]["direction"], "reverse");
    assert!(v["legs"][1]["peak_demand"].as_f64().unwrap() > v["beta3_clamp"].as_f64().unwrap());

    // a longer look-ahead rounds the same corner more gently
    let mut with_tracker = serde_json::to_value(&hairpin).unwrap();
    with_tracker["tracker"] = json!({"Lr": 1.4, "Kp": 0.3, "goal_tolerance": 0.02});
    let (_, body) = post_json(&app, "/api/v1/validate-path", &with_tracker).await;
    let gentle = as_json(&body);
    assert!(gentle["legs"][1]["min_radius"].as_f64().unwrap() > v["legs"][1]["min_radius"].as_f64().unwrap());

    let mut bad = serde_json::to_value(&hairpin).unwrap();
    bad["params"] = serde_json::to_value(parking.params).unwrap();
    bad["params"]["L3"] = json!(-1.0);
    let (status, body) = post_json(&app, "/api/v1/validate-path", &bad).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(as_json(&body)["field"], "params.L3");

    let (status, _) = call(&app, "POST", "/api/v1/validate-path", Some("{\"legs\": 3}".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn export_returns_a_runnable_validated_scenario() {
    let (_, app) = service();
    let scenario = paths::straight_line_scenario();
    let (status, body) = post_json(&app, "/api/v1/export", &scenario).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let doc: ExportDocument = serde_json::from_slice(&body).unwrap();
    assert_eq!(doc.scenario, scenario);
    assert_eq!(doc.status, CompletionStatus::GoalReached);
    let canonical = serde_json::to_string(&scenario).unwrap();
    assert_eq!(doc.scenario_sha256, hex::encode(Sha256::digest(canonical.as_bytes())));

    // the export document doubles as a run manifest
    let manifest = trailer_lab::manifest::RunManifest::from_json(std::str::from_utf8(&body).unwrap()).unwrap();
    assert_eq!(manifest.scenario, scenario);

    let mut doomed = paths::straight_line_scenario();
    doomed.initial_state.beta2 = 1.4;
    let (status, body) = post_json(&app, "/api/v1/export", &doomed).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(as_json(&body)["error"].as_str().unwrap().contains("does not reach the goal"));
}

#[tokio::test]
async fn static_assets_are_served_beside_the_api() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>lab</h1>").unwrap();
    let app = router(Arc::new(AppState::default()), Some(dir.path().to_path_buf()));
    let (status, body) = call(&app, "GET", "/index.html", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(&body[..], b"<h1>lab</h1>");
    let (status, _) = call(&app, "GET", "/api/v1/defaults", None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn live_socket_streams_the_same_rows_as_a_plain_request() {
    let state = Arc::new(AppState::default());
    let app = router(Arc::clone(&state), None);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });

    let scenario = short_straight();
    let (_, plain) = post_json(&router(state, None), "/api/v1/simulate", &scenario).await;
    let plain: SimResponse = serde_json::from_slice(&plain).unwrap();

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/api/v1/live")).await.unwrap();
    use tokio_tungstenite::tungstenite::Message;

    // malformed input reports an error and leaves the socket usable
    ws.send(Message::text("{oops")).await.unwrap();
    let first = ws.next().await.unwrap().unwrap();
    match serde_json::from_str::<LiveMessage>(first.to_text().unwrap()).unwrap() {
        LiveMessage::Error(e) => assert_eq!(e.status, 0, "status is not part of the wire format"),
        other => panic!("expected an error, got {other:?}"),
    }

    ws.send(Message::text(serde_json::to_string(&scenario).unwrap())).await.unwrap();
    let mut rows = Vec::new();
    let mut batches = 0;
    loop {
        let msg = ws.next().await.unwrap().unwrap();
        match serde_json::from_str::<LiveMessage>(msg.to_text().unwrap()).unwrap() {
            LiveMessage::Rows { rows: batch } => {
                assert!(!batch.is_empty());
                batches += 1;
                rows.extend(batch);
            }
            LiveMessage::Done { status, rows: n, report } => {
                assert_eq!(n, rows.len());
                assert_eq!(status, plain.report.status);
                assert_eq!(report, plain.report);
                break;
            }
            LiveMessage::Error(e) => panic!("{e:?}"),
        }
    }
    assert!(batches >= 1);
    assert_eq!(serde_json::to_string(&rows).unwrap(), serde_json::to_string(&plain.trace.rows).unwrap());
    ws.close(None).await.unwrap();
}
