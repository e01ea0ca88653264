use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use gcodeloop::remote::EndpointConfig;
use gcodeloop::tasks::{canonical_tasks, POCKET_DESCRIPTION};
use gcodeloop_service::{router, ServiceConfig, FAILURE_HEADER};

struct Reply {
    status: StatusCode,
    headers: axum::http::HeaderMap,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap()
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    Reply {
        status,
        headers,
        body,
    }
}

fn description(name: &str) -> String {
    canonical_tasks()
        .into_iter()
        .find(|t| t.name == name)
        .unwrap()
        .description
}

async fn create(app: &Router, text: &str) -> (String, Value) {
    let r = call(
        app,
        "POST",
        "/sessions",
        Some(json!({ "description": text })),
    )
    .await;
    assert_eq!(
        r.status,
        StatusCode::CREATED,
        "{}",
        String::from_utf8_lossy(&r.body)
    );
    let v = r.json();
    (v["id"].as_str().unwrap().to_string(), v)
}

/// Creates a session, fills defaults and approves the preview.
async fn ready(app: &Router, name: &str) -> String {
    let (id, _) = create(app, &description(name)).await;
    let r = call(
        app,
        "PATCH",
        &format!("/sessions/{id}/params"),
        Some(json!({ "use_defaults": true })),
    )
    .await;
    assert_eq!(r.json()["missing"], json!([]));
    let r = call(
        app,
        "POST",
        &format!("/sessions/{id}/verify"),
        Some(json!({ "approved": true })),
    )
    .await;
    assert_eq!(r.json()["verified"], json!(true));
    id
}

#[tokio::test]
async fn health_is_ok() {
    let app = router(ServiceConfig::default());
    let r = call(&app, "GET", "/health", None).await;
    assert_eq!(r.status, StatusCode::OK);
}

#[tokio::test]
async fn create_reports_missing_and_shape_count() {
    let app = router(ServiceConfig::default());
    let (_, v) = create(&app, &description("square")).await;
    assert_eq!(v["missing"], json!(["tool_path"]));
    assert_eq!(v["params"]["feed_rate"], json!(100.0));
    assert_eq!(v["shape_count"], json!(1));
    let (_, v) = create(&app, POCKET_DESCRIPTION).await;
    assert_eq!(v["shape_count"], json!(3));
    let r = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({ "description": "" })),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"], json!("bad_request"));
    assert!(r.json()["detail"].is_string());
}

#[tokio::test]
async fn params_patch_shrinks_missing_and_rejects_bad_values() {
    let app = router(ServiceConfig::default());
    let (id, v) = create(&app, "Mill a 50x50 mm square in aluminum, depth 2 mm").await;
    let before = v["missing"].as_array().unwrap().len();
    assert!(v["missing"]
        .as_array()
        .unwrap()
        .contains(&json!("feed_rate")));
    let r = call(
        &app,
        "PATCH",
        &format!("/sessions/{id}/params"),
        Some(json!({ "answers": { "feed_rate": 100 } })),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["missing"].as_array().unwrap().len(), before - 1);
    let r = call(
        &app,
        "PATCH",
        &format!("/sessions/{id}/params"),
        Some(json!({ "answers": { "spindle_speed": -5 } })),
    )
    .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let r = call(
        &app,
        "PATCH",
        "/sessions/nope/params",
        Some(json!({ "answers": {} })),
    )
    .await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

fn line_count(svg: &str) -> usize {
    svg.matches("<line").count()
}

#[tokio::test]
async fn preview_draws_the_reference_path() {
    let app = router(ServiceConfig::default());
    let id = ready(&app, "square").await;
    let r = call(&app, "GET", &format!("/sessions/{id}/preview"), None).await;
    assert_eq!(r.status, StatusCode::OK);
    let v = r.json();
    assert_eq!(line_count(v["svg"].as_str().unwrap()), 4);
    assert_eq!(v["toolpath"]["points"].as_array().unwrap().len(), 5);

    let id = ready(&app, "hexagon").await;
    let v = call(&app, "GET", &format!("/sessions/{id}/preview"), None)
        .await
        .json();
    assert_eq!(line_count(v["svg"].as_str().unwrap()), 6);

    let (id, _) = create(&app, "mill something nice in aluminum").await;
    let r = call(&app, "GET", &format!("/sessions/{id}/preview"), None).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn generation_requires_approval() {
    let app = router(ServiceConfig::default());
    let (id, _) = create(&app, &description("square")).await;
    let r = call(
        &app,
        "POST",
        &format!("/sessions/{id}/generate"),
        Some(json!({})),
    )
    .await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    call(
        &app,
        "PATCH",
        &format!("/sessions/{id}/params"),
        Some(json!({ "use_defaults": true })),
    )
    .await;
    let r = call(
        &app,
        "POST",
        &format!("/sessions/{id}/verify"),
        Some(json!({ "approved": false })),
    )
    .await;
    assert_eq!(r.json()["verified"], json!(false));
    let r = call(
        &app,
        "POST",
        &format!("/sessions/{id}/generate"),
        Some(json!({})),
    )
    .await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    let r = call(
        &app,
        "POST",
        "/sessions/missing/verify",
        Some(json!({ "approved": true })),
    )
    .await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn template_generation_and_download() {
    let app = router(ServiceConfig::default());
    let id = ready(&app, "square").await;
    let r = call(&app, "GET", &format!("/sessions/{id}/gcode"), None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let r = call(
        &app,
        "POST",
        &format!("/sessions/{id}/generate"),
        Some(json!({ "generator": "template" })),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    let v = r.json();
    assert_eq!(v["success"], json!(true));
    assert_eq!(v["trace"][0]["functional"]["distance"], json!(0.0));
    let r = call(&app, "GET", &format!("/sessions/{id}/gcode"), None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(
        String::from_utf8(r.body).unwrap(),
        v["final_gcode"].as_str().unwrap()
    );
}

#[tokio::test]
async fn fault_demo_shows_syntax_then_success() {
    let app = router(ServiceConfig::default());
    let id = ready(&app, "square").await;
    let body =
        json!({ "generator": "fault", "faults": { "attempts": ["syntax"], "then": "none" } });
    let v = call(
        &app,
        "POST",
        &format!("/sessions/{id}/generate"),
        Some(body),
    )
    .await
    .json();
    assert_eq!(v["iterations_used"], json!(2));
    assert_eq!(
        v["trace"][0]["report"]["diagnostics"][0]["rule"],
        json!("SYNTAX")
    );
}

#[tokio::test]
async fn failed_loop_download_carries_summary() {
    let app = router(ServiceConfig::default());
    let id = ready(&app, "square").await;
    let body = json!({ "generator": "fault", "max_iterations": 2, "faults": { "attempts": [], "then": "rapid" } });
    let v = call(
        &app,
        "POST",
        &format!("/sessions/{id}/generate"),
        Some(body),
    )
    .await
    .json();
    assert_eq!(v["success"], json!(false));
    let r = call(&app, "GET", &format!("/sessions/{id}/gcode"), None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let summary = r.headers[FAILURE_HEADER].to_str().unwrap();
    assert!(
        summary.contains("2 attempts") && summary.contains("RAPID_WHILE_CUTTING"),
        "{summary}"
    );
}

#[tokio::test]
async fn remote_down_is_bad_gateway() {
    let closed = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", closed.local_addr().unwrap());
    drop(closed);
    let app = router(ServiceConfig {
        remote: Some(EndpointConfig::new(url, "m")),
        ..Default::default()
    });
    let id = ready(&app, "square").await;
    let r = call(
        &app,
        "POST",
        &format!("/sessions/{id}/generate"),
        Some(json!({ "generator": "remote" })),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_GATEWAY);
    assert_eq!(r.json()["error"], json!("generator_unavailable"));

    let app = router(ServiceConfig::default());
    let id = ready(&app, "square").await;
    let r = call(
        &app,
        "POST",
        &format!("/sessions/{id}/generate"),
        Some(json!({ "generator": "remote" })),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_GATEWAY);
}

#[tokio::test]
async fn sessions_do_not_share_traces() {
    let app = router(ServiceConfig::default());
    let a = ready(&app, "square").await;
    let b = ready(&app, "circle").await;
    let fault =
        json!({ "generator": "fault", "faults": { "attempts": ["functional"], "then": "none" } });
    let (ua, ub) = (
        format!("/sessions/{a}/generate"),
        format!("/sessions/{b}/generate"),
    );
    let (ra, rb) = tokio::join!(
        call(&app, "POST", &ua, Some(fault)),
        call(&app, "POST", &ub, Some(json!({ "generator": "template" }))),
    );
    assert_eq!(ra.json()["iterations_used"], json!(2));
    assert_eq!(rb.json()["iterations_used"], json!(1));
    let ga = call(&app, "GET", &format!("/sessions/{a}/gcode"), None).await;
    let gb = call(&app, "GET", &format!("/sessions/{b}/gcode"), None).await;
    assert_ne!(ga.body, gb.body);
    assert!(String::from_utf8(gb.body).unwrap().contains("G3"));
}

#[tokio::test]
async fn changing_params_revokes_approval() {
    let app = router(ServiceConfig::default());
    let (id, _) = create(
        &app,
        "Mill a 50x50 mm square in aluminum, depth 2 mm, spindle 1200 rpm",
    )
    .await;
    call(
        &app,
        "PATCH",
        &format!("/sessions/{id}/params"),
        Some(json!({ "use_defaults": true })),
    )
    .await;
    let r = call(
        &app,
        "POST",
        &format!("/sessions/{id}/verify"),
        Some(json!({ "approved": true })),
    )
    .await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    let r = call(
        &app,
        "PATCH",
        &format!("/sessions/{id}/params"),
        Some(json!({ "answers": { "feed_rate": 90 } })),
    )
    .await;
    assert_eq!(r.json()["missing"], json!([]));
    let r = call(
        &app,
        "POST",
        &format!("/sessions/{id}/verify"),
        Some(json!({ "approved": true })),
    )
    .await;
    assert_eq!(r.json()["verified"], json!(true));
    let v = call(&app, "GET", &format!("/sessions/{id}"), None)
        .await
        .json();
    assert_eq!(v["verified"], json!(true));
}
