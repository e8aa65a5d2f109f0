//! Runs the HTTP service in-process and walks through a session as a
//! client would: create, send a goal, follow the event stream, read the summary.
//!
//! ```bash
//! cargo run -p mixtwin --example service
//! ```

use axum::body::Body;
use axum::http::Request;
use serde_json::{json, Value};
use tower::ServiceExt;

use mixtwin::orchestrator::SessionConfig;
use mixtwin::service::{router, AppState};

async fn request(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> String {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .expect("valid request");
    let resp = app.clone().oneshot(req).await.expect("router is infallible");
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.expect("body");
    println!("{method} {uri} -> {status}");
    String::from_utf8_lossy(&bytes).into_owned()
}

#[tokio::main]
async fn main() {
    let app = router(AppState::new(SessionConfig::default()));
    let created: Value =
        serde_json::from_str(&request(&app, "POST", "/sessions", Some(json!({"seed": 4, "max_runs": 3}))).await).unwrap();
    let id = created["session_id"].as_str().unwrap().to_string();

    let stream = {
        let app = app.clone();
        let uri = format!("/sessions/{id}/events");
        tokio::spawn(async move { request(&app, "GET", &uri, None).await })
    };
    request(&app, "POST", &format!("/sessions/{id}/messages"), Some(json!({"goal": "mix all three types evenly"}))).await;

    let body = stream.await.unwrap();
    for line in body.lines().filter(|l| l.starts_with("event:")) {
        print!("{} ", line.trim_start_matches("event:").trim());
    }
    println!();

    let summary: Value = serde_json::from_str(&request(&app, "GET", &format!("/sessions/{id}/summary"), None).await).unwrap();
    println!("state {}, best run {}", summary["state"], summary["best_run_index"]);
    println!("{}", summary["report"].as_str().unwrap_or_default());
    println!("serve over TCP with: mixtwin serve --port 8080");
}
