use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use structex::intake::{router, IssueStore};
use tower::ServiceExt;

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, Value, axum::http::HeaderMap) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value, headers)
}

fn post(body: Value) -> Request<Body> {
    Request::post("/reports")
        .header("content-type", "application/json")
        .header("origin", "null")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn list(paper: &str) -> Request<Body> {
    Request::get(format!("/reports/{paper}")).body(Body::empty()).unwrap()
}

#[tokio::test]
async fn submit_and_list() {
    let app = router(Arc::new(IssueStore::in_memory()));
    let (status, body, headers) = call(&app, post(json!({"paperId": "2401.1", "snippet": "Fig 2 alt", "description": "no alt text"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body, json!({"reportId": 1}));
    assert!(headers.contains_key("access-control-allow-origin"));

    let (_, body, _) = call(&app, post(json!({"paperId": "2401.1", "snippet": " fig  2 ALT", "description": "same"}))).await;
    assert_eq!(body, json!({"reportId": 2, "duplicateOf": 1}));
    call(&app, post(json!({"paperId": "2401.1", "description": "general"}))).await;

    let (status, body, _) = call(&app, list("2401.1")).await;
    assert_eq!(status, StatusCode::OK);
    let ids: Vec<u64> = body.as_array().unwrap().iter().map(|r| r["reportId"].as_u64().unwrap()).collect();
    assert_eq!(ids, vec![3, 1]);
    assert!(body[0].get("snippet").is_none());
    assert_eq!(body[1]["paperId"], "2401.1");

    let (_, body, _) = call(&app, list("unknown")).await;
    assert_eq!(body, json!([]));
}

#[tokio::test]
async fn validation_errors_are_400() {
    let app = router(Arc::new(IssueStore::in_memory()));
    let (status, body, _) = call(&app, post(json!({"paperId": "", "description": "x"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("paperId"));
    let (status, _, _) = call(&app, post(json!({"paperId": "p", "description": "  "}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn cors_preflight_is_allowed() {
    let app = router(Arc::new(IssueStore::in_memory()));
    let req = Request::options("/reports")
        .header("origin", "file://")
        .header("access-control-request-method", "POST")
        .header("access-control-request-headers", "content-type")
        .body(Body::empty())
        .unwrap();
    let (status, _, headers) = call(&app, req).await;
    assert!(status.is_success());
    assert!(headers.contains_key("access-control-allow-methods"));
}

#[tokio::test]
async fn concurrent_submissions_get_distinct_ids() {
    let store = Arc::new(IssueStore::in_memory());
    let app = router(store.clone());
    let mut tasks = Vec::new();
    for i in 0..32 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            call(&app, post(json!({"paperId": format!("p{}", i % 4), "snippet": "same text", "description": "d"}))).await
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap().0, StatusCode::CREATED);
    }
    let all = store.all();
    let mut ids: Vec<u64> = all.iter().map(|r| r.report_id).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 32);
    for p in 0..4 {
        assert_eq!(store.list(&format!("p{p}")).len(), 1);
    }
}
