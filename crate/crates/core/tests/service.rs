use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use layoutgraph::autocomplete::{RefineConfig, Suggester};
use layoutgraph::extract::ExtractionConfig;
use layoutgraph::model::{gui_from_json, to_canonical_json, Gui, Vocabulary};
use layoutgraph::network::{Network, NetworkConfig};
use layoutgraph::service::{replay, router, AppState, Event};
use serde_json::{json, Value};
use tower::ServiceExt;

const GUI: &str = r#"{"canvas":{"w":360,"h":640},"elements":[
  {"id":"a","kind":"Button","bbox":{"x":20,"y":20,"w":120,"h":40}},
  {"id":"b","kind":"Button","bbox":{"x":20,"y":80,"w":120,"h":40}},
  {"id":"t","kind":"Text","bbox":{"x":160,"y":30,"w":180,"h":20}},
  {"id":"c","kind":"Button","aspect_ratio":3.0},
  {"id":"d","kind":"Text","aspect_ratio":9.0}
]}"#;

fn network() -> Network {
    let mut cfg = NetworkConfig::default().with_node_dim(16);
    cfg.embed.max_coord = 640;
    cfg.classifier_hidden = [8, 8];
    Network::new(cfg, Vocabulary::default(), 1).unwrap()
}

fn state() -> Arc<AppState> {
    Arc::new(AppState::new(network(), RefineConfig::default(), ExtractionConfig::default()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(v) => Body::from(v.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn create(app: &Router, gui: &str) -> String {
    let req = Request::builder().method("POST").uri("/sessions").body(Body::from(gui.to_string())).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::CREATED);
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["version"], 0);
    v["session_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn place_undo_and_replay() {
    let app = router(state());
    let id = create(&app, GUI).await;
    let (s, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["pool"].as_array().unwrap().len(), 2);

    let bbox = json!({"x": 20, "y": 140, "w": 120, "h": 40});
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/place"), Some(json!({"element_id": "c", "bbox": bbox, "expected_version": 0}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["version"], 1);
    assert_eq!(v["pool"].as_array().unwrap().len(), 1);

    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/elements"), Some(json!({"element": {"id": "e", "kind": "Icon", "aspect_ratio": 1.0}}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");

    // stale version
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/undo"), Some(json!({"expected_version": 1}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "conflict");

    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["version"], 3);
    let gui_after: Gui = serde_json::from_value(v["gui"].clone()).unwrap();
    let initial = gui_from_json(GUI.as_bytes()).unwrap();
    // undo restores the element exactly as it was before placement
    assert_eq!(gui_after.element("c"), initial.element("c"));

    let history: Vec<Event> = serde_json::from_value(v["history"].clone()).unwrap();
    let rebuilt = replay(&initial, &history).unwrap();
    assert_eq!(to_canonical_json(&rebuilt), to_canonical_json(&gui_after));

    // nothing left to undo
    let (s, _) = call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn error_statuses() {
    let app = router(state());
    let (s, v) = call(&app, "GET", "/sessions/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(v["message"].as_str().unwrap().contains("nope"));

    let req = Request::builder().method("POST").uri("/sessions").body(Body::from("{not json")).unwrap();
    assert_eq!(app.clone().oneshot(req).await.unwrap().status(), StatusCode::UNPROCESSABLE_ENTITY);
    let bad_kind = r#"{"canvas":{"w":10,"h":10},"elements":[{"id":"a","kind":"Spaceship","aspect_ratio":1.0}]}"#;
    let req = Request::builder().method("POST").uri("/sessions").body(Body::from(bad_kind)).unwrap();
    assert_eq!(app.clone().oneshot(req).await.unwrap().status(), StatusCode::UNPROCESSABLE_ENTITY);

    let id = create(&app, GUI).await;
    let (s, _) = call(&app, "POST", &format!("/sessions/{id}/place"), Some(json!({"element_id": "zz", "bbox": {"x": 0, "y": 0, "w": 3, "h": 1}}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "POST", &format!("/sessions/{id}/place"), Some(json!({"element_id": "c", "bbox": {"x": 300, "y": 0, "w": 120, "h": 40}}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call(&app, "GET", &format!("/sessions/{id}/suggest?mode=all&target=c"), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call(&app, "GET", &format!("/sessions/{id}/preview?target=zz"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "POST", &format!("/sessions/{id}/elements"), Some(json!({"element": {"id": "a", "kind": "Icon", "aspect_ratio": 1.0}}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn preview_and_suggest_do_not_mutate() {
    let st = state();
    let app = router(st.clone());
    let id = create(&app, GUI).await;
    let before = st.state_digest();
    let (s, p) = call(&app, "GET", &format!("/sessions/{id}/preview?target=c"), None).await;
    assert_eq!(s, StatusCode::OK, "{p}");
    assert_eq!(p["element_id"], "c");
    for mode in ["single", "group", "all"] {
        let (s, _) = call(&app, "GET", &format!("/sessions/{id}/suggest?mode={mode}"), None).await;
        assert_eq!(s, StatusCode::OK);
    }
    assert_eq!(st.state_digest(), before);

    // a placement does change the digest
    call(&app, "POST", &format!("/sessions/{id}/place"), Some(json!({"element_id": "c", "bbox": p["bbox"]}))).await;
    assert_ne!(st.state_digest(), before);
}

#[tokio::test]
async fn suggest_all_matches_the_library() {
    let net = network();
    let app = router(Arc::new(AppState::new(network(), RefineConfig::default(), ExtractionConfig::default())));
    let id = create(&app, GUI).await;
    let (s, v) = call(&app, "GET", &format!("/sessions/{id}/suggest?mode=all"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["mode"], "all");
    let direct = Suggester { predictor: &net, refine: RefineConfig::default(), extraction: ExtractionConfig::default() }
        .suggest_all(&gui_from_json(GUI.as_bytes()).unwrap())
        .unwrap();
    assert_eq!(v["suggestions"], serde_json::to_value(&direct).unwrap());

    let (_, info) = call(&app, "GET", "/model/info", None).await;
    assert_eq!(info["node_dim"], 16);
}

#[tokio::test]
async fn snapshots_replay_to_the_live_state() {
    let dir = tempfile::tempdir().unwrap();
    let st = Arc::new(AppState::new(network(), RefineConfig::default(), ExtractionConfig::default()).with_snapshots(dir.path().to_path_buf()));
    let app = router(st);
    let id = create(&app, GUI).await;
    call(&app, "POST", &format!("/sessions/{id}/place"), Some(json!({"element_id": "d", "bbox": {"x": 160, "y": 60, "w": 180, "h": 20}}))).await;
    let (_, live) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    let snap: Value = serde_json::from_slice(&std::fs::read(dir.path().join(format!("{id}.json"))).unwrap()).unwrap();
    let initial: Gui = serde_json::from_value(snap["initial"].clone()).unwrap();
    let history: Vec<Event> = serde_json::from_value(snap["history"].clone()).unwrap();
    let live_gui: Gui = serde_json::from_value(live["gui"].clone()).unwrap();
    assert_eq!(to_canonical_json(&replay(&initial, &history).unwrap()), to_canonical_json(&live_gui));
}
