use std::path::{Path, PathBuf};
use std::sync::Arc;

use artic::conditioning::SYNTH_DIM;
use artic::dataset::{object_to_json, save_object, synth::synth_object};
use artic::diffusion::{save_checkpoint, Denoiser, DenoiserConfig};
use artic::graph::VlmConfig;
use artic::kinematics::{ConnectivityGraph, GraphNode, SemanticLabel};
use artic::retrieval::write_box_meshes;
use artic::service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};

struct Server {
    url: String,
    http: reqwest::Client,
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Server {
    async fn post(&self, path: &str, body: Value) -> (u16, String) {
        let r = self.http.post(format!("{}{path}", self.url)).json(&body).send().await.unwrap();
        (r.status().as_u16(), r.text().await.unwrap())
    }

    async fn post_json(&self, path: &str, body: Value) -> (u16, Value) {
        let (s, t) = self.post(path, body).await;
        (s, serde_json::from_str(&t).unwrap_or(Value::Null))
    }

    async fn get(&self, path: &str) -> (u16, String) {
        let r = self.http.get(format!("{}{path}", self.url)).send().await.unwrap();
        (r.status().as_u16(), r.text().await.unwrap())
    }
}

fn tiny_checkpoint(path: &Path) {
    let cfg = DenoiserConfig {
        layers: 1,
        heads: 2,
        hidden: 16,
        d_f: SYNTH_DIM,
        steps: 20,
        beta_1: 1e-3,
        beta_t: 0.2,
        ..Default::default()
    };
    save_checkpoint(&Denoiser::new(cfg, 1).unwrap(), path).unwrap();
}

async fn start(edit: impl FnOnce(&mut ServiceConfig, &Path)) -> Server {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let mut cfg = ServiceConfig {
        assets_dir: root.join("assets"),
        ..Default::default()
    };
    edit(&mut cfg, &root);
    std::fs::create_dir_all(&cfg.assets_dir).unwrap();
    let state = Arc::new(AppState::new(cfg).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    Server {
        url,
        http: reqwest::Client::new(),
        _dir: dir,
        root,
    }
}

fn with_checkpoint(cfg: &mut ServiceConfig, root: &Path) {
    let p = root.join("tiny.safetensors");
    tiny_checkpoint(&p);
    cfg.checkpoint = Some(p);
}

fn aoj(category: &str, seed: u64) -> Value {
    serde_json::from_str(&object_to_json(&synth_object(category, seed))).unwrap()
}

fn schema(name: &str) -> jsonschema::Validator {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas").join(name);
    let s: Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
    jsonschema::validator_for(&s).unwrap()
}

fn assert_valid(schema_name: &str, v: &Value) {
    let s = schema(schema_name);
    let errors: Vec<String> = s.iter_errors(v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{schema_name}: {errors:?}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn health_before_and_after_load() {
    let s = start(|_, _| {}).await;
    let (code, body) = s.get("/v1/health").await;
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!((code, &v["checkpoint"]), (200, &Value::Null));
    assert_valid("health.schema.json", &v);
    let ck = s.root.join("m1.safetensors");
    tiny_checkpoint(&ck);
    let (code, v) = s.post_json("/v1/admin/checkpoint", json!({"path": ck})).await;
    assert_eq!((code, v["checkpoint"].as_str()), (200, Some("m1")));
    let (code, _) = s.post_json("/v1/admin/checkpoint", json!({"path": s.root.join("missing")})).await;
    assert_eq!(code, 404);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn generate_contract() {
    let s = start(with_checkpoint).await;
    let obj = aoj("Oven", 4);
    let graph = synth_object("Oven", 4).object.graph();
    let pin = [0.1, -0.2, 0.05, 0.02, 0.3, 0.25];
    let req = json!({
        "features": {"synthetic": {"object": obj}},
        "graph": graph,
        "category": "Oven",
        "num_samples": 2,
        "seed": 5,
        "pins": [{"part": graph.nodes[1].0, "row": "bbox", "values": pin}],
    });
    let (c1, b1) = s.post("/v1/generate", req.clone()).await;
    let (c2, b2) = s.post("/v1/generate", req).await;
    assert_eq!((c1, c2), (200, 200), "{b1}");
    assert_eq!(b1, b2);
    let v: Value = serde_json::from_str(&b1).unwrap();
    assert_valid("generate_response.schema.json", &v);
    let samples = v["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 2);
    assert_eq!((samples[0]["seed"].as_u64(), samples[1]["seed"].as_u64()), (Some(5), Some(6)));
    let row: Vec<f64> = serde_json::from_value(samples[0]["rows"][1][0].clone()).unwrap();
    assert_eq!(row, pin);

    // no graph: predicted by the stub from synthetic features
    let (code, v) = s.post_json("/v1/generate", json!({"features": {"synthetic": {"object": aoj("Oven", 4)}}})).await;
    assert_eq!((code, v["graph_source"].as_str()), (200, Some("stub")));

    let big = ConnectivityGraph::from_nodes((0..33).map(|i| GraphNode {
        id: i,
        label: if i == 0 { SemanticLabel::Base } else { SemanticLabel::Drawer },
        parent: (i > 0).then_some(0),
    }));
    let (code, _) = s.post("/v1/generate", json!({"graph": big})).await;
    assert_eq!(code, 422);
    let (code, _) = s.post("/v1/generate", json!({"graph": graph, "pins": [{"part": 77, "row": "axis", "values": [0,0,0,0,0,1]}]})).await;
    assert_eq!(code, 422);
    let r = s.http.post(format!("{}/v1/generate", s.url)).send().await.unwrap();
    assert_eq!(r.status().as_u16(), 400);
    let (code, _) = s.post("/v1/generate", json!({"graph": graph, "num_samples": 0})).await;
    assert_eq!(code, 400);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn generate_without_checkpoint_conflicts() {
    let s = start(|_, _| {}).await;
    let graph = synth_object("Oven", 4).object.graph();
    let (code, v) = s.post_json("/v1/generate", json!({"graph": graph})).await;
    assert_eq!(code, 409);
    assert_valid("error.schema.json", &v);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn predict_graph_endpoints() {
    let s = start(|cfg, _| {
        // nothing listens on port 9 of the loopback
        std::env::set_var("ARTIC_SERVICE_TEST_KEY", "k");
        cfg.vlm = Some(VlmConfig {
            endpoint: "http://127.0.0.1:9/v1".into(),
            api_key_env: "ARTIC_SERVICE_TEST_KEY".into(),
            max_retries: 0,
            timeout_secs: 2.0,
            ..Default::default()
        });
    })
    .await;
    let three = json!({"id": "three", "parts": [
        {"id": 0, "label": "base", "bbox": {"center": [0,0,0], "halfextent": [0.3,0.5,0.5]},
         "joint": {"type": "fixed", "origin": [0,0,0], "direction": [0,0,1], "range": [0,0]}, "parent": null},
        {"id": 1, "label": "door", "bbox": {"center": [0.31,0,0], "halfextent": [0.01,0.5,0.5]},
         "joint": {"type": "revolute", "origin": [0.31,-0.5,0], "direction": [0,0,1], "range": [0,1.5]}, "parent": 0},
        {"id": 2, "label": "handle", "bbox": {"center": [0.34,0.35,0], "halfextent": [0.02,0.03,0.1]},
         "joint": {"type": "fixed", "origin": [0,0,0], "direction": [0,0,1], "range": [0,0]}, "parent": 1}]});
    let (code, v) = s
        .post_json("/v1/graphs/predict", json!({"predictor": "stub", "features": {"synthetic": {"object": three}}}))
        .await;
    assert_eq!(code, 200, "{v}");
    assert_valid("predict_graph_response.schema.json", &v);
    assert_eq!(v["graph"]["nodes"].as_array().unwrap().len(), 3);
    let (code, _) = s.post("/v1/graphs/predict", json!({"predictor": "stub"})).await;
    assert_eq!(code, 400);
    let r = s.http.post(format!("{}/v1/graphs/predict", s.url)).send().await.unwrap();
    assert_eq!(r.status().as_u16(), 400);
    let (code, _) = s
        .post("/v1/graphs/predict", json!({"predictor": "vlm", "image": {"url": "https://example.com/a.png"}}))
        .await;
    assert_eq!(code, 502);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn evaluate_endpoint() {
    let s = start(|cfg, root| cfg.report_csv = Some(root.join("report.csv"))).await;
    let o = aoj("StorageFurniture", 2);
    let (code, v) = s.post_json("/v1/objects", o.clone()).await;
    assert_eq!(code, 200);
    let id = v["id"].as_str().unwrap().to_string();
    let (code, v) = s.post_json("/v1/evaluate", json!({"gen": {"object": o}, "gt": {"id": id}})).await;
    assert_eq!(code, 200, "{v}");
    assert_valid("metric_report.schema.json", &v);
    for k in ["rs_giou", "as_giou", "rs_cdist", "as_cdist"] {
        assert!(v[k].as_f64().unwrap().abs() < 1e-9, "{k}");
    }
    assert_eq!(v["graph_acc"].as_u64(), Some(1));
    let csv = std::fs::read_to_string(s.root.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let (code, _) = s.post("/v1/evaluate", json!({"gen": {"id": "nope"}, "gt": {"id": id}})).await;
    assert_eq!(code, 404);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn retrieve_and_assets() {
    let s = start(|cfg, root| {
        let lib = root.join("lib");
        std::fs::create_dir_all(&lib).unwrap();
        for (cat, seed) in [("StorageFurniture", 7), ("Oven", 3)] {
            let mut r = synth_object(cat, seed);
            write_box_meshes(&mut r, &root.join("meshes")).unwrap();
            save_object(&r, &lib.join(format!("{}.json", r.id))).unwrap();
        }
        cfg.library = Some(lib);
    })
    .await;
    let q = synth_object("StorageFurniture", 7);
    let req = json!({"object": serde_json::from_str::<Value>(&object_to_json(&q)).unwrap()});
    let (code, body) = s.post("/v1/retrieve", req.clone()).await;
    assert_eq!(code, 200, "{body}");
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_valid("retrieve_response.schema.json", &v);
    assert_eq!(v["candidate"]["id"].as_str(), Some(q.id.as_str()));
    for p in v["parts"].as_array().unwrap() {
        assert_eq!(p["source"]["object"].as_str(), Some(q.id.as_str()));
    }
    let (_, again) = s.post("/v1/retrieve", req).await;
    assert_eq!(body, again);
    let id = v["asset_id"].as_str().unwrap();
    let (code, m) = s.get(&format!("/v1/assets/{id}")).await;
    assert_eq!(code, 200);
    assert_valid("asset_manifest.schema.json", &serde_json::from_str(&m).unwrap());
    let (code, urdf) = s.get(&format!("/v1/assets/{id}/object.urdf")).await;
    assert!(code == 200 && urdf.contains("<robot"));
    assert_eq!(s.get(&format!("/v1/assets/{id}/meshes/part_0.obj")).await.0, 200);
    assert_eq!(s.get("/v1/assets/ffff").await.0, 404);
    let (code, v) = s.post_json("/v1/evaluate", json!({"gen": {"asset": id}, "gt": {"asset": id}})).await;
    assert_eq!((code, v["rs_cd"].as_f64()), (200, Some(0.0)));
    let (code, _) = s.post("/v1/retrieve", json!({"object": aoj("Oven", 1), "library": "other"})).await;
    assert_eq!(code, 404);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn empty_library_and_token() {
    let s = start(|cfg, root| {
        let lib = root.join("empty");
        std::fs::create_dir_all(&lib).unwrap();
        cfg.library = Some(lib);
        cfg.token = Some("secret".into());
    })
    .await;
    let (code, _) = s.post("/v1/retrieve", json!({"object": aoj("Oven", 1)})).await;
    assert_eq!(code, 401);
    let r = s
        .http
        .post(format!("{}/v1/retrieve", s.url))
        .header("x-artic-token", "secret")
        .json(&json!({"object": aoj("Oven", 1)}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status().as_u16(), 404);
    assert_eq!(s.get("/v1/health").await.0, 200);
}
