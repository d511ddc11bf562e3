//! In-process HTTP client for the editing service plus the shared
//! create → strokes → guess → run → accept scenario.

use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use brushdiff::condition::{compile_conditions, BrushStroke, GradientExtractor};
use brushdiff::guess::{BBox, MockPredictor, MockRule, Predictor};
use brushdiff::image::{BinaryMask, Image};
use brushdiff::service::{router, AppState, Backend, MockBackend, ServiceConfig};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use tower::ServiceExt;

pub struct Client {
    pub app: Router,
}

impl Client {
    pub fn new(config: &ServiceConfig, backend: Arc<dyn Backend>, predictor: Arc<dyn Predictor>) -> Self {
        Self {
            app: router(AppState::new(config, backend, predictor).unwrap()),
        }
    }

    pub fn mock() -> Self {
        Self::new(&ServiceConfig::default(), Arc::new(MockBackend), Arc::new(MockPredictor::new(vec![])))
    }

    pub async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let req = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(v) => req
                .header("content-type", "application/json")
                .body(Body::from(serde_json::to_vec(&v).unwrap())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or(Value::Null)
        };
        (status, value)
    }

    pub async fn typed<T: DeserializeOwned>(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, T) {
        let (s, v) = self.call(method, uri, body).await;
        assert!(s.is_success(), "{uri}: {s} {v}");
        (s, serde_json::from_value(v).unwrap())
    }

    pub async fn create(&self, image: &Image) -> String {
        let (s, v) = self.call(Method::POST, "/sessions", Some(json!({ "image": png_b64(image) }))).await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        v["id"].as_str().unwrap().to_string()
    }

    pub async fn canvas(&self, id: &str) -> (Image, u64) {
        let (_, v) = self.call(Method::GET, &format!("/sessions/{id}/canvas"), None).await;
        let img = Image::decode(&B64.decode(v["image"].as_str().unwrap()).unwrap()).unwrap();
        (img, v["version"].as_u64().unwrap())
    }

    pub async fn stroke(&self, id: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, &format!("/sessions/{id}/strokes"), Some(body)).await
    }

    /// Polls until the guess with sequence number `seq` settles.
    pub async fn settled_guess(&self, id: &str, seq: u64) -> Value {
        let deadline = Instant::now() + Duration::from_secs(5);
        loop {
            let (_, g) = self.call(Method::GET, &format!("/sessions/{id}/guess"), None).await;
            if g["seq"].as_u64() == Some(seq) && g["status"] != "pending" {
                return g;
            }
            assert!(Instant::now() < deadline, "guess {seq} never settled: {g}");
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
    }
}

pub fn png_b64(image: &Image) -> String {
    B64.encode(image.encode_png())
}

pub fn mask_b64(mask: &BinaryMask) -> String {
    B64.encode(mask.encode_png())
}

pub fn rect(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| (x0..x1).contains(&x) && (y0..y1).contains(&y)).unwrap()
}

pub fn decode_png(v: &Value) -> Image {
    Image::decode(&B64.decode(v.as_str().unwrap()).unwrap()).unwrap()
}

pub fn scene(w: usize, h: usize) -> Image {
    Image::from_fn(w, h, |x, y| {
        let g = ((x + y) % 16) as f32 / 15.0;
        if (x / 8 + y / 8) % 2 == 0 {
            [g, 0.3, 0.6]
        } else {
            [0.8, g, 0.2]
        }
    })
    .unwrap()
    .quantize_u8()
}

/// Outcome of the end-to-end editing scenario.
pub struct E2e {
    pub elapsed: Duration,
    pub checks: Vec<(&'static str, bool)>,
}

impl E2e {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|(_, ok)| !*ok).map(|(n, _)| *n).collect()
    }
}

/// Upload, add/subtract/color strokes, mock guess, run, accept.
pub async fn editing_scenario() -> E2e {
    let start = Instant::now();
    let mut checks = Vec::new();
    let predictor = MockPredictor::new(vec![MockRule {
        region: BBox {
            x1: 0.0,
            y1: 0.0,
            x2: 0.5,
            y2: 0.5,
        },
        phrase: "paper lantern".into(),
    }]);
    let calls = predictor.calls();
    let client = Client::new(&ServiceConfig::default(), Arc::new(MockBackend), Arc::new(predictor));
    let (w, h) = (64, 64);
    let original = scene(w, h);
    let id = client.create(&original).await;
    let (canvas, version) = client.canvas(&id).await;
    checks.push(("upload round-trips bit-exactly", canvas == original && version == 0));

    let add = rect(w, h, 8, 8, 40, 24);
    let sub = rect(w, h, 24, 0, 48, 32);
    let paint = rect(w, h, 40, 40, 52, 52);
    let (s1, r1) = client.stroke(&id, json!({"kind": "add", "mask": mask_b64(&add)})).await;
    let add_guess = client.settled_guess(&id, r1["guess_seq"].as_u64().unwrap()).await;
    checks.push((
        "add stroke guessed by the mock",
        s1 == StatusCode::CREATED && r1["guess"] == "pending" && add_guess["phrase"] == "paper lantern",
    ));
    let (s2, r2) = client.stroke(&id, json!({"kind": "subtract", "mask": mask_b64(&sub)})).await;
    checks.push(("subtract stroke skips the guess", s2 == StatusCode::CREATED && r2["guess"] == "skipped"));
    let (s3, r3) = client
        .stroke(&id, json!({"kind": "color", "mask": mask_b64(&paint), "color": [0.9, 0.1, 0.1], "opacity": 1.0}))
        .await;
    let color_guess = client.settled_guess(&id, r3["guess_seq"].as_u64().unwrap()).await;
    checks.push((
        "color stroke guessed with its color",
        s3 == StatusCode::CREATED && color_guess["status"] == "ready" && color_guess["kind"] == "color",
    ));
    checks.push((
        "predictor called once per add/color stroke",
        calls.load(std::sync::atomic::Ordering::SeqCst) == 2,
    ));

    let (s4, run) = client.call(Method::POST, &format!("/sessions/{id}/run"), Some(json!({}))).await;
    let run_ok = s4 == StatusCode::OK && run["status"] == "ready";
    checks.push(("run returns a ready result", run_ok));
    if !run_ok {
        return E2e {
            elapsed: start.elapsed(),
            checks,
        };
    }
    let result = decode_png(&run["image"]);
    checks.push(("run uses the suggested prompt", run["prompt"].as_str().unwrap().contains("red")));

    let strokes = vec![
        BrushStroke::add(add),
        BrushStroke::subtract(sub),
        BrushStroke::color(paint, [0.9, 0.1, 0.1], 1.0).unwrap(),
    ];
    let grow = run["meta"]["grow_radius"].as_u64().unwrap() as u32;
    let bundle = compile_conditions(&original, &strokes, grow, &GradientExtractor).unwrap();
    let mut outside_equal = true;
    let mut inside_changed = false;
    for y in 0..h {
        for x in 0..w {
            let same = result.get(x, y) == original.get(x, y);
            if bundle.mask.get(x, y) {
                inside_changed |= !same;
            } else {
                outside_equal &= same;
            }
        }
    }
    checks.push(("pixels outside the edit mask untouched", outside_equal));
    checks.push(("pixels inside the edit mask regenerated", inside_changed));
    let erased = (0..h).all(|y| {
        (0..w).all(|x| !(strokes[1].mask().get(x, y) && !strokes[0].mask().get(x, y)) || bundle.edge_cond.get(x, y) == 0.0)
    });
    checks.push(("subtracted region carries no edges", erased && bundle.mask.get(44, 28)));

    let rid = run["result"].as_str().unwrap();
    let (s5, summary) = client
        .call(Method::POST, &format!("/sessions/{id}/results/{rid}/resolve"), Some(json!({"accept": true})))
        .await;
    let (after, version) = client.canvas(&id).await;
    checks.push((
        "accept commits the result and clears layers",
        s5 == StatusCode::OK && after == result && version == 1 && summary["layers"].as_array().unwrap().is_empty(),
    ));
    E2e {
        elapsed: start.elapsed(),
        checks,
    }
}
