//! Starts the editing service in-process with the mock backend and drives a
//! full session over HTTP: upload, three strokes, guess, run, accept.
//!
//! ```sh
//! cargo run --example edit_service
//! ```
//!
//! The same API is served by `brushdiff serve --config service.toml`.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use brushdiff::guess::{BBox, MockPredictor, MockRule};
use brushdiff::image::Image;
use brushdiff::raster::{rasterize, PathStroke};
use brushdiff::service::{router, AppState, MockBackend, ServiceConfig};
use serde_json::{json, Value};
use std::sync::Arc;

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let predictor = MockPredictor::new(vec![MockRule {
        region: BBox { x1: 0.0, y1: 0.0, x2: 0.5, y2: 0.5 },
        phrase: "sailing boat".into(),
    }]);
    let state = AppState::new(&ServiceConfig::default(), Arc::new(MockBackend), Arc::new(predictor))?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    tokio::spawn(async move { axum::serve(listener, router(state)).await });
    let http = reqwest::Client::new();

    let (w, h) = (96, 96);
    let image = Image::from_fn(w, h, |x, y| [0.3 + x as f32 / 400.0, 0.5, 0.8 - y as f32 / 400.0])?;
    let created: Value = http
        .post(format!("{base}/sessions"))
        .json(&json!({ "image": B64.encode(image.encode_png()) }))
        .send()
        .await?
        .json()
        .await?;
    let id = created["id"].as_str().unwrap_or_default().to_string();
    println!("session {id}");

    let mask = |points: Vec<(f64, f64)>, r| -> anyhow::Result<String> {
        Ok(B64.encode(rasterize(&PathStroke::new(points, r), w, h)?.encode_png()))
    };
    let strokes = [
        json!({ "kind": "subtract", "mask": mask(vec![(70.0, 70.0), (80.0, 80.0)], 3)? }),
        json!({ "kind": "color", "mask": mask(vec![(70.0, 20.0)], 6)?, "color": [1.0, 0.8, 0.0], "opacity": 0.9 }),
        json!({ "kind": "add", "mask": mask(vec![(10.0, 40.0), (25.0, 10.0), (40.0, 40.0), (10.0, 40.0)], 1)? }),
    ];
    for s in strokes {
        let r: Value = http.post(format!("{base}/sessions/{id}/strokes")).json(&s).send().await?.json().await?;
        println!("stroke {} -> layer {}, guess {}", s["kind"], r["layer"], r["guess"]);
    }

    let guess = loop {
        let g: Value = http.get(format!("{base}/sessions/{id}/guess")).send().await?.json().await?;
        if g["status"] != "pending" {
            break g;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    };
    println!("guess: {} (superseded {})", guess["phrase"], guess["superseded"]);

    http.patch(format!("{base}/sessions/{id}/params"))
        .json(&json!({ "w_control": 0.8, "grow": 10 }))
        .send()
        .await?
        .error_for_status()?;
    let run: Value = http.post(format!("{base}/sessions/{id}/run")).json(&json!({})).send().await?.json().await?;
    println!("run {} with prompt {:?}: {}", run["result"], run["prompt"], run["status"]);
    println!("bundle meta: {}", run["meta"]["generation"]);

    let rid = run["result"].as_str().unwrap_or_default();
    let summary: Value = http
        .post(format!("{base}/sessions/{id}/results/{rid}/resolve"))
        .json(&json!({ "accept": true }))
        .send()
        .await?
        .json()
        .await?;
    println!("accepted; layers left: {}", summary["layers"]);
    let canvas: Value = http.get(format!("{base}/sessions/{id}/canvas")).send().await?.json().await?;
    println!("canvas version {} matches result: {}", canvas["version"], canvas["image"] == run["image"]);
    Ok(())
}
