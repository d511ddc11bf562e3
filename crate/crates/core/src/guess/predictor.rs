use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{name_color, BBox, GuessError, GuessRequest};
use crate::image::Image;

/// Answers Draw&Guess questions.
pub trait Predictor: Send + Sync {
    fn id(&self) -> &str;

    /// Raw reply text for `prompt` about `image`.
    fn answer(&self, image: &Image, prompt: &str, req: &GuessRequest) -> Result<String, GuessError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub region: BBox,
    pub phrase: String,
}

/// Deterministic stand-in: the rule whose region overlaps the stroke box
/// most wins (earlier rules win ties); with no overlap the phrase names the
/// mean color under the box.
#[derive(Debug, Clone, Default)]
pub struct MockPredictor {
    pub rules: Vec<MockRule>,
    /// Artificial latency per call.
    pub delay: Duration,
    calls: Arc<AtomicUsize>,
}

impl MockPredictor {
    pub fn new(rules: Vec<MockRule>) -> Self {
        Self {
            rules,
            ..Self::default()
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    /// Shared call counter; clones of the predictor share it.
    pub fn calls(&self) -> Arc<AtomicUsize> {
        self.calls.clone()
    }

    pub fn lookup(&self, image: &Image, bbox: &BBox) -> String {
        let mut best: Option<(f64, &MockRule)> = None;
        for rule in &self.rules {
            let overlap = rule.region.intersection(bbox);
            if overlap > 0.0 && best.map_or(true, |(b, _)| overlap > b) {
                best = Some((overlap, rule));
            }
        }
        match best {
            Some((_, rule)) => rule.phrase.clone(),
            None => format!("{} object", name_color(mean_color(image, bbox))),
        }
    }
}

fn mean_color(image: &Image, b: &BBox) -> [f32; 3] {
    let side = image.width().max(image.height()) as f64;
    let px = |v: f64, lim: usize| ((v * side).floor() as usize).min(lim);
    let (x0, y0) = (px(b.x1, image.width() - 1), px(b.y1, image.height() - 1));
    let (x1, y1) = (px(b.x2, image.width()).max(x0 + 1), px(b.y2, image.height()).max(y0 + 1));
    let mut acc = [0f64; 3];
    for y in y0..y1 {
        for x in x0..x1 {
            let p = image.get(x, y);
            for c in 0..3 {
                acc[c] += p[c] as f64;
            }
        }
    }
    let n = ((x1 - x0) * (y1 - y0)) as f64;
    acc.map(|v| (v / n) as f32)
}

impl Predictor for MockPredictor {
    fn id(&self) -> &str {
        "mock"
    }

    fn answer(&self, image: &Image, _prompt: &str, req: &GuessRequest) -> Result<String, GuessError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        Ok(self.lookup(image, &req.bbox))
    }
}

/// Forwards the question over HTTP: `POST {endpoint}` with
/// `{"image": <base64 PNG>, "prompt": <text>}`, expecting `{"text": <reply>}`.
pub struct ExternalPredictor {
    endpoint: String,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    image: String,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct WireReply {
    text: String,
}

impl ExternalPredictor {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, GuessError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GuessError::Transport {
                predictor: "external".into(),
                reason: e.to_string(),
            })?;
        Ok(Self {
            endpoint: endpoint.into(),
            client,
        })
    }
}

impl Predictor for ExternalPredictor {
    fn id(&self) -> &str {
        "external"
    }

    fn answer(&self, image: &Image, prompt: &str, _req: &GuessRequest) -> Result<String, GuessError> {
        let body = WireRequest {
            image: base64::engine::general_purpose::STANDARD.encode(image.encode_png()),
            prompt,
        };
        let id = self.id().to_string();
        let resp = self.client.post(&self.endpoint).json(&body).send().map_err(|e| {
            if e.is_timeout() {
                GuessError::Timeout { predictor: id.clone() }
            } else {
                GuessError::Transport {
                    predictor: id.clone(),
                    reason: e.to_string(),
                }
            }
        })?;
        if !resp.status().is_success() {
            return Err(GuessError::Transport {
                predictor: id,
                reason: format!("status {}", resp.status()),
            });
        }
        let reply: WireReply = resp.json().map_err(|e| {
            if e.is_timeout() {
                GuessError::Timeout { predictor: id.clone() }
            } else {
                GuessError::Malformed {
                    predictor: id.clone(),
                    reason: e.to_string(),
                }
            }
        })?;
        Ok(reply.text.trim().to_string())
    }
}

/// Predictor selection as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorConfig {
    Mock {
        #[serde(default)]
        rules: Vec<MockRule>,
        #[serde(default)]
        delay_ms: u64,
    },
    External {
        endpoint: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_timeout_ms() -> u64 {
    10_000
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig::Mock {
            rules: Vec::new(),
            delay_ms: 0,
        }
    }
}

impl PredictorConfig {
    pub fn build(&self) -> Result<Arc<dyn Predictor>, GuessError> {
        Ok(match self {
            PredictorConfig::Mock { rules, delay_ms } => {
                Arc::new(MockPredictor::new(rules.clone()).with_delay(Duration::from_millis(*delay_ms)))
            }
            PredictorConfig::External { endpoint, timeout_ms } => {
                Arc::new(ExternalPredictor::new(endpoint.clone(), Duration::from_millis(*timeout_ms))?)
            }
        })
    }
}
