use serde::{Deserialize, Serialize};

use crate::condition::{BrushStroke, BundleMeta, StrokeKind, DEFAULT_GROW_RADIUS};
use crate::image::Image;

pub const MAX_BRANCH_WEIGHT: f64 = 2.0;
pub const MAX_GROW: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditParams {
    pub w_inpaint: f64,
    pub w_control: f64,
    pub grow: u32,
    pub seed: u64,
}

impl Default for EditParams {
    fn default() -> Self {
        Self {
            w_inpaint: 1.0,
            w_control: 0.5,
            grow: DEFAULT_GROW_RADIUS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamsPatch {
    pub w_inpaint: Option<f64>,
    pub w_control: Option<f64>,
    pub grow: Option<u32>,
    pub seed: Option<u64>,
}

impl EditParams {
    /// Validates the whole patch before applying any of it.
    pub fn apply(&mut self, patch: &ParamsPatch) -> Result<(), String> {
        for (name, v) in [("w_inpaint", patch.w_inpaint), ("w_control", patch.w_control)] {
            if let Some(v) = v {
                if !(0.0..=MAX_BRANCH_WEIGHT).contains(&v) {
                    return Err(format!("{name} must be in [0, {MAX_BRANCH_WEIGHT}], got {v}"));
                }
            }
        }
        if let Some(p) = patch.grow {
            if p > MAX_GROW {
                return Err(format!("grow must be in [0, {MAX_GROW}], got {p}"));
            }
        }
        self.w_inpaint = patch.w_inpaint.unwrap_or(self.w_inpaint);
        self.w_control = patch.w_control.unwrap_or(self.w_control);
        self.grow = patch.grow.unwrap_or(self.grow);
        self.seed = patch.seed.unwrap_or(self.seed);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub id: u64,
    pub stroke: BrushStroke,
    pub visible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessStatus {
    Idle,
    Pending,
    Ready,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessState {
    /// Incremented for every guessed stroke; a finished prediction is only
    /// stored if its sequence number is still current.
    pub seq: u64,
    pub status: GuessStatus,
    pub layer: Option<u64>,
    pub kind: Option<StrokeKind>,
    pub color: Option<[f32; 3]>,
    pub phrase: Option<String>,
    pub predictor: Option<String>,
    pub latency: Option<f64>,
    pub error: Option<String>,
    /// Predictions abandoned because a newer stroke arrived.
    pub superseded: u64,
}

impl Default for GuessState {
    fn default() -> Self {
        Self {
            seq: 0,
            status: GuessStatus::Idle,
            layer: None,
            kind: None,
            color: None,
            phrase: None,
            predictor: None,
            latency: None,
            error: None,
            superseded: 0,
        }
    }
}

impl GuessState {
    /// Starts a new prediction and returns its sequence number.
    pub fn begin(&mut self, layer: u64, kind: StrokeKind, color: Option<[f32; 3]>) -> u64 {
        if self.status == GuessStatus::Pending {
            self.superseded += 1;
        }
        self.seq += 1;
        *self = GuessState {
            seq: self.seq,
            status: GuessStatus::Pending,
            layer: Some(layer),
            kind: Some(kind),
            color,
            superseded: self.superseded,
            ..GuessState::default()
        };
        self.seq
    }

    /// Returns false for a stale prediction, which is dropped.
    pub fn finish(&mut self, seq: u64, outcome: Result<crate::guess::IntentPrediction, String>) -> bool {
        if seq != self.seq || self.status != GuessStatus::Pending {
            return false;
        }
        match outcome {
            Ok(p) => {
                self.status = GuessStatus::Ready;
                self.phrase = Some(p.phrase);
                self.predictor = Some(p.predictor);
                self.latency = Some(p.latency);
            }
            Err(e) => {
                self.status = GuessStatus::Failed;
                self.error = Some(e);
            }
        }
        true
    }

    /// Generation prompt from a ready prediction, empty otherwise.
    pub fn suggested_prompt(&self) -> String {
        match (self.status, self.kind, &self.phrase) {
            (GuessStatus::Ready, Some(kind), Some(phrase)) => {
                crate::guess::compose_generation_prompt(kind, phrase, self.color)
            }
            _ => String::new(),
        }
    }

    fn reset(&mut self) {
        let (seq, superseded) = (self.seq, self.superseded);
        *self = GuessState {
            seq,
            superseded,
            ..GuessState::default()
        };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultStatus {
    Pending,
    Ready,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    pub id: String,
    pub prompt: String,
    pub status: ResultStatus,
    /// Set once the result is ready.
    pub image: Option<Image>,
    pub meta: Option<BundleMeta>,
    pub layers: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    /// The upload, kept so the accept history can be replayed.
    pub original: Image,
    pub canvas: Image,
    pub layers: Vec<Layer>,
    pub next_layer: u64,
    pub params: EditParams,
    pub guess: GuessState,
    pub results: Vec<GenerationResult>,
    pub next_result: u64,
    /// Accepted result ids, oldest first.
    pub accepted: Vec<String>,
}

impl Session {
    pub fn new(id: String, image: Image) -> Self {
        Self {
            id,
            original: image.clone(),
            canvas: image,
            layers: Vec::new(),
            next_layer: 1,
            params: EditParams::default(),
            guess: GuessState::default(),
            results: Vec::new(),
            next_result: 1,
            accepted: Vec::new(),
        }
    }

    pub fn add_layer(&mut self, stroke: BrushStroke, visible: bool) -> u64 {
        let id = self.next_layer;
        self.next_layer += 1;
        self.layers.push(Layer { id, stroke, visible });
        id
    }

    pub fn remove_layer(&mut self, id: u64) -> bool {
        let before = self.layers.len();
        self.layers.retain(|l| l.id != id);
        self.layers.len() != before
    }

    pub fn in_flight(&self) -> bool {
        self.results.iter().any(|r| r.status == ResultStatus::Pending)
    }

    /// Strokes for a run: `order` picks layers explicitly, otherwise all
    /// visible layers in stack order.
    pub fn strokes_for_run(&self, order: Option<&[u64]>) -> Result<Vec<(u64, BrushStroke)>, String> {
        match order {
            Some(ids) => ids
                .iter()
                .map(|id| {
                    self.layers
                        .iter()
                        .find(|l| l.id == *id)
                        .map(|l| (l.id, l.stroke.clone()))
                        .ok_or_else(|| format!("unknown layer {id}"))
                })
                .collect(),
            None => Ok(self
                .layers
                .iter()
                .filter(|l| l.visible)
                .map(|l| (l.id, l.stroke.clone()))
                .collect()),
        }
    }

    pub fn begin_result(&mut self, prompt: String, layers: Vec<u64>) -> String {
        let id = format!("r{}", self.next_result);
        self.next_result += 1;
        self.results.push(GenerationResult {
            id: id.clone(),
            prompt,
            status: ResultStatus::Pending,
            image: None,
            meta: None,
            layers,
        });
        id
    }

    pub fn result_mut(&mut self, id: &str) -> Option<&mut GenerationResult> {
        self.results.iter_mut().find(|r| r.id == id)
    }

    pub fn result(&self, id: &str) -> Option<&GenerationResult> {
        self.results.iter().find(|r| r.id == id)
    }

    /// Drops a pending result whose generation failed.
    pub fn abandon_result(&mut self, id: &str) {
        self.results.retain(|r| !(r.id == id && r.status == ResultStatus::Pending));
    }

    /// Accept replaces the canvas and clears the layers; reject keeps both.
    pub fn resolve(&mut self, id: &str, accept: bool) -> Result<(), ResolveError> {
        let result = self.results.iter_mut().find(|r| r.id == id).ok_or(ResolveError::Unknown)?;
        if result.status != ResultStatus::Ready {
            return Err(ResolveError::NotReady(result.status));
        }
        if accept {
            result.status = ResultStatus::Accepted;
            self.canvas = result.image.clone().expect("ready results carry an image");
            self.layers.clear();
            self.guess.reset();
            self.accepted.push(id.to_string());
        } else {
            result.status = ResultStatus::Rejected;
            result.image = None;
        }
        Ok(())
    }

    /// Canvas rebuilt from the upload and the accept history.
    pub fn replay_canvas(&self) -> Option<Image> {
        let mut canvas = self.original.clone();
        for id in &self.accepted {
            canvas = self.result(id)?.image.clone()?;
        }
        Some(canvas)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResolveError {
    Unknown,
    NotReady(ResultStatus),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::BinaryMask;

    #[test]
    fn params_patch_is_atomic() {
        let mut p = EditParams::default();
        let err = p.apply(&ParamsPatch {
            w_control: Some(0.2),
            w_inpaint: Some(3.0),
            ..Default::default()
        });
        assert!(err.is_err());
        assert_eq!(p, EditParams::default());
        p.apply(&ParamsPatch {
            w_control: Some(0.2),
            grow: Some(0),
            ..Default::default()
        })
        .unwrap();
        assert_eq!((p.w_control, p.grow), (0.2, 0));
    }

    #[test]
    fn stale_prediction_dropped() {
        let mut g = GuessState::default();
        let first = g.begin(1, StrokeKind::Add, None);
        let second = g.begin(2, StrokeKind::Add, None);
        assert_eq!(g.superseded, 1);
        let pred = |p: &str| {
            Ok(crate::guess::IntentPrediction {
                phrase: p.into(),
                latency: 0.0,
                predictor: "t".into(),
            })
        };
        assert!(!g.finish(first, pred("old")));
        assert!(g.finish(second, pred("new")));
        assert_eq!(g.suggested_prompt(), "new");
    }

    #[test]
    fn resolve_once() {
        let img = Image::filled(4, 4, [0.2; 3]).unwrap();
        let mut s = Session::new("s".into(), img.clone());
        s.add_layer(BrushStroke::add(BinaryMask::full(4, 4).unwrap()), true);
        let rid = s.begin_result(String::new(), vec![1]);
        assert_eq!(s.resolve(&rid, true), Err(ResolveError::NotReady(ResultStatus::Pending)));
        let out = Image::filled(4, 4, [0.7; 3]).unwrap();
        let r = s.result_mut(&rid).unwrap();
        r.status = ResultStatus::Ready;
        r.image = Some(out.clone());
        s.resolve(&rid, true).unwrap();
        assert_eq!(s.canvas, out);
        assert!(s.layers.is_empty());
        assert_eq!(s.resolve(&rid, false), Err(ResolveError::NotReady(ResultStatus::Accepted)));
        assert_eq!(s.replay_canvas().unwrap(), out);
    }
}
