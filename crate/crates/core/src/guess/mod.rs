//! Draw&Guess: turning a stroke into a question for an intent predictor and
//! the answer into a generation prompt.
//!
//! Add strokes ask what is being drawn, color strokes ask what lies inside
//! the colored contour (and prefix the answer with a color word), subtract
//! strokes never ask and generate prompt-free.

mod predictor;

pub use predictor::{ExternalPredictor, MockPredictor, MockRule, Predictor, PredictorConfig};

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::condition::{BrushStroke, StrokeKind};
use crate::image::{BinaryMask, Image};

/// Longest phrase accepted from a predictor, in words.
pub const MAX_PHRASE_WORDS: usize = 8;

#[derive(Debug, Error)]
pub enum GuessError {
    #[error("stroke mask is empty")]
    EmptyMask,
    #[error("mask {mask:?} does not match image {image:?}")]
    DimMismatch { mask: (usize, usize), image: (usize, usize) },
    #[error("subtract strokes are not sent to a predictor")]
    NotGuessable,
    #[error("predictor `{predictor}` timed out")]
    Timeout { predictor: String },
    #[error("predictor `{predictor}` unreachable: {reason}")]
    Transport { predictor: String, reason: String },
    #[error("predictor `{predictor}` sent a malformed reply: {reason}")]
    Malformed { predictor: String, reason: String },
    #[error("unknown predictor `{0}`")]
    UnknownPredictor(String),
}

/// Normalized `(x1, y1)` top-left and `(x2, y2)` bottom-right corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn area(&self) -> f64 {
        (self.x2 - self.x1).max(0.0) * (self.y2 - self.y1).max(0.0)
    }

    pub fn intersection(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        w.max(0.0) * h.max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }
}

/// Tight bounding box of `mask` in units of the padded square side.
///
/// The image is padded to a square whose side is its longer dimension with
/// the content anchored top-left. Pixel `x` spans `[x, x + 1)`, so the right
/// and bottom edges use `max + 1`.
pub fn normalize_bbox(mask: &BinaryMask, image: &Image) -> Result<BBox, GuessError> {
    if mask.dims() != image.dims() {
        return Err(GuessError::DimMismatch {
            mask: mask.dims(),
            image: image.dims(),
        });
    }
    let (x0, y0, x1, y1) = mask.bounding_box().ok_or(GuessError::EmptyMask)?;
    let side = image.width().max(image.height()) as f64;
    Ok(BBox {
        x1: x0 as f64 / side,
        y1: y0 as f64 / side,
        x2: (x1 + 1) as f64 / side,
        y2: (y1 + 1) as f64 / side,
    })
}

/// Question for the add brush.
pub fn format_add_prompt(b: &BBox) -> String {
    format!(
        "This is a 'draw and guess' game. I will upload an image containing some strokes. \
         To help you locate the strokes, I will give you the normalized bounding box coordinates of the stokes \
         where their original coordinates are divided by the padded image width and height. \
         The top-left corner of the bounding box is at ({:.2}, {:.2}), and the bottom-right corner is at ({:.2}, {:.2}). \
         Now tell me in a single word a phrase, what am I trying to draw with these strokes in the image?",
        b.x1, b.y1, b.x2, b.y2
    )
}

/// Question for the color brush.
pub fn format_color_prompt(b: &BBox) -> String {
    format!(
        "The user will upload an image containing some contours in red color. \
         To help you locate the contour, I will give you the normalized bounding box coordinates of the stokes \
         where their original coordinates are divided by the padded image width and height. \
         The top-left corner of the bounding box is at ({:.2}, {:.2}), and the bottom-right corner is at ({:.2}, {:.2}). \
         You need to identify what is inside the contours using a single word or phrase.",
        b.x1, b.y1, b.x2, b.y2
    )
}

/// Color words and their sRGB values in `[0, 1]`.
pub const PALETTE: [(&str, [f32; 3]); 16] = [
    ("black", [0.0, 0.0, 0.0]),
    ("white", [1.0, 1.0, 1.0]),
    ("gray", [0.5, 0.5, 0.5]),
    ("red", [1.0, 0.0, 0.0]),
    ("green", [0.0, 0.5, 0.0]),
    ("blue", [0.0, 0.0, 1.0]),
    ("yellow", [1.0, 1.0, 0.0]),
    ("cyan", [0.0, 1.0, 1.0]),
    ("magenta", [1.0, 0.0, 1.0]),
    ("orange", [1.0, 0.647, 0.0]),
    ("brown", [0.647, 0.165, 0.165]),
    ("pink", [1.0, 0.753, 0.796]),
    ("purple", [0.5, 0.0, 0.5]),
    ("lime", [0.0, 1.0, 0.0]),
    ("navy", [0.0, 0.0, 0.5]),
    ("teal", [0.0, 0.5, 0.5]),
];

/// Nearest palette word by Euclidean RGB distance; earlier entries win ties.
pub fn name_color(c: [f32; 3]) -> &'static str {
    let d2 = |p: [f32; 3]| -> f64 { (0..3).map(|i| (c[i] as f64 - p[i] as f64).powi(2)).sum() };
    let mut best = 0;
    for i in 1..PALETTE.len() {
        if d2(PALETTE[i].1) < d2(PALETTE[best].1) {
            best = i;
        }
    }
    PALETTE[best].0
}

/// A question about one stroke.
#[derive(Debug, Clone, PartialEq)]
pub struct GuessRequest {
    /// Canvas with the stroke drawn in.
    pub image: Image,
    pub bbox: BBox,
    pub kind: StrokeKind,
    /// Stroke color, color strokes only.
    pub color: Option<[f32; 3]>,
}

impl GuessRequest {
    /// `None` for subtract strokes, which are never guessed.
    pub fn for_stroke(canvas: &Image, stroke: &BrushStroke) -> Result<Option<Self>, GuessError> {
        let bbox = normalize_bbox(stroke.mask(), canvas)?;
        Ok(match stroke {
            BrushStroke::Subtract { .. } => None,
            BrushStroke::Add { mask } => Some(Self {
                image: render_add(canvas, mask),
                bbox,
                kind: StrokeKind::Add,
                color: None,
            }),
            BrushStroke::Color { mask, color, .. } => Some(Self {
                image: render_contour(canvas, mask),
                bbox,
                kind: StrokeKind::Color,
                color: Some(*color),
            }),
        })
    }

    pub fn prompt(&self) -> String {
        match self.kind {
            StrokeKind::Color => format_color_prompt(&self.bbox),
            _ => format_add_prompt(&self.bbox),
        }
    }
}

/// Sketch strokes drawn in black over the canvas.
pub fn render_add(canvas: &Image, mask: &BinaryMask) -> Image {
    let mut out = canvas.clone();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                out.set(x, y, [0.0, 0.0, 0.0]);
            }
        }
    }
    out
}

/// The stroke outline (mask pixels with a 4-neighbour outside the mask or
/// on the image border) drawn in red.
pub fn render_contour(canvas: &Image, mask: &BinaryMask) -> Image {
    let mut out = canvas.clone();
    let (w, h) = mask.dims();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let edge = x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || !mask.get(x - 1, y)
                || !mask.get(x + 1, y)
                || !mask.get(x, y - 1)
                || !mask.get(x, y + 1);
            if edge {
                out.set(x, y, [1.0, 0.0, 0.0]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentPrediction {
    pub phrase: String,
    pub latency: f64,
    pub predictor: String,
}

/// Checks a raw reply against the phrase contract and returns it trimmed.
pub fn validate_phrase(raw: &str, predictor: &str) -> Result<String, GuessError> {
    let phrase = raw.trim();
    let malformed = |reason: &str| GuessError::Malformed {
        predictor: predictor.to_string(),
        reason: reason.to_string(),
    };
    if phrase.is_empty() {
        return Err(malformed("empty phrase"));
    }
    if phrase.split_whitespace().count() > MAX_PHRASE_WORDS {
        return Err(malformed("phrase longer than 8 words"));
    }
    Ok(phrase.to_string())
}

/// Sends the formatted question to `predictor` and times the round trip.
pub fn predict(req: &GuessRequest, predictor: &dyn Predictor) -> Result<IntentPrediction, GuessError> {
    if req.kind == StrokeKind::Subtract {
        return Err(GuessError::NotGuessable);
    }
    let prompt = req.prompt();
    let start = Instant::now();
    let raw = predictor.answer(&req.image, &prompt, req)?;
    let phrase = validate_phrase(&raw, predictor.id())?;
    Ok(IntentPrediction {
        phrase,
        latency: start.elapsed().as_secs_f64(),
        predictor: predictor.id().to_string(),
    })
}

/// Guesses for one stroke; subtract strokes return `None` without calling
/// the predictor.
pub fn guess_stroke(
    canvas: &Image,
    stroke: &BrushStroke,
    predictor: &dyn Predictor,
) -> Result<Option<IntentPrediction>, GuessError> {
    match GuessRequest::for_stroke(canvas, stroke)? {
        Some(req) => predict(&req, predictor).map(Some),
        None => Ok(None),
    }
}

/// Add: the phrase. Color: `"<color word> <phrase>"`. Subtract: empty.
pub fn compose_generation_prompt(kind: StrokeKind, phrase: &str, color: Option<[f32; 3]>) -> String {
    match (kind, color) {
        (StrokeKind::Subtract, _) => String::new(),
        (StrokeKind::Color, Some(c)) => format!("{} {}", name_color(c), phrase.trim()),
        _ => phrase.trim().to_string(),
    }
}
