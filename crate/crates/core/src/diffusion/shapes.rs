//! Procedural colored-shape images used as the toy training distribution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::image::{BinaryMask, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle];

    pub fn word(self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Square => "square",
            ShapeKind::Triangle => "triangle",
        }
    }

    /// Whether the pixel center `(px, py)` lies inside a shape of half-size
    /// `r` centered at `(cx, cy)`.
    pub fn contains(self, px: f64, py: f64, cx: f64, cy: f64, r: f64) -> bool {
        let (dx, dy) = (px - cx, py - cy);
        match self {
            ShapeKind::Circle => dx * dx + dy * dy <= r * r,
            ShapeKind::Square => dx.abs() <= 0.8 * r && dy.abs() <= 0.8 * r,
            ShapeKind::Triangle => {
                // apex up, base at cy + r
                let v = (dy + r) / (2.0 * r);
                (0.0..=1.0).contains(&v) && dx.abs() <= v * r
            }
        }
    }
}

/// Named fill colors; every name is a token of the toy vocabulary.
pub const SHAPE_COLORS: &[(&str, [f32; 3])] = &[
    ("red", [0.9, 0.1, 0.1]),
    ("green", [0.1, 0.75, 0.2]),
    ("blue", [0.1, 0.2, 0.9]),
    ("yellow", [0.95, 0.9, 0.1]),
    ("cyan", [0.1, 0.85, 0.9]),
    ("magenta", [0.85, 0.1, 0.8]),
    ("orange", [0.95, 0.55, 0.1]),
    ("purple", [0.5, 0.15, 0.7]),
    ("white", [0.97, 0.97, 0.97]),
    ("black", [0.05, 0.05, 0.05]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSample {
    pub image: Image,
    /// Exact shape pixels.
    pub shape_mask: BinaryMask,
    /// Rectangle around the shape with a random margin; the simulated stroke.
    pub region: BinaryMask,
    pub kind: ShapeKind,
    pub color_name: &'static str,
    /// `"<color> <shape>"`, or empty when the prompt was dropped.
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeGenerator {
    pub size: usize,
    pub min_radius: f64,
    pub max_radius: f64,
    /// Probability of replacing the prompt with the empty prompt.
    pub prompt_dropout: f64,
    pub min_margin: usize,
    pub max_margin: usize,
}

impl Default for ShapeGenerator {
    fn default() -> Self {
        Self {
            size: 32,
            min_radius: 5.0,
            max_radius: 9.0,
            prompt_dropout: 0.3,
            min_margin: 1,
            max_margin: 6,
        }
    }
}

fn dist(a: [f32; 3], b: [f32; 3]) -> f32 {
    a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f32>().sqrt()
}

impl ShapeGenerator {
    pub fn generate(&self, rng: &mut impl Rng) -> ShapeSample {
        let s = self.size;
        let kind = ShapeKind::ALL[rng.gen_range(0..ShapeKind::ALL.len())];
        let (color_name, color) = SHAPE_COLORS[rng.gen_range(0..SHAPE_COLORS.len())];
        let background = loop {
            let bg = [rng.gen_range(0.15..0.85f32), rng.gen_range(0.15..0.85), rng.gen_range(0.15..0.85)];
            if dist(bg, color) >= 0.45 {
                break bg;
            }
        };
        let r = rng.gen_range(self.min_radius..=self.max_radius);
        let lo = r + 1.0;
        let hi = s as f64 - r - 1.0;
        let cx = rng.gen_range(lo..=hi.max(lo));
        let cy = rng.gen_range(lo..=hi.max(lo));

        let shape_mask = BinaryMask::from_fn(s, s, |x, y| kind.contains(x as f64 + 0.5, y as f64 + 0.5, cx, cy, r))
            .expect("nonzero size");
        let image = Image::from_fn(s, s, |x, y| if shape_mask.get(x, y) { color } else { background })
            .expect("nonzero size");

        let (x0, y0, x1, y1) = shape_mask.bounding_box().expect("shape is non-empty");
        let mut m = || rng.gen_range(self.min_margin..=self.max_margin);
        let (rx0, ry0) = (x0.saturating_sub(m()), y0.saturating_sub(m()));
        let (rx1, ry1) = ((x1 + m()).min(s - 1), (y1 + m()).min(s - 1));
        let region = BinaryMask::from_fn(s, s, |x, y| (rx0..=rx1).contains(&x) && (ry0..=ry1).contains(&y))
            .expect("nonzero size");

        let prompt = if rng.gen_bool(self.prompt_dropout) {
            String::new()
        } else {
            format!("{color_name} {}", kind.word())
        };
        ShapeSample {
            image,
            shape_mask,
            region,
            kind,
            color_name,
            prompt,
        }
    }
}
