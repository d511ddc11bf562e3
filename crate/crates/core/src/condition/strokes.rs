//! Strokes file: a TOML list of strokes, each pointing at a mask image
//! relative to the strokes file.
//!
//! ```toml
//! [[stroke]]
//! kind = "add"
//! mask = "outline.png"
//!
//! [[stroke]]
//! kind = "color"
//! mask = "hair.png"
//! color = [1.0, 0.0, 0.0]
//! opacity = 0.5
//! ```
//!
//! Any non-black mask pixel is part of the stroke.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BrushStroke, ConditionError, StrokeKind};
use crate::image::BinaryMask;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrokeEntry {
    pub kind: StrokeKind,
    pub mask: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<[f32; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opacity: Option<f32>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StrokesFile {
    #[serde(default, rename = "stroke")]
    pub strokes: Vec<StrokeEntry>,
}

impl StrokeEntry {
    fn into_stroke(self, base: &Path) -> Result<BrushStroke, ConditionError> {
        let mask = BinaryMask::load_png(&base.join(&self.mask))?;
        match (self.kind, self.color, self.opacity) {
            (StrokeKind::Add, None, None) => Ok(BrushStroke::add(mask)),
            (StrokeKind::Subtract, None, None) => Ok(BrushStroke::subtract(mask)),
            (StrokeKind::Color, Some(c), Some(a)) => BrushStroke::color(mask, c, a),
            (kind, ..) => Err(ConditionError::Format(format!(
                "{} stroke `{}`: color and opacity are required for color strokes and forbidden otherwise",
                kind.as_str(),
                self.mask.display()
            ))),
        }
    }
}

pub fn parse_strokes(text: &str, base: &Path) -> Result<Vec<BrushStroke>, ConditionError> {
    let file: StrokesFile = toml::from_str(text).map_err(|e| ConditionError::Format(e.to_string()))?;
    file.strokes.into_iter().map(|e| e.into_stroke(base)).collect()
}

pub fn load_strokes(path: &Path) -> Result<Vec<BrushStroke>, ConditionError> {
    let text = std::fs::read_to_string(path)?;
    parse_strokes(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Writes each stroke mask as `stroke_NN.png` next to `path` and the TOML index at `path`.
pub fn save_strokes(strokes: &[BrushStroke], path: &Path) -> Result<(), ConditionError> {
    let base = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(base)?;
    let mut file = StrokesFile::default();
    for (i, s) in strokes.iter().enumerate() {
        let name = PathBuf::from(format!("stroke_{i:02}.png"));
        s.mask().save_png(&base.join(&name))?;
        let (color, opacity) = match s {
            BrushStroke::Color { color, opacity, .. } => (Some(*color), Some(*opacity)),
            _ => (None, None),
        };
        file.strokes.push(StrokeEntry {
            kind: s.kind(),
            mask: name,
            color,
            opacity,
        });
    }
    let text = toml::to_string_pretty(&file).map_err(|e| ConditionError::Format(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}
