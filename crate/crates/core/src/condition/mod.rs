//! Brushstroke → condition compilation.
//!
//! Three stroke kinds feed three conditions:
//!
//! * **edge condition**: edges of the source image with subtract strokes
//!   erased (`E ⊙ (1 − M_sub)`) and add strokes painted white
//!   (`E_sub + M_add ⊙ (1 − E_sub)`);
//! * **color condition**: the source alpha-blended with every color stroke
//!   in creation order, then reduced to 16×16 color blocks;
//! * **editing mask**: the union of all stroke masks grown by `p` pixels,
//!   together with the source image zeroed inside it.
//!
//! Everything here is a pure function of its inputs.

mod color;
mod edges;
pub mod io;
mod mask;
pub mod strokes;

pub use color::{blend_color, make_color_condition, COLOR_BLOCK};
pub use edges::{
    apply_add, apply_subtract, extract_edges, EdgeExtractor, ExtractorRegistry, GradientExtractor,
    GRADIENT_EXTRACTOR_ID,
};
pub use mask::{grow_mask, grow_union, make_masked_image};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{BinaryMask, EdgeMap, Image, RasterError};

/// Mask growth used by the editor unless configured otherwise.
pub const DEFAULT_GROW_RADIUS: u32 = 15;

#[derive(Debug, Error)]
pub enum ConditionError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("unknown edge extractor `{0}`")]
    UnknownExtractor(String),
    #[error("edge extractor `{0}` has no backend registered")]
    ExtractorUnavailable(String),
    #[error("expected a color stroke, got {0:?}")]
    NotColorStroke(StrokeKind),
    #[error("image {width}x{height} is smaller than the {block}px color block")]
    TooSmall {
        width: usize,
        height: usize,
        block: usize,
    },
    #[error("negative grow radius {0}")]
    NegativeRadius(i64),
    #[error("at least one stroke is required")]
    NoStrokes,
    #[error("stroke color/opacity outside [0, 1]")]
    InvalidStroke,
    #[error("bundle io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bundle format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrokeKind {
    Add,
    Subtract,
    Color,
}

impl StrokeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrokeKind::Add => "add",
            StrokeKind::Subtract => "subtract",
            StrokeKind::Color => "color",
        }
    }
}

impl std::str::FromStr for StrokeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "add" => Ok(StrokeKind::Add),
            "subtract" => Ok(StrokeKind::Subtract),
            "color" => Ok(StrokeKind::Color),
            other => Err(format!("unknown stroke kind `{other}`")),
        }
    }
}

/// One user gesture, already rasterized to image space.
#[derive(Debug, Clone, PartialEq)]
pub enum BrushStroke {
    Add {
        mask: BinaryMask,
    },
    Subtract {
        mask: BinaryMask,
    },
    Color {
        mask: BinaryMask,
        color: [f32; 3],
        opacity: f32,
    },
}

impl BrushStroke {
    pub fn add(mask: BinaryMask) -> Self {
        BrushStroke::Add { mask }
    }

    pub fn subtract(mask: BinaryMask) -> Self {
        BrushStroke::Subtract { mask }
    }

    pub fn color(mask: BinaryMask, color: [f32; 3], opacity: f32) -> Result<Self, ConditionError> {
        let in_unit = |v: f32| (0.0..=1.0).contains(&v);
        if !color.iter().copied().all(in_unit) || !in_unit(opacity) {
            return Err(ConditionError::InvalidStroke);
        }
        Ok(BrushStroke::Color {
            mask,
            color,
            opacity,
        })
    }

    pub fn kind(&self) -> StrokeKind {
        match self {
            BrushStroke::Add { .. } => StrokeKind::Add,
            BrushStroke::Subtract { .. } => StrokeKind::Subtract,
            BrushStroke::Color { .. } => StrokeKind::Color,
        }
    }

    pub fn mask(&self) -> &BinaryMask {
        match self {
            BrushStroke::Add { mask } | BrushStroke::Subtract { mask } | BrushStroke::Color { mask, .. } => mask,
        }
    }
}

/// Provenance recorded next to a serialized bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub format_version: u32,
    pub grow_radius: u32,
    pub extractor: String,
    pub downsample_kernel: String,
    pub upsample_kernel: String,
    pub color_block: usize,
    pub width: usize,
    pub height: usize,
    /// Generation parameters, filled in by the editor when the bundle is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<GenerationMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub w_inpaint: f64,
    pub w_control: f64,
    pub seed: u64,
    pub prompt: String,
    pub backend: String,
}

/// The compiled editing conditions for one edit.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionBundle {
    pub edge_cond: EdgeMap,
    pub color_cond: Image,
    pub mask: BinaryMask,
    pub masked_image: Image,
    pub meta: BundleMeta,
}

impl ConditionBundle {
    pub fn grow_radius(&self) -> u32 {
        self.meta.grow_radius
    }

    pub fn dims(&self) -> (usize, usize) {
        self.mask.dims()
    }
}

pub(crate) fn bundle_meta(width: usize, height: usize, grow_radius: u32, extractor: &str) -> BundleMeta {
    BundleMeta {
        format_version: 1,
        grow_radius,
        extractor: extractor.to_string(),
        downsample_kernel: crate::resample::CUBIC_KERNEL_ID.to_string(),
        upsample_kernel: crate::resample::NEAREST_KERNEL_ID.to_string(),
        color_block: COLOR_BLOCK,
        width,
        height,
        generation: None,
    }
}

/// Compiles the edge condition, color condition, grown mask and masked image
/// for a list of strokes applied to `image`.
///
/// Subtract strokes are applied before add strokes; color strokes are blended
/// in list order.
pub fn compile_conditions(
    image: &Image,
    strokes: &[BrushStroke],
    grow_radius: u32,
    extractor: &dyn EdgeExtractor,
) -> Result<ConditionBundle, ConditionError> {
    if strokes.is_empty() {
        return Err(ConditionError::NoStrokes);
    }
    let (w, h) = image.dims();
    for s in strokes {
        crate::image::ensure_same_dims((w, h), s.mask().dims())?;
    }

    let edges = extract_edges(image, extractor)?;
    let union_of = |kind: StrokeKind| -> Result<BinaryMask, ConditionError> {
        let mut acc = BinaryMask::empty(w, h)?;
        for s in strokes.iter().filter(|s| s.kind() == kind) {
            acc = acc.union(s.mask())?;
        }
        Ok(acc)
    };
    let e_sub = apply_subtract(&edges, &union_of(StrokeKind::Subtract)?)?;
    let edge_cond = apply_add(&e_sub, &union_of(StrokeKind::Add)?)?;

    let mut blended = image.clone();
    for s in strokes.iter().filter(|s| s.kind() == StrokeKind::Color) {
        blended = blend_color(&blended, s)?;
    }
    let color_cond = make_color_condition(&blended)?;

    let mask = grow_mask(strokes, (w, h), i64::from(grow_radius))?;
    let masked_image = make_masked_image(image, &mask)?;

    Ok(ConditionBundle {
        edge_cond,
        color_cond,
        mask,
        masked_image,
        meta: bundle_meta(w, h, grow_radius, extractor.id()),
    })
}
