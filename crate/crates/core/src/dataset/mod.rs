//! Training records for an intent predictor, built from a densely
//! annotated corpus.
//!
//! For every image the most edge-dense regions are picked, their masks are
//! grown by a random radius, the grown area is inpainted from an empty
//! prompt and the original edges are drawn back over the region. The result
//! imitates a canvas where a user sketched the object with the add brush.

mod corpus;
mod inpaint;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use corpus::{
    build_corpus, load_annotated, load_corpus_entries, write_annotated, CorpusConfig, CorpusSummary, DensityStats,
    InpainterKind, RECORDS_FILE, SUMMARY_FILE,
};
pub use inpaint::{Inpainter, MeanFill, ToyDiffusionInpainter};

use crate::condition::{extract_edges, grow_union, ConditionError, GradientExtractor, StrokeKind};
use crate::guess::{normalize_bbox, BBox, GuessError, MAX_PHRASE_WORDS};
use crate::image::{ensure_same_dims, BinaryMask, EdgeMap, Image, RasterError};

pub const DEFAULT_TOP_K: usize = 5;
pub const AUGMENT_MIN_RADIUS: u32 = 5;
pub const AUGMENT_MAX_RADIUS: u32 = 25;

/// Leading words removed by [`clean_label`].
pub const STOP_WORDS: &[&str] = &[
    "a", "an", "the", "some", "several", "many", "few", "a few", "any", "each", "every", "this", "that", "these",
    "those", "its", "his", "her", "their", "our", "my", "your", "one", "two", "three", "four", "five", "six", "seven",
    "eight", "nine", "ten", "multiple", "various", "lots", "lot", "of", "part", "pair", "group", "piece",
];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("region mask is empty")]
    EmptyMask,
    #[error("region {index} has an empty label")]
    EmptyLabel { index: usize },
    #[error("inpainter `{inpainter}` failed: {reason}")]
    Inpaint { inpainter: String, reason: String },
    #[error("corpus entry {path}: {reason}")]
    Corpus { path: String, reason: String },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error(transparent)]
    Guess(#[from] GuessError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub mask: BinaryMask,
    pub label: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub id: String,
    pub image: Image,
    pub regions: Vec<Region>,
}

impl AnnotatedImage {
    pub fn new(id: impl Into<String>, image: Image, regions: Vec<Region>) -> Result<Self, DatasetError> {
        for (index, r) in regions.iter().enumerate() {
            ensure_same_dims(image.dims(), r.mask.dims())?;
            if r.label.trim().is_empty() {
                return Err(DatasetError::EmptyLabel { index });
            }
        }
        Ok(Self {
            id: id.into(),
            image,
            regions,
        })
    }
}

/// One emitted Q&A example. `image` is relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub source: String,
    pub region: usize,
    pub image: String,
    pub bbox: BBox,
    pub label: String,
    pub raw_label: String,
    pub kind: StrokeKind,
    pub prompt: String,
    pub edge_density: f64,
    pub augment_radius: u32,
}

impl DatasetRecord {
    /// Schema check applied to every record before it is written.
    pub fn validate(&self) -> Result<(), String> {
        let b = &self.bbox;
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(b.x1) && unit(b.y1) && unit(b.x2) && unit(b.y2) && b.x1 < b.x2 && b.y1 < b.y2) {
            return Err(format!("invalid bbox {b:?}"));
        }
        let words = self.label.split_whitespace().count();
        if words == 0 || words > MAX_PHRASE_WORDS {
            return Err(format!("label `{}` has {words} words", self.label));
        }
        if !(0.0..=1.0).contains(&self.edge_density) {
            return Err(format!("edge density {} outside [0, 1]", self.edge_density));
        }
        if self.image.is_empty() || self.prompt.is_empty() {
            return Err("missing image or prompt".into());
        }
        Ok(())
    }
}

/// Mean edge strength inside `mask`.
pub fn edge_density(mask: &BinaryMask, edges: &EdgeMap) -> Result<f64, DatasetError> {
    ensure_same_dims(mask.dims(), edges.dims())?;
    if mask.is_empty() {
        return Err(DatasetError::EmptyMask);
    }
    let sum: f64 = mask
        .bits()
        .iter()
        .zip(edges.data())
        .filter(|(m, _)| **m)
        .map(|(_, e)| f64::from(*e))
        .sum();
    Ok(sum / mask.count() as f64)
}

/// Region indices with their densities, densest first. Ties keep annotation
/// order; empty regions are skipped.
pub fn rank_regions(annotated: &AnnotatedImage, edges: &EdgeMap) -> Result<Vec<(usize, f64)>, DatasetError> {
    let mut ranked = Vec::with_capacity(annotated.regions.len());
    for (i, r) in annotated.regions.iter().enumerate() {
        if r.mask.is_empty() {
            continue;
        }
        ranked.push((i, edge_density(&r.mask, edges)?));
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}

/// The `k` regions with the highest edge density under the gradient extractor.
pub fn select_top_masks(annotated: &AnnotatedImage, k: usize) -> Result<Vec<(usize, f64)>, DatasetError> {
    let edges = extract_edges(&annotated.image, &GradientExtractor)?;
    let mut ranked = rank_regions(annotated, &edges)?;
    ranked.truncate(k);
    Ok(ranked)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanLabel {
    pub text: String,
    /// The stop-list removed everything, so the lowercased input was kept.
    pub fallback: bool,
}

/// Lowercases, drops trailing punctuation and leading [`STOP_WORDS`], and
/// keeps at most [`MAX_PHRASE_WORDS`] words.
pub fn clean_label_checked(label: &str) -> CleanLabel {
    let lowered = label.trim().to_lowercase();
    let trimmed = lowered.trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    let mut words: Vec<&str> = trimmed.split_whitespace().collect();
    while let Some(first) = words.first() {
        if STOP_WORDS.contains(first) {
            words.remove(0);
        } else {
            break;
        }
    }
    words.truncate(MAX_PHRASE_WORDS);
    if words.is_empty() {
        let mut fallback: Vec<&str> = lowered.split_whitespace().collect();
        fallback.truncate(MAX_PHRASE_WORDS);
        let text = if fallback.is_empty() { lowered.clone() } else { fallback.join(" ") };
        return CleanLabel { text, fallback: true };
    }
    CleanLabel {
        text: words.join(" "),
        fallback: false,
    }
}

pub fn clean_label(label: &str) -> String {
    clean_label_checked(label).text
}

/// Dilation by a radius drawn from `[AUGMENT_MIN_RADIUS, AUGMENT_MAX_RADIUS]`.
pub fn augment_mask(mask: &BinaryMask, rng: &mut impl Rng) -> Result<(BinaryMask, u32), DatasetError> {
    if mask.is_empty() {
        return Err(DatasetError::EmptyMask);
    }
    let radius = rng.gen_range(AUGMENT_MIN_RADIUS..=AUGMENT_MAX_RADIUS);
    Ok((augment_mask_with_radius(mask, radius)?, radius))
}

pub fn augment_mask_with_radius(mask: &BinaryMask, radius: u32) -> Result<BinaryMask, DatasetError> {
    Ok(grow_union(&[mask], mask.dims(), i64::from(radius))?)
}

/// Draws the edges of the original image back over `region`: each channel
/// is scaled by `1 - e`.
pub fn overlay_edges(inpainted: &Image, edges: &EdgeMap, region: &BinaryMask) -> Result<Image, DatasetError> {
    ensure_same_dims(inpainted.dims(), edges.dims())?;
    ensure_same_dims(inpainted.dims(), region.dims())?;
    Ok(Image::from_fn(inpainted.width(), inpainted.height(), |x, y| {
        let p = inpainted.get(x, y);
        if region.get(x, y) {
            let keep = 1.0 - edges.get(x, y);
            [p[0] * keep, p[1] * keep, p[2] * keep]
        } else {
            p
        }
    })?)
}

/// A record plus the composite it refers to, before anything is written.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltRecord {
    pub record: DatasetRecord,
    pub composite: Image,
    pub label_fallback: bool,
}

/// Builds the record for one region. `edges` is the full-image edge map.
pub fn build_record(
    annotated: &AnnotatedImage,
    region: usize,
    edges: &EdgeMap,
    inpainter: &dyn Inpainter,
    rng: &mut impl Rng,
) -> Result<BuiltRecord, DatasetError> {
    let r = &annotated.regions[region];
    let density = edge_density(&r.mask, edges)?;
    let (grown, radius) = augment_mask(&r.mask, rng)?;
    let seed = rng.gen::<u64>();
    let inpainted = inpainter.inpaint(&annotated.image, &grown, "", seed)?;
    ensure_same_dims(inpainted.dims(), annotated.image.dims())?;
    let composite = overlay_edges(&inpainted, edges, &r.mask)?;
    let bbox = normalize_bbox(&r.mask, &annotated.image)?;
    let cleaned = clean_label_checked(&r.label);
    let id = format!("{}_{:02}", annotated.id, region);
    let record = DatasetRecord {
        image: format!("images/{id}.png"),
        id,
        source: annotated.id.clone(),
        region,
        prompt: crate::guess::format_add_prompt(&bbox),
        bbox,
        label: cleaned.text,
        raw_label: r.label.clone(),
        kind: StrokeKind::Add,
        edge_density: density,
        augment_radius: radius,
    };
    Ok(BuiltRecord {
        record,
        composite,
        label_fallback: cleaned.fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_cleaning() {
        assert_eq!(clean_label("a red sports car"), "red sports car");
        assert_eq!(clean_label("dog"), "dog");
        assert_eq!(clean_label("The Tall Trees."), "tall trees");
        assert_eq!(clean_label("two of the birds!"), "birds");
        let degenerate = clean_label_checked("the ");
        assert_eq!(degenerate.text, "the");
        assert!(degenerate.fallback);
    }

    #[test]
    fn density_extremes() {
        let m = BinaryMask::from_fn(4, 4, |x, _| x < 2).unwrap();
        assert_eq!(edge_density(&m, &EdgeMap::zeros(4, 4).unwrap()).unwrap(), 0.0);
        let ones = EdgeMap::new(4, 4, vec![1.0; 16]).unwrap();
        assert_eq!(edge_density(&m, &ones).unwrap(), 1.0);
        assert!(matches!(
            edge_density(&BinaryMask::empty(4, 4).unwrap(), &ones),
            Err(DatasetError::EmptyMask)
        ));
    }
}
