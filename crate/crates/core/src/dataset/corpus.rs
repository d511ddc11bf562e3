//! Corpus layout on disk:
//!
//! ```text
//! CORPUS/<image_id>/image.png
//! CORPUS/<image_id>/regions/<NN>_mask.png
//! CORPUS/<image_id>/regions/<NN>_meta.json   {"label": ..., "description": ...}
//! ```
//!
//! Output: `OUT/records.jsonl`, `OUT/images/<record_id>.png`, `OUT/summary.json`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_record, AnnotatedImage, DatasetError, Inpainter, Region, DEFAULT_TOP_K};
use crate::condition::{extract_edges, GradientExtractor};
use crate::image::{BinaryMask, Image};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
const DENSITY_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InpainterKind {
    ToyDiffusion,
    MeanFill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub seed: u64,
    pub top_k: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            top_k: DEFAULT_TOP_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityStats {
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
    /// Counts over `[0, 1]` in equal-width bins; 1.0 lands in the last bin.
    pub histogram: Vec<usize>,
}

impl DensityStats {
    fn from_values(values: &[f64]) -> Self {
        let mut histogram = vec![0; DENSITY_BINS];
        for &v in values {
            let bin = ((v * DENSITY_BINS as f64) as usize).min(DENSITY_BINS - 1);
            histogram[bin] += 1;
        }
        let (min, max, mean) = if values.is_empty() {
            (None, None, None)
        } else {
            (
                Some(values.iter().copied().fold(f64::INFINITY, f64::min)),
                Some(values.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
                Some(values.iter().sum::<f64>() / values.len() as f64),
            )
        };
        Self {
            min,
            max,
            mean,
            histogram,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub inpainter: String,
    pub seed: u64,
    pub top_k: usize,
    pub images: usize,
    pub records: usize,
    pub skipped_entries: Vec<String>,
    pub failed_records: Vec<String>,
    pub distinct_labels: usize,
    pub labels: BTreeMap<String, usize>,
    /// Records whose label was entirely stop words.
    pub label_fallbacks: Vec<String>,
    pub density: DensityStats,
}

fn corpus_err(path: &Path, reason: impl ToString) -> DatasetError {
    DatasetError::Corpus {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct RegionMeta {
    label: String,
    #[serde(default)]
    description: String,
}

/// Image directories in the corpus, sorted by name.
pub fn load_corpus_entries(corpus: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(corpus)? {
        let path = entry?.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

pub fn load_annotated(dir: &Path) -> Result<AnnotatedImage, DatasetError> {
    let id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| corpus_err(dir, "directory name is not UTF-8"))?
        .to_string();
    let image = Image::load_png(&dir.join("image.png")).map_err(|e| corpus_err(dir, e))?;
    let regions_dir = dir.join("regions");
    let mut masks: Vec<PathBuf> = fs::read_dir(&regions_dir)
        .map_err(|e| corpus_err(&regions_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with("_mask.png")))
        .collect();
    masks.sort();
    let mut regions = Vec::with_capacity(masks.len());
    for mask_path in masks {
        let name = mask_path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let stem = name.trim_end_matches("_mask.png");
        let meta_path = regions_dir.join(format!("{stem}_meta.json"));
        let meta: RegionMeta = serde_json::from_str(&fs::read_to_string(&meta_path).map_err(|e| corpus_err(&meta_path, e))?)
            .map_err(|e| corpus_err(&meta_path, e))?;
        let mask = BinaryMask::load_png(&mask_path).map_err(|e| corpus_err(&mask_path, e))?;
        regions.push(Region {
            mask,
            label: meta.label,
            description: meta.description,
        });
    }
    AnnotatedImage::new(id, image, regions).map_err(|e| corpus_err(dir, e))
}

/// Writes `annotated` in the corpus layout under `corpus/<id>/`.
pub fn write_annotated(annotated: &AnnotatedImage, corpus: &Path) -> Result<(), DatasetError> {
    let dir = corpus.join(&annotated.id);
    fs::create_dir_all(dir.join("regions"))?;
    annotated.image.save_png(&dir.join("image.png"))?;
    for (i, r) in annotated.regions.iter().enumerate() {
        r.mask.save_png(&dir.join("regions").join(format!("{i:02}_mask.png")))?;
        let meta = RegionMeta {
            label: r.label.clone(),
            description: r.description.clone(),
        };
        fs::write(
            dir.join("regions").join(format!("{i:02}_meta.json")),
            serde_json::to_string_pretty(&meta)?,
        )?;
    }
    Ok(())
}

/// Streams records for every readable image in `corpus` to `out`.
///
/// Image `i` (in sorted order) draws from its own ChaCha stream `i` of
/// `config.seed`, so output depends only on the corpus contents and seed.
pub fn build_corpus(
    corpus: &Path,
    out: &Path,
    config: &CorpusConfig,
    inpainter: &dyn Inpainter,
) -> Result<CorpusSummary, DatasetError> {
    fs::create_dir_all(out.join("images"))?;
    let mut writer = std::io::BufWriter::new(fs::File::create(out.join(RECORDS_FILE))?);
    let mut summary = CorpusSummary {
        inpainter: inpainter.id().to_string(),
        seed: config.seed,
        top_k: config.top_k,
        images: 0,
        records: 0,
        skipped_entries: Vec::new(),
        failed_records: Vec::new(),
        distinct_labels: 0,
        labels: BTreeMap::new(),
        label_fallbacks: Vec::new(),
        density: DensityStats::from_values(&[]),
    };
    let mut densities = Vec::new();

    for (index, dir) in load_corpus_entries(corpus)?.into_iter().enumerate() {
        let annotated = match load_annotated(&dir) {
            Ok(a) => a,
            Err(e) => {
                tracing::warn!("skipping corpus entry: {e}");
                summary.skipped_entries.push(dir.file_name().unwrap_or_default().to_string_lossy().into_owned());
                continue;
            }
        };
        summary.images += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(index as u64);
        let edges = extract_edges(&annotated.image, &GradientExtractor)?;
        let mut ranked = super::rank_regions(&annotated, &edges)?;
        ranked.truncate(config.top_k);
        for (region, _) in ranked {
            let built = match build_record(&annotated, region, &edges, inpainter, &mut rng) {
                Ok(b) => b,
                Err(e) => {
                    tracing::warn!("skipping record {}_{region:02}: {e}", annotated.id);
                    summary.failed_records.push(format!("{}_{region:02}", annotated.id));
                    continue;
                }
            };
            if let Err(reason) = built.record.validate() {
                tracing::warn!("record {} failed validation: {reason}", built.record.id);
                summary.failed_records.push(built.record.id.clone());
                continue;
            }
            built.composite.save_png(&out.join(&built.record.image))?;
            serde_json::to_writer(&mut writer, &built.record)?;
            writer.write_all(b"\n")?;
            if built.label_fallback {
                summary.label_fallbacks.push(built.record.id.clone());
            }
            *summary.labels.entry(built.record.label.clone()).or_default() += 1;
            densities.push(built.record.edge_density);
            summary.records += 1;
        }
    }
    writer.flush()?;
    summary.distinct_labels = summary.labels.len();
    summary.density = DensityStats::from_values(&densities);
    fs::write(out.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
