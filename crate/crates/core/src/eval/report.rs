use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{edge_alignment, float_sentinel, psnr, ssim, unmasked_preservation, EvalError, MetricReport, SsimConfig};
use crate::condition::io::load_bundle;
use crate::condition::{ExtractorRegistry, GRADIENT_EXTRACTOR_ID};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub name: String,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    /// Mean over pairs with finite PSNR.
    #[serde(with = "float_sentinel")]
    pub mean_psnr: f64,
    /// Pairs that were pixel-identical (infinite PSNR).
    pub identical: usize,
    pub mean_ssim: f64,
    pub mean_edge_alignment: Option<f64>,
    pub max_unmasked_preservation: Option<f64>,
    pub ssim_config: SsimConfig,
    pub images: Vec<ImageReport>,
}

fn io(e: impl std::fmt::Display) -> EvalError {
    EvalError::Io(e.to_string())
}

/// Scores every `<pred>/<name>.png` against `<reference>/<name>.png`. When
/// `bundles` is given and `<bundles>/<name>/` holds a condition bundle, edge
/// alignment and unmasked preservation are added.
pub fn evaluate_dirs(pred: &Path, reference: &Path, bundles: Option<&Path>) -> Result<EvalReport, EvalError> {
    let mut names: Vec<String> = std::fs::read_dir(pred)
        .map_err(io)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    names.sort();
    let cfg = SsimConfig::default();
    let registry = ExtractorRegistry::with_defaults();
    let mut images = Vec::new();
    for name in names {
        let ref_path = reference.join(format!("{name}.png"));
        if !ref_path.exists() {
            tracing::warn!(%name, "no reference image, skipped");
            continue;
        }
        let p = Image::load_png(&pred.join(format!("{name}.png"))).map_err(io)?;
        let r = Image::load_png(&ref_path).map_err(io)?;
        let mut metrics = MetricReport {
            psnr: psnr(&p, &r)?,
            ssim: ssim(&p, &r, cfg)?,
            edge_alignment: None,
            unmasked_preservation: None,
            ssim_config: cfg,
        };
        if let Some(dir) = bundles.map(|b| b.join(&name)).filter(|d| d.is_dir()) {
            let bundle = load_bundle(&dir)?;
            let id = if bundle.meta.extractor.is_empty() {
                GRADIENT_EXTRACTOR_ID
            } else {
                bundle.meta.extractor.as_str()
            };
            let extractor = registry.resolve(id)?;
            if !bundle.mask.is_empty() {
                metrics.edge_alignment = Some(edge_alignment(&p, &bundle.edge_cond, &bundle.mask, extractor.as_ref())?);
            }
            metrics.unmasked_preservation = Some(unmasked_preservation(&p, &bundle.masked_image, &bundle.mask)?);
        }
        images.push(ImageReport { name, metrics });
    }
    let finite: Vec<f64> = images.iter().map(|i| i.metrics.psnr).filter(|v| v.is_finite()).collect();
    let mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    let ssims: Vec<f64> = images.iter().map(|i| i.metrics.ssim).collect();
    let aligns: Vec<f64> = images.iter().filter_map(|i| i.metrics.edge_alignment).collect();
    let keeps: Vec<f64> = images.iter().filter_map(|i| i.metrics.unmasked_preservation).collect();
    Ok(EvalReport {
        count: images.len(),
        mean_psnr: mean(&finite).unwrap_or(f64::INFINITY),
        identical: images.len() - finite.len(),
        mean_ssim: mean(&ssims).unwrap_or(0.0),
        mean_edge_alignment: mean(&aligns),
        max_unmasked_preservation: keeps.iter().copied().reduce(f64::max),
        ssim_config: cfg,
        images,
    })
}
