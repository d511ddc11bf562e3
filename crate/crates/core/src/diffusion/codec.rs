//! Image ↔ latent mapping.
//!
//! `patchify` is an exact space-to-depth rearrangement: each `f×f` RGB
//! patch becomes `3·f²` channels of one latent pixel. `learned` projects
//! patches onto a principal-component basis fitted to training images, which
//! compresses but no longer inverts exactly.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::DiffusionError;
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodecMode {
    Patchify,
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub mode: CodecMode,
    pub spatial_factor: usize,
    /// Only used by the learned codec; defaults to `3·f²`.
    #[serde(default)]
    pub latent_channels: Option<usize>,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            mode: CodecMode::Patchify,
            spatial_factor: 4,
            latent_channels: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedCodec {
    factor: usize,
    /// Patch mean, length `3·f²`.
    mean: Vec<f64>,
    /// Row-major `k × 3·f²`, orthonormal rows.
    basis: Vec<f64>,
    /// Multiplier that brings coefficients to roughly unit variance.
    scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LatentCodec {
    Patchify { factor: usize },
    Learned(LearnedCodec),
}

fn patch_vectors(image: &Image, f: usize) -> Vec<Vec<f64>> {
    let (w, h) = image.dims();
    let mut out = Vec::with_capacity((w / f) * (h / f));
    for py in 0..h / f {
        for px in 0..w / f {
            let mut v = vec![0.0; 3 * f * f];
            for dy in 0..f {
                for dx in 0..f {
                    let p = image.get(px * f + dx, py * f + dy);
                    for c in 0..3 {
                        v[c * f * f + dy * f + dx] = p[c] as f64;
                    }
                }
            }
            out.push(v);
        }
    }
    out
}

impl LatentCodec {
    pub fn patchify(factor: usize) -> Self {
        LatentCodec::Patchify { factor }
    }

    pub fn from_config(config: &CodecConfig, fit_images: &[Image]) -> Result<Self, DiffusionError> {
        match config.mode {
            CodecMode::Patchify => Ok(Self::patchify(config.spatial_factor)),
            CodecMode::Learned => {
                let k = config.latent_channels.unwrap_or(3 * config.spatial_factor.pow(2));
                Ok(LatentCodec::Learned(LearnedCodec::fit(fit_images, config.spatial_factor, k)?))
            }
        }
    }

    pub fn factor(&self) -> usize {
        match self {
            LatentCodec::Patchify { factor } => *factor,
            LatentCodec::Learned(l) => l.factor,
        }
    }

    pub fn latent_channels(&self) -> usize {
        match self {
            LatentCodec::Patchify { factor } => 3 * factor * factor,
            LatentCodec::Learned(l) => l.basis.len() / l.mean.len(),
        }
    }

    pub fn mode(&self) -> CodecMode {
        match self {
            LatentCodec::Patchify { .. } => CodecMode::Patchify,
            LatentCodec::Learned(_) => CodecMode::Learned,
        }
    }

    pub fn latent_dims(&self, width: usize, height: usize) -> Result<(usize, usize), DiffusionError> {
        let f = self.factor();
        if width % f != 0 || height % f != 0 {
            return Err(DiffusionError::NotDivisible { width, height, factor: f });
        }
        Ok((width / f, height / f))
    }

    /// Raw latent: patchify values stay in `[0, 1]`.
    pub fn encode(&self, image: &Image) -> Result<Tensor, DiffusionError> {
        let (lw, lh) = self.latent_dims(image.width(), image.height())?;
        let f = self.factor();
        let c = self.latent_channels();
        let mut data = vec![0.0; c * lh * lw];
        for (pi, v) in patch_vectors(image, f).into_iter().enumerate() {
            let coeffs = match self {
                LatentCodec::Patchify { .. } => v,
                LatentCodec::Learned(l) => l.project(&v),
            };
            for (ch, val) in coeffs.into_iter().enumerate() {
                data[ch * lh * lw + pi] = val;
            }
        }
        Ok(Tensor::new(vec![c, lh, lw], data))
    }

    /// Inverse of [`LatentCodec::encode`]; values are clamped to `[0, 1]`.
    pub fn decode(&self, latent: &Tensor) -> Result<Image, DiffusionError> {
        let (c, lh, lw) = latent.chw();
        if c != self.latent_channels() {
            return Err(DiffusionError::Shape(format!(
                "latent has {c} channels, codec expects {}",
                self.latent_channels()
            )));
        }
        let f = self.factor();
        let (w, h) = (lw * f, lh * f);
        let mut pixels = vec![0f32; w * h * 3];
        for py in 0..lh {
            for px in 0..lw {
                let pi = py * lw + px;
                let coeffs: Vec<f64> = (0..c).map(|ch| latent.data[ch * lh * lw + pi]).collect();
                let v = match self {
                    LatentCodec::Patchify { .. } => coeffs,
                    LatentCodec::Learned(l) => l.reconstruct(&coeffs),
                };
                for dy in 0..f {
                    for dx in 0..f {
                        let (x, y) = (px * f + dx, py * f + dy);
                        for ch in 0..3 {
                            pixels[(y * w + x) * 3 + ch] = v[ch * f * f + dy * f + dx].clamp(0.0, 1.0) as f32;
                        }
                    }
                }
            }
        }
        Ok(Image::new(w, h, pixels)?)
    }

    /// Latent in the denoiser's working range (roughly zero-mean, unit scale).
    pub fn encode_model(&self, image: &Image) -> Result<Tensor, DiffusionError> {
        let raw = self.encode(image)?;
        Ok(match self {
            LatentCodec::Patchify { .. } => Tensor::new(raw.shape.clone(), raw.data.iter().map(|v| 2.0 * v - 1.0).collect()),
            LatentCodec::Learned(l) => raw.scaled(l.scale),
        })
    }

    pub fn decode_model(&self, latent: &Tensor) -> Result<Image, DiffusionError> {
        let raw = match self {
            LatentCodec::Patchify { .. } => {
                Tensor::new(latent.shape.clone(), latent.data.iter().map(|v| (v + 1.0) / 2.0).collect())
            }
            LatentCodec::Learned(l) => latent.scaled(1.0 / l.scale),
        };
        self.decode(&raw)
    }

    pub(crate) fn learned_parts(&self) -> Option<(&[f64], &[f64], f64)> {
        match self {
            LatentCodec::Learned(l) => Some((&l.mean, &l.basis, l.scale)),
            _ => None,
        }
    }

    pub(crate) fn learned_from_parts(factor: usize, mean: Vec<f64>, basis: Vec<f64>, scale: f64) -> Self {
        LatentCodec::Learned(LearnedCodec {
            factor,
            mean,
            basis,
            scale,
        })
    }
}

impl LearnedCodec {
    /// Principal components of all `f×f` patches in `images`.
    pub fn fit(images: &[Image], factor: usize, k: usize) -> Result<Self, DiffusionError> {
        let d = 3 * factor * factor;
        if k == 0 || k > d {
            return Err(DiffusionError::Config(format!("latent_channels must be in 1..={d}")));
        }
        let patches: Vec<Vec<f64>> = images.iter().flat_map(|im| patch_vectors(im, factor)).collect();
        if patches.is_empty() {
            return Err(DiffusionError::Config("learned codec needs fit images".into()));
        }
        let n = patches.len() as f64;
        let mut mean = vec![0.0; d];
        for p in &patches {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v / n;
            }
        }
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for p in &patches {
            for i in 0..d {
                let di = p[i] - mean[i];
                for j in 0..d {
                    cov[(i, j)] += di * (p[j] - mean[j]) / n;
                }
            }
        }
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        // descending eigenvalue, index as tie-break for determinism
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let mut basis = Vec::with_capacity(k * d);
        for &col in order.iter().take(k) {
            let v = eig.eigenvectors.column(col);
            // fix sign so the largest-magnitude component is positive
            let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            basis.extend(v.iter().map(|x| x * sign));
        }
        let top = eig.eigenvalues[order[0]].max(1e-12);
        Ok(Self {
            factor,
            mean,
            basis,
            scale: 1.0 / top.sqrt(),
        })
    }

    fn project(&self, v: &[f64]) -> Vec<f64> {
        let d = self.mean.len();
        self.basis
            .chunks_exact(d)
            .map(|row| row.iter().zip(v.iter().zip(&self.mean)).map(|(b, (x, m))| b * (x - m)).sum())
            .collect()
    }

    fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        let d = self.mean.len();
        let mut out = self.mean.clone();
        for (row, c) in self.basis.chunks_exact(d).zip(coeffs) {
            for (o, b) in out.iter_mut().zip(row) {
                *o += c * b;
            }
        }
        out
    }
}

/// Downsamples a full-resolution `[0, 1]` plane to latent resolution with the
/// same cubic kernel used for color blocks. Values are clamped to `[0, 1]`.
pub fn plane_to_latent(plane: &[f64], width: usize, height: usize, factor: usize) -> Vec<f64> {
    crate::resample::downsample_cubic(plane, width, height, factor)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect()
}
