use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DatasetError;
use crate::condition::{bundle_meta, make_color_condition, make_masked_image, ConditionBundle};
use crate::diffusion::{sample_with, Branches, Checkpoint, TokenCondition};
use crate::image::{ensure_same_dims, BinaryMask, EdgeMap, Image};

/// Fills the pixels under `mask`. Pixels outside the mask must come back
/// unchanged.
pub trait Inpainter: Send + Sync {
    fn id(&self) -> &str;
    fn inpaint(&self, image: &Image, mask: &BinaryMask, prompt: &str, seed: u64) -> Result<Image, DatasetError>;
}

/// Replaces masked pixels with the mean of the unmasked pixels 4-adjacent to
/// the mask. A mask covering the whole image falls back to mid-gray.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanFill;

impl MeanFill {
    pub fn boundary_mean(image: &Image, mask: &BinaryMask) -> [f32; 3] {
        let (w, h) = image.dims();
        let mut sum = [0.0f64; 3];
        let mut n = 0usize;
        for y in 0..h {
            for x in 0..w {
                if mask.get(x, y) {
                    continue;
                }
                let touches = (x > 0 && mask.get(x - 1, y))
                    || (x + 1 < w && mask.get(x + 1, y))
                    || (y > 0 && mask.get(x, y - 1))
                    || (y + 1 < h && mask.get(x, y + 1));
                if touches {
                    let p = image.get(x, y);
                    for c in 0..3 {
                        sum[c] += f64::from(p[c]);
                    }
                    n += 1;
                }
            }
        }
        if n == 0 {
            return [0.5; 3];
        }
        sum.map(|s| (s / n as f64) as f32)
    }
}

impl Inpainter for MeanFill {
    fn id(&self) -> &str {
        "mean_fill"
    }

    fn inpaint(&self, image: &Image, mask: &BinaryMask, _prompt: &str, _seed: u64) -> Result<Image, DatasetError> {
        ensure_same_dims(image.dims(), mask.dims())?;
        let fill = Self::boundary_mean(image, mask);
        Ok(Image::from_fn(image.width(), image.height(), |x, y| {
            if mask.get(x, y) {
                fill
            } else {
                image.get(x, y)
            }
        })?)
    }
}

/// Inpainting with a trained checkpoint: inpaint branch on, control branch
/// off, prompt tokenized with the toy vocabulary.
#[derive(Debug, Clone)]
pub struct ToyDiffusionInpainter {
    pub checkpoint: Checkpoint,
}

impl ToyDiffusionInpainter {
    pub fn new(checkpoint: Checkpoint) -> Self {
        Self { checkpoint }
    }
}

impl Inpainter for ToyDiffusionInpainter {
    fn id(&self) -> &str {
        "toy_diffusion"
    }

    fn inpaint(&self, image: &Image, mask: &BinaryMask, prompt: &str, seed: u64) -> Result<Image, DatasetError> {
        let fail = |reason: String| DatasetError::Inpaint {
            inpainter: self.id().to_string(),
            reason,
        };
        let (w, h) = image.dims();
        let bundle = ConditionBundle {
            edge_cond: EdgeMap::zeros(w, h)?,
            color_cond: make_color_condition(image)?,
            mask: mask.clone(),
            masked_image: make_masked_image(image, mask)?,
            meta: bundle_meta(w, h, 0, "none"),
        };
        let ck = &self.checkpoint;
        sample_with(
            &ck.model,
            &ck.codec,
            &bundle,
            &TokenCondition::from_prompt(prompt),
            &ck.schedule,
            Branches {
                inpaint: true,
                control: false,
            },
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .map_err(|e| fail(e.to_string()))
    }
}
