use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::session::EditParams;
use crate::condition::ConditionBundle;
use crate::diffusion::{sample, Checkpoint, TokenCondition};
use crate::image::Image;

/// Produces an image for a compiled bundle. The service pastes the result
/// back onto the masked image, so only pixels inside the mask matter.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, bundle: &ConditionBundle, prompt: &str, params: &EditParams) -> Result<Image, String>;
}

/// Deterministic stand-in: inside the mask, the color condition darkened by
/// the edge condition.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

impl Backend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn generate(&self, bundle: &ConditionBundle, _prompt: &str, _params: &EditParams) -> Result<Image, String> {
        let (w, h) = bundle.dims();
        Image::from_fn(w, h, |x, y| {
            if bundle.mask.get(x, y) {
                let c = bundle.color_cond.get(x, y);
                let keep = 1.0 - bundle.edge_cond.get(x, y);
                [c[0] * keep, c[1] * keep, c[2] * keep]
            } else {
                bundle.masked_image.get(x, y)
            }
        })
        .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct ToyDiffusionBackend {
    checkpoint: Checkpoint,
}

impl ToyDiffusionBackend {
    pub fn new(checkpoint: Checkpoint) -> Self {
        Self { checkpoint }
    }
}

impl Backend for ToyDiffusionBackend {
    fn id(&self) -> &str {
        "toy_diffusion"
    }

    fn generate(&self, bundle: &ConditionBundle, prompt: &str, params: &EditParams) -> Result<Image, String> {
        let ck = &self.checkpoint;
        let mut model = ck.model.clone();
        model.w_inpaint = params.w_inpaint;
        model.w_control = params.w_control;
        sample(
            &model,
            &ck.codec,
            bundle,
            &TokenCondition::from_prompt(prompt),
            &ck.schedule,
            &mut ChaCha8Rng::seed_from_u64(params.seed),
        )
        .map_err(|e| e.to_string())
    }
}
