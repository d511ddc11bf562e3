//! Ancestral sampling with both branches active, followed by paste-back.

use rand::Rng;

use super::codec::{plane_to_latent, LatentCodec};
use super::model::{DenoiseInput, DualBranchModel, InpaintInput};
use super::schedule::{DiffusionSchedule, Sampler};
use super::tensor::Tensor;
use super::tokens::TokenCondition;
use super::DiffusionError;
use crate::condition::ConditionBundle;
use crate::image::Image;

/// Bundle conditions moved to latent resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentConditions {
    pub inpaint: InpaintInput,
    /// `[E_cond, C_cond.r, C_cond.g, C_cond.b]`.
    pub control: Tensor,
}

/// Which branches take part in sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Branches {
    pub inpaint: bool,
    pub control: bool,
}

impl Branches {
    pub const BOTH: Branches = Branches {
        inpaint: true,
        control: true,
    };
    pub const NONE: Branches = Branches {
        inpaint: false,
        control: false,
    };
}

/// Encodes the masked image, and cubic-downsamples the mask, edge condition
/// and color condition to the latent grid.
pub fn condition_latents(bundle: &ConditionBundle, codec: &LatentCodec) -> Result<LatentConditions, DiffusionError> {
    let (w, h) = bundle.masked_image.dims();
    let (lw, lh) = codec.latent_dims(w, h)?;
    let f = codec.factor();
    let z_masked = codec.encode_model(&bundle.masked_image)?;

    let mask_plane: Vec<f64> = bundle.mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mask = Tensor::new(vec![1, lh, lw], plane_to_latent(&mask_plane, w, h, f));

    let mut control = Vec::with_capacity(4 * lh * lw);
    let edge_plane: Vec<f64> = bundle.edge_cond.data().iter().map(|&v| v as f64).collect();
    control.extend(plane_to_latent(&edge_plane, w, h, f));
    let color = bundle.color_cond.data();
    for c in 0..3 {
        let plane: Vec<f64> = color.chunks_exact(3).map(|p| p[c] as f64).collect();
        control.extend(plane_to_latent(&plane, w, h, f));
    }
    Ok(LatentConditions {
        inpaint: InpaintInput { z_masked, mask },
        control: Tensor::new(vec![4, lh, lw], control),
    })
}

/// `output = I ⊙ (1 − M) + generated ⊙ M`, with `I ⊙ (1 − M)` taken from the
/// bundle's masked image so unmasked pixels are copied bit for bit.
pub fn paste_back(generated: &Image, bundle: &ConditionBundle) -> Result<Image, DiffusionError> {
    crate::image::ensure_same_dims(generated.dims(), bundle.masked_image.dims())?;
    let (w, h) = generated.dims();
    let mut out = bundle.masked_image.clone();
    for y in 0..h {
        for x in 0..w {
            if bundle.mask.get(x, y) {
                out.set(x, y, generated.get(x, y));
            }
        }
    }
    Ok(out)
}

fn check_compat(model: &DualBranchModel, codec: &LatentCodec, schedule: &DiffusionSchedule) -> Result<(), DiffusionError> {
    schedule.validate()?;
    if schedule.num_train_steps != model.num_train_steps() {
        return Err(DiffusionError::ScheduleMismatch(format!(
            "schedule has {} training steps, model was built for {}",
            schedule.num_train_steps,
            model.num_train_steps()
        )));
    }
    if codec.latent_channels() != model.spec().latent_channels {
        return Err(DiffusionError::ScheduleMismatch(format!(
            "codec produces {} latent channels, model expects {}",
            codec.latent_channels(),
            model.spec().latent_channels
        )));
    }
    Ok(())
}

/// Runs the configured sampler in latent space and returns the final latent.
pub fn sample_latent(
    model: &DualBranchModel,
    conds: &LatentConditions,
    tokens: &TokenCondition,
    schedule: &DiffusionSchedule,
    branches: Branches,
    rng: &mut impl Rng,
) -> Result<Tensor, DiffusionError> {
    let shape = conds.inpaint.z_masked.shape.clone();
    let mut eps_at = |x: &Tensor, t: f64| -> Result<Tensor, DiffusionError> {
        let input = DenoiseInput {
            z_t: x,
            t,
            tokens,
            inpaint: branches.inpaint.then_some(&conds.inpaint),
            control: branches.control.then_some(&conds.control),
        };
        Ok(model.forward(&input)?.noise_pred)
    };
    run_sampler(schedule, &shape, &mut eps_at, rng)
}

/// The sampling loop for any noise predictor `eps(x_t, t)`, where `x_t` is
/// in the training parameterization `√ᾱ·z_0 + √(1 − ᾱ)·ε`.
pub fn run_sampler(
    schedule: &DiffusionSchedule,
    shape: &[usize],
    eps_at: &mut dyn FnMut(&Tensor, f64) -> Result<Tensor, DiffusionError>,
    rng: &mut impl Rng,
) -> Result<Tensor, DiffusionError> {
    match schedule.sampler {
        Sampler::EulerAncestralKarras => {
            let sigmas = schedule.karras_sigmas();
            let mut x = Tensor::randn(shape, sigmas[0], rng);
            for i in 0..sigmas.len() - 1 {
                let (s, s_next) = (sigmas[i], sigmas[i + 1]);
                let scaled = x.scaled(1.0 / (s * s + 1.0).sqrt());
                let eps = eps_at(&scaled, schedule.sigma_to_t(s))?;
                // x − σ·ε is the denoised estimate, so the derivative is ε
                let s_up = (s_next * s_next * (s * s - s_next * s_next) / (s * s)).sqrt().min(s_next);
                let s_down = (s_next * s_next - s_up * s_up).sqrt();
                x.axpy(s_down - s, &eps);
                if s_next > 0.0 {
                    let noise = Tensor::randn(shape, 1.0, rng);
                    x.axpy(s_up, &noise);
                }
            }
            Ok(x)
        }
        Sampler::DdpmAncestral => {
            let abar = schedule.alphas_cumprod();
            let steps = schedule.ddpm_timesteps();
            let mut x = Tensor::randn(shape, 1.0, rng);
            for (i, &t) in steps.iter().enumerate() {
                let a = abar[t];
                let a_prev = steps.get(i + 1).map_or(1.0, |&tp| abar[tp]);
                let eps = eps_at(&x, t as f64)?;
                let mut x0 = x.clone();
                x0.axpy(-(1.0 - a).sqrt(), &eps);
                let x0 = x0.scaled(1.0 / a.sqrt());
                let sigma = ((1.0 - a_prev) / (1.0 - a) * (1.0 - a / a_prev)).max(0.0).sqrt();
                let dir = (1.0 - a_prev - sigma * sigma).max(0.0).sqrt();
                let mut next = x0.scaled(a_prev.sqrt());
                next.axpy(dir, &eps);
                if sigma > 0.0 {
                    let noise = Tensor::randn(shape, 1.0, rng);
                    next.axpy(sigma, &noise);
                }
                x = next;
            }
            Ok(x)
        }
    }
}

/// Samples with the given branches, decodes and pastes the result back into
/// the unmasked image.
pub fn sample_with(
    model: &DualBranchModel,
    codec: &LatentCodec,
    bundle: &ConditionBundle,
    tokens: &TokenCondition,
    schedule: &DiffusionSchedule,
    branches: Branches,
    rng: &mut impl Rng,
) -> Result<Image, DiffusionError> {
    check_compat(model, codec, schedule)?;
    let conds = condition_latents(bundle, codec)?;
    let z = sample_latent(model, &conds, tokens, schedule, branches, rng)?;
    let generated = codec.decode_model(&z)?;
    paste_back(&generated, bundle)
}

/// Samples with both branches active.
pub fn sample(
    model: &DualBranchModel,
    codec: &LatentCodec,
    bundle: &ConditionBundle,
    tokens: &TokenCondition,
    schedule: &DiffusionSchedule,
    rng: &mut impl Rng,
) -> Result<Image, DiffusionError> {
    sample_with(model, codec, bundle, tokens, schedule, Branches::BOTH, rng)
}
