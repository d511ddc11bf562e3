//! Noise-prediction training on the synthetic-shapes task.
//!
//! Training runs in three phases. `base` fits the token-conditioned
//! denoiser alone. `inpaint` freezes the base and fits the inpainting
//! branch and its zero convolutions with the control branch detached.
//! `control` freezes base and inpainting branch and fits the control branch
//! with both branches attached.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::codec::{CodecConfig, LatentCodec};
use super::model::{DenoiseInput, DualBranchModel, UNetSpec};
use super::params::{Adam, Group};
use super::sample::condition_latents;
use super::schedule::DiffusionSchedule;
use super::shapes::{ShapeGenerator, ShapeSample};
use super::tensor::Tensor;
use super::tokens::TokenCondition;
use super::DiffusionError;
use crate::condition::{
    extract_edges, grow_union, make_color_condition, make_masked_image, ConditionBundle, GradientExtractor, GRADIENT_EXTRACTOR_ID,
};
use crate::image::{BinaryMask, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Base,
    Inpaint,
    Control,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Base => "base",
            Phase::Inpaint => "inpaint",
            Phase::Control => "control",
        }
    }

    pub fn trains(self, group: Group) -> bool {
        match self {
            Phase::Base => group == Group::Base,
            Phase::Inpaint => matches!(group, Group::Inpaint | Group::InpaintZero),
            Phase::Control => matches!(group, Group::Control | Group::ControlZero),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub codec: CodecConfig,
    /// Images used to fit a learned codec.
    pub codec_fit_images: usize,
    pub n_layers: usize,
    pub width: usize,
    pub time_dim: usize,
    pub schedule: DiffusionSchedule,
    pub shapes: ShapeGenerator,
    pub base_steps: usize,
    pub inpaint_steps: usize,
    pub control_steps: usize,
    pub batch: usize,
    pub lr: f64,
    /// Mask growth applied to the simulated stroke region.
    pub grow: u32,
    pub w_inpaint: f64,
    pub w_control: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            codec: CodecConfig {
                spatial_factor: 2,
                ..CodecConfig::default()
            },
            codec_fit_images: 64,
            n_layers: 4,
            width: 32,
            time_dim: 16,
            schedule: DiffusionSchedule::default(),
            shapes: ShapeGenerator::default(),
            base_steps: 600,
            inpaint_steps: 200,
            control_steps: 1200,
            batch: 4,
            lr: 2e-3,
            grow: 1,
            w_inpaint: 1.0,
            w_control: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn load(path: &Path) -> Result<Self, DiffusionError> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| DiffusionError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn unet_spec(&self, latent_channels: usize) -> UNetSpec {
        UNetSpec {
            time_dim: self.time_dim,
            ..UNetSpec::new(self.n_layers, self.width, latent_channels)
        }
    }

    pub fn steps(&self, phase: Phase) -> usize {
        match phase {
            Phase::Base => self.base_steps,
            Phase::Inpaint => self.inpaint_steps,
            Phase::Control => self.control_steps,
        }
    }
}

/// One training triple: target image, its conditions and the prompt tokens.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub image: Image,
    pub bundle: ConditionBundle,
    pub tokens: TokenCondition,
}

/// Conditions a user would produce when redrawing `region` of `image`:
/// edges and color blocks of the target itself, and the grown region.
pub fn training_bundle(image: &Image, region: &BinaryMask, grow: u32) -> Result<ConditionBundle, DiffusionError> {
    let extractor = GradientExtractor;
    let edge_cond = extract_edges(image, &extractor)?;
    let color_cond = make_color_condition(image)?;
    let mask = grow_union(&[region], image.dims(), grow as i64)?;
    let masked_image = make_masked_image(image, &mask)?;
    let meta = crate::condition::bundle_meta(image.width(), image.height(), grow, GRADIENT_EXTRACTOR_ID);
    Ok(ConditionBundle {
        edge_cond,
        color_cond,
        mask,
        masked_image,
        meta,
    })
}

impl TrainExample {
    pub fn from_shape(sample: &ShapeSample, grow: u32) -> Result<Self, DiffusionError> {
        Ok(Self {
            bundle: training_bundle(&sample.image, &sample.region, grow)?,
            image: sample.image.clone(),
            tokens: TokenCondition::from_prompt(&sample.prompt),
        })
    }
}

/// Squared-error noise-prediction objective, averaged over elements.
pub fn noise_loss(pred: &Tensor, noise: &Tensor) -> f64 {
    pred.mean_squared_error(noise)
}

/// One optimizer update on a batch. Parameters outside `phase` are not
/// touched. Returns the mean batch loss.
pub fn train_step(
    model: &mut DualBranchModel,
    opt: &mut Adam,
    codec: &LatentCodec,
    schedule: &DiffusionSchedule,
    phase: Phase,
    batch: &[TrainExample],
    rng: &mut impl Rng,
) -> Result<f64, DiffusionError> {
    if batch.is_empty() {
        return Err(DiffusionError::Config("empty batch".into()));
    }
    let abar = schedule.alphas_cumprod();
    let mut total = 0.0;
    let mut grads: Option<super::graph::Grads> = None;
    for ex in batch {
        let z0 = codec.encode_model(&ex.image)?;
        let conds = condition_latents(&ex.bundle, codec)?;
        let t = rng.gen_range(0..schedule.num_train_steps);
        let noise = Tensor::randn(&z0.shape, 1.0, rng);
        let mut z_t = z0.scaled(abar[t].sqrt());
        z_t.axpy((1.0 - abar[t]).sqrt(), &noise);
        let input = DenoiseInput {
            z_t: &z_t,
            t: t as f64,
            tokens: &ex.tokens,
            inpaint: (phase != Phase::Base).then_some(&conds.inpaint),
            control: (phase == Phase::Control).then_some(&conds.control),
        };
        let (loss, g) = model.loss_and_grads(&input, &noise, &|grp| phase.trains(grp))?;
        total += loss;
        match &mut grads {
            Some(acc) => acc.merge(g),
            None => grads = Some(g),
        }
    }
    let loss = total / batch.len() as f64;
    if !loss.is_finite() {
        return Err(DiffusionError::NonFiniteLoss {
            step: opt.steps() as usize + 1,
            phase: phase.name().into(),
        });
    }
    let mut grads = grads.expect("non-empty batch");
    grads.scale(1.0 / batch.len() as f64);
    opt.step(model.params_mut(), &grads);
    Ok(loss)
}

/// Owns the model, codec, data stream and optimizer state of one run.
pub struct Trainer {
    pub config: TrainConfig,
    pub model: DualBranchModel,
    pub codec: LatentCodec,
    rng: ChaCha8Rng,
    opt: Option<(Phase, Adam)>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self, DiffusionError> {
        config.schedule.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let fit: Vec<Image> = match config.codec.mode {
            super::codec::CodecMode::Learned => {
                (0..config.codec_fit_images).map(|_| config.shapes.generate(&mut rng).image).collect()
            }
            super::codec::CodecMode::Patchify => Vec::new(),
        };
        let codec = LatentCodec::from_config(&config.codec, &fit)?;
        codec.latent_dims(config.shapes.size, config.shapes.size)?;
        let spec = config.unet_spec(codec.latent_channels());
        let mut model = DualBranchModel::new(spec, config.schedule.num_train_steps, &mut rng)?;
        model.w_inpaint = config.w_inpaint;
        model.w_control = config.w_control;
        Ok(Self {
            config,
            model,
            codec,
            rng,
            opt: None,
        })
    }

    /// Continues from existing weights; the data stream restarts from `config.seed`.
    pub fn with_model(config: TrainConfig, model: DualBranchModel, codec: LatentCodec) -> Result<Self, DiffusionError> {
        config.schedule.validate()?;
        if model.num_train_steps() != config.schedule.num_train_steps {
            return Err(DiffusionError::ScheduleMismatch("model and config disagree on T".into()));
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            model,
            codec,
            opt: None,
        })
    }

    pub fn next_batch(&mut self) -> Result<Vec<TrainExample>, DiffusionError> {
        (0..self.config.batch)
            .map(|_| {
                let s = self.config.shapes.generate(&mut self.rng);
                TrainExample::from_shape(&s, self.config.grow)
            })
            .collect()
    }

    /// One step of `phase`. Starting a new phase resets the optimizer.
    pub fn step(&mut self, phase: Phase) -> Result<f64, DiffusionError> {
        if self.opt.as_ref().map(|(p, _)| *p) != Some(phase) {
            self.opt = Some((phase, Adam::new(self.config.lr)));
        }
        let batch = self.next_batch()?;
        let (_, opt) = self.opt.as_mut().expect("set above");
        train_step(
            &mut self.model,
            opt,
            &self.codec,
            &self.config.schedule,
            phase,
            &batch,
            &mut self.rng,
        )
    }

    /// Runs `phase` for its configured number of steps; returns per-step losses.
    pub fn run_phase(&mut self, phase: Phase, mut on_step: impl FnMut(usize, f64)) -> Result<Vec<f64>, DiffusionError> {
        let n = self.config.steps(phase);
        let mut losses = Vec::with_capacity(n);
        for i in 0..n {
            let loss = self.step(phase)?;
            on_step(i + 1, loss);
            losses.push(loss);
        }
        Ok(losses)
    }

    /// All three phases in order.
    pub fn run(&mut self, mut on_step: impl FnMut(Phase, usize, f64)) -> Result<TrainReport, DiffusionError> {
        let mut report = TrainReport::default();
        for phase in [Phase::Base, Phase::Inpaint, Phase::Control] {
            let losses = self.run_phase(phase, |i, l| on_step(phase, i, l))?;
            report.phases.push(PhaseReport { phase, losses });
        }
        Ok(report)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub phase: Phase,
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub phases: Vec<PhaseReport>,
}

/// Mean of `losses[from-1 .. to]` (1-based, inclusive).
pub fn window_mean(losses: &[f64], from: usize, to: usize) -> f64 {
    let w = &losses[from - 1..to];
    w.iter().sum::<f64>() / w.len() as f64
}
