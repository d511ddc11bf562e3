//! Fixed held-out edits used to check that the control branch steers
//! generation toward the edge condition.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::codec::LatentCodec;
use super::model::DualBranchModel;
use super::sample::sample;
use super::schedule::DiffusionSchedule;
use super::shapes::ShapeGenerator;
use super::tokens::TokenCondition;
use super::train::training_bundle;
use super::DiffusionError;
use crate::condition::GradientExtractor;
use crate::eval::edge_alignment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub samples: usize,
    /// Mean edge alignment inside the mask with the model's `w_C`.
    pub conditioned: f64,
    /// Same edits and seeds with `w_C = 0`.
    pub unconditioned: f64,
    pub w_control: f64,
}

impl ProbeReport {
    pub fn gain(&self) -> f64 {
        self.conditioned - self.unconditioned
    }
}

/// Regenerates the region around each shape from an empty prompt, once with
/// the control branch and once without, and scores both against the edges
/// of the original shape.
pub fn edge_probe(
    model: &DualBranchModel,
    codec: &LatentCodec,
    schedule: &DiffusionSchedule,
    shapes: &ShapeGenerator,
    grow: u32,
    samples: usize,
    seed: u64,
) -> Result<ProbeReport, DiffusionError> {
    let mut data_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unconditioned_model = model.clone();
    unconditioned_model.w_control = 0.0;
    let empty = TokenCondition::empty();
    let (mut with, mut without) = (0.0, 0.0);
    for i in 0..samples {
        let shape = shapes.generate(&mut data_rng);
        let bundle = training_bundle(&shape.image, &shape.region, grow)?;
        let noise_seed = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        let a = sample(model, codec, &bundle, &empty, schedule, &mut ChaCha8Rng::seed_from_u64(noise_seed))?;
        let b = sample(
            &unconditioned_model,
            codec,
            &bundle,
            &empty,
            schedule,
            &mut ChaCha8Rng::seed_from_u64(noise_seed),
        )?;
        let score = |img| -> Result<f64, DiffusionError> {
            edge_alignment(img, &bundle.edge_cond, &bundle.mask, &GradientExtractor)
                .map_err(|e| DiffusionError::Config(e.to_string()))
        };
        with += score(&a)?;
        without += score(&b)?;
    }
    let n = samples.max(1) as f64;
    Ok(ProbeReport {
        samples,
        conditioned: with / n,
        unconditioned: without / n,
        w_control: model.w_control,
    })
}
