//! Regenerates a shape from its edge and color conditions with a trained
//! checkpoint and writes a comparison strip: source, masked input, edge
//! condition, result with the control branch, result with `w_C = 0`.
//!
//! ```sh
//! cargo run --release --example train_toy -- /tmp/toy_ckpt
//! cargo run --release --example sample_edit -- /tmp/toy_ckpt /tmp/strip.png
//! ```

use std::path::PathBuf;

use brushdiff::diffusion::train::{training_bundle, TrainConfig};
use brushdiff::diffusion::{load_checkpoint, sample, shapes::ShapeGenerator, TokenCondition};
use brushdiff::eval::edge_alignment;
use brushdiff::condition::GradientExtractor;
use brushdiff::image::Image;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ZOOM: usize = 4;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("toy_ckpt"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("strip.png"));
    let ck = load_checkpoint(&ckpt)?;
    let grow = TrainConfig::default().grow;

    let shape = ShapeGenerator::default().generate(&mut ChaCha8Rng::seed_from_u64(7));
    let bundle = training_bundle(&shape.image, &shape.region, grow)?;
    let tokens = TokenCondition::from_prompt(&shape.prompt);

    let with = sample(&ck.model, &ck.codec, &bundle, &tokens, &ck.schedule, &mut ChaCha8Rng::seed_from_u64(1))?;
    let mut off = ck.model.clone();
    off.w_control = 0.0;
    let without = sample(&off, &ck.codec, &bundle, &tokens, &ck.schedule, &mut ChaCha8Rng::seed_from_u64(1))?;

    let (w, h) = shape.image.dims();
    let edges = Image::from_fn(w, h, |x, y| [1.0 - bundle.edge_cond.get(x, y); 3])?;
    let panels = [&shape.image, &bundle.masked_image, &edges, &with, &without];
    let strip = Image::from_fn(w * ZOOM * panels.len(), h * ZOOM, |x, y| {
        panels[x / (w * ZOOM)].get((x % (w * ZOOM)) / ZOOM, y / ZOOM)
    })?;
    strip.save_png(&out)?;

    let score = |img: &Image| edge_alignment(img, &bundle.edge_cond, &bundle.mask, &GradientExtractor);
    println!("prompt: {:?}", shape.prompt);
    println!("edge alignment with control {:.3}, without {:.3}", score(&with)?, score(&without)?);
    println!("wrote {}", out.display());
    Ok(())
}
