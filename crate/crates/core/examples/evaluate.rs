//! Scores a few degraded copies of an image with PSNR, SSIM, edge alignment
//! and unmasked preservation.
//!
//! ```sh
//! cargo run --example evaluate
//! ```

use brushdiff::condition::{extract_edges, GradientExtractor};
use brushdiff::eval::{edge_alignment, psnr, ssim, unmasked_preservation, SsimConfig};
use brushdiff::image::{BinaryMask, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let (w, h) = (64, 64);
    let reference = Image::from_fn(w, h, |x, y| {
        let inside = (x as f32 - 32.0).hypot(y as f32 - 32.0) < 18.0;
        if inside { [0.9, 0.3, 0.2] } else { [0.2, 0.3, 0.5] }
    })?;
    let mask = BinaryMask::from_fn(w, h, |x, y| (8..56).contains(&x) && (8..56).contains(&y))?;
    let edges = extract_edges(&reference, &GradientExtractor)?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noisy = Image::from_fn(w, h, |x, y| reference.get(x, y).map(|v| (v + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0)))?;
    let flat = Image::from_fn(w, h, |x, y| if mask.get(x, y) { [0.5; 3] } else { reference.get(x, y) })?;
    let shifted = Image::from_fn(w, h, |x, y| reference.get(x.saturating_sub(3), y))?;

    println!("{:<10} {:>8} {:>7} {:>7} {:>9}", "candidate", "psnr", "ssim", "edges", "outside");
    for (name, img) in [("identical", &reference), ("noisy", &noisy), ("flat fill", &flat), ("shifted", &shifted)] {
        println!(
            "{name:<10} {:>8.2} {:>7.4} {:>7.3} {:>9.3}",
            psnr(img, &reference)?,
            ssim(img, &reference, SsimConfig::default())?,
            edge_alignment(img, &edges, &mask, &GradientExtractor)?,
            unmasked_preservation(img, &reference, &mask)?,
        );
    }
    Ok(())
}
