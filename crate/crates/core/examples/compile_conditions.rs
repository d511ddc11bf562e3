//! Compiles three strokes (add, subtract, color) on a synthetic scene into a
//! condition bundle and writes it, plus the strokes file, to disk.
//!
//! ```sh
//! cargo run --example compile_conditions -- /tmp/bundle_demo
//! ```

use std::path::PathBuf;

use brushdiff::condition::{compile_conditions, io, strokes::save_strokes, BrushStroke, GradientExtractor};
use brushdiff::image::Image;
use brushdiff::raster::{rasterize, PathStroke};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("bundle_demo"));
    let (w, h) = (96, 64);

    // sky over grass with a dark square
    let image = Image::from_fn(w, h, |x, y| {
        if (20..44).contains(&x) && (30..54).contains(&y) {
            [0.15, 0.1, 0.1]
        } else if y < 32 {
            [0.55, 0.7, 0.95]
        } else {
            [0.3, 0.65, 0.25]
        }
    })?;

    let roof = rasterize(&PathStroke::new(vec![(18.0, 30.0), (32.0, 16.0), (46.0, 30.0)], 1), w, h)?;
    let erase = rasterize(&PathStroke::new(vec![(32.0, 30.0), (32.0, 54.0)], 3), w, h)?;
    let sun = rasterize(&PathStroke::new(vec![(76.0, 12.0)], 7), w, h)?;
    let strokes = vec![
        BrushStroke::add(roof),
        BrushStroke::subtract(erase),
        BrushStroke::color(sun, [1.0, 0.85, 0.1], 0.8)?,
    ];

    let bundle = compile_conditions(&image, &strokes, 15, &GradientExtractor)?;
    io::save_bundle(&bundle, &out)?;
    image.save_png(&out.join("source.png"))?;
    save_strokes(&strokes, &out.join("strokes").join("strokes.toml"))?;

    let edge_mass: f32 = bundle.edge_cond.data().iter().sum();
    println!("bundle written to {}", out.display());
    println!("  mask pixels: {} of {}", bundle.mask.count(), w * h);
    println!("  edge mass:   {edge_mass:.1}");
    println!(
        "  recompile with: brushdiff compile --image {} --strokes {} --grow 15 --out <dir>",
        out.join("source.png").display(),
        out.join("strokes/strokes.toml").display()
    );
    Ok(())
}
