//! The reference rasterizer browser clients must match, printed as ASCII.
//!
//! ```sh
//! cargo run --example rasterize_strokes
//! ```

use brushdiff::raster::{rasterize, PathStroke};

fn show(title: &str, stroke: &PathStroke, w: usize, h: usize) -> anyhow::Result<()> {
    let mask = rasterize(stroke, w, h)?;
    println!("{title} ({} px)", mask.count());
    for y in 0..h {
        let row: String = (0..w).map(|x| if mask.get(x, y) { '#' } else { '.' }).collect();
        println!("  {row}");
    }
    println!();
    Ok(())
}

fn main() -> anyhow::Result<()> {
    show("single point, radius 1", &PathStroke::new(vec![(3.0, 2.0)], 1), 7, 5)?;
    show("horizontal line, radius 0", &PathStroke::new(vec![(1.0, 1.0), (11.0, 1.0)], 0), 13, 3)?;
    show(
        "zigzag, radius 2",
        &PathStroke::new(vec![(2.0, 8.0), (8.0, 2.0), (14.0, 8.0), (20.0, 2.0)], 2),
        24,
        11,
    )?;
    Ok(())
}
