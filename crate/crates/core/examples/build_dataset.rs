//! Writes a small synthetic annotated corpus in the ingestion layout and
//! turns it into intent-prediction records with the mean-fill inpainter.
//!
//! ```sh
//! cargo run --example build_dataset -- /tmp/dataset_demo
//! ```

use std::path::PathBuf;

use brushdiff::dataset::{build_corpus, write_annotated, AnnotatedImage, CorpusConfig, MeanFill, Region, RECORDS_FILE};
use brushdiff::image::{BinaryMask, Image};

const LABELS: [&str; 6] = ["a red kite", "the old lighthouse", "two small boats", "sandy beach", "a gull.", "clouds"];

fn scene(i: usize) -> anyhow::Result<AnnotatedImage> {
    let (w, h) = (64, 64);
    let image = Image::from_fn(w, h, |x, y| {
        let stripes = if (x / (4 + i)) % 2 == 0 { 0.8 } else { 0.2 };
        if y < 20 {
            [0.5, 0.7, 0.9]
        } else if x > 40 {
            [stripes, stripes * 0.5, 0.3]
        } else {
            [0.85, 0.8, 0.6]
        }
    })?;
    let regions = vec![
        region(w, h, |_, y| y < 20, LABELS[5])?,
        region(w, h, |x, y| y >= 20 && x <= 40, LABELS[3])?,
        region(w, h, |x, y| x > 40 && y >= 20, LABELS[i % 3])?,
        region(w, h, |x, y| (x as i64 - 20).pow(2) + (y as i64 - 10).pow(2) < 16, LABELS[4])?,
    ];
    Ok(AnnotatedImage::new(format!("img{i:03}"), image, regions)?)
}

fn region(w: usize, h: usize, f: impl Fn(usize, usize) -> bool, label: &str) -> anyhow::Result<Region> {
    Ok(Region {
        mask: BinaryMask::from_fn(w, h, f)?,
        label: label.into(),
        description: String::new(),
    })
}

fn main() -> anyhow::Result<()> {
    let root = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("dataset_demo"));
    let corpus = root.join("corpus");
    for i in 0..4 {
        write_annotated(&scene(i)?, &corpus)?;
    }
    let out = root.join("records");
    let summary = build_corpus(&corpus, &out, &CorpusConfig { seed: 1, top_k: 3 }, &MeanFill)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    let first = std::fs::read_to_string(out.join(RECORDS_FILE))?;
    if let Some(line) = first.lines().next() {
        println!("first record: {line}");
    }
    Ok(())
}
