//! Formats the intent questions for add and color strokes and answers them
//! with the rule-table mock predictor. Pass `--endpoint URL` to ask an
//! external predictor instead.
//!
//! ```sh
//! cargo run --example draw_guess
//! cargo run --example draw_guess -- --endpoint http://localhost:9000/guess
//! ```

use std::time::Duration;

use brushdiff::condition::BrushStroke;
use brushdiff::guess::{
    compose_generation_prompt, guess_stroke, normalize_bbox, BBox, ExternalPredictor, MockPredictor, MockRule,
    Predictor, GuessRequest,
};
use brushdiff::image::Image;
use brushdiff::raster::{rasterize, PathStroke};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let predictor: Box<dyn Predictor> = match args.iter().position(|a| a == "--endpoint") {
        Some(i) => Box::new(ExternalPredictor::new(args[i + 1].clone(), Duration::from_secs(10))?),
        None => Box::new(MockPredictor::new(vec![
            MockRule {
                region: BBox { x1: 0.1, y1: 0.4, x2: 0.5, y2: 0.9 },
                phrase: "birthday cake".into(),
            },
            MockRule {
                region: BBox { x1: 0.6, y1: 0.0, x2: 1.0, y2: 0.4 },
                phrase: "hot air balloon".into(),
            },
        ])),
    };

    let (w, h) = (128, 96);
    let canvas = Image::filled(w, h, [0.93, 0.9, 0.85])?;
    let cake = rasterize(&PathStroke::new(vec![(20.0, 80.0), (20.0, 50.0), (60.0, 50.0), (60.0, 80.0)], 2), w, h)?;
    let balloon = rasterize(&PathStroke::new(vec![(100.0, 16.0)], 12), w, h)?;
    let smudge = rasterize(&PathStroke::new(vec![(64.0, 10.0), (70.0, 14.0)], 3), w, h)?;
    let strokes = [
        BrushStroke::add(cake),
        BrushStroke::color(balloon, [0.9, 0.1, 0.1], 1.0)?,
        BrushStroke::subtract(smudge),
    ];

    for stroke in &strokes {
        let kind = stroke.kind();
        println!("== {} stroke, bbox {:?}", kind.as_str(), normalize_bbox(stroke.mask(), &canvas)?);
        if let Some(req) = GuessRequest::for_stroke(&canvas, stroke)? {
            println!("question:\n{}\n", req.prompt());
        }
        match guess_stroke(&canvas, stroke, predictor.as_ref()) {
            Ok(Some(p)) => {
                let color = match stroke {
                    BrushStroke::Color { color, .. } => Some(*color),
                    _ => None,
                };
                println!("guess: {:?} ({}, {:.1} ms)", p.phrase, p.predictor, p.latency * 1e3);
                println!("generation prompt: {:?}\n", compose_generation_prompt(kind, &p.phrase, color));
            }
            Ok(None) => println!("not guessed; the edit runs prompt-free\n"),
            Err(e) => println!("prediction failed: {e}\n"),
        }
    }
    Ok(())
}
