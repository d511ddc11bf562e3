//! Reference rasterizer for freehand strokes.
//!
//! A stroke is a polyline with a round brush. Segments are sampled at steps
//! of at most one pixel; every sample is rounded to the nearest pixel and a
//! disc of the brush radius (`dx² + dy² ≤ r²`) is stamped around it. Browser
//! clients must produce identical masks for the same path.

use crate::image::{BinaryMask, RasterError};

#[derive(Debug, Clone, PartialEq)]
pub struct PathStroke {
    pub points: Vec<(f64, f64)>,
    pub radius: u32,
}

impl PathStroke {
    pub fn new(points: Vec<(f64, f64)>, radius: u32) -> Self {
        Self { points, radius }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RasterizeError {
    #[error("stroke path has no points")]
    EmptyPath,
    #[error(transparent)]
    Raster(#[from] RasterError),
}

fn stamp(mask: &mut BinaryMask, cx: i64, cy: i64, r: i64) {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy > r * r {
                continue;
            }
            let (x, y) = (cx + dx, cy + dy);
            if (0..w).contains(&x) && (0..h).contains(&y) {
                mask.set(x as usize, y as usize, true);
            }
        }
    }
}

pub fn rasterize(stroke: &PathStroke, width: usize, height: usize) -> Result<BinaryMask, RasterizeError> {
    let first = *stroke.points.first().ok_or(RasterizeError::EmptyPath)?;
    let mut mask = BinaryMask::empty(width, height)?;
    let r = i64::from(stroke.radius);
    stamp(&mut mask, first.0.round() as i64, first.1.round() as i64, r);
    for pair in stroke.points.windows(2) {
        let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
        let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
        let steps = len.ceil().max(1.0) as usize;
        for i in 1..=steps {
            let t = i as f64 / steps as f64;
            let (x, y) = (x0 + (x1 - x0) * t, y0 + (y1 - y0) * t);
            stamp(&mut mask, x.round() as i64, y.round() as i64, r);
        }
    }
    Ok(mask)
}
