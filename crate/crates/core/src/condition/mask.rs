use super::{BrushStroke, ConditionError};
use crate::image::{ensure_same_dims, BinaryMask, Image};

const FAR: f64 = 1e20;

/// Exact squared Euclidean distance transform of one row/column
/// (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let parabola_cut = |p: usize| {
            ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64)
        };
        let mut s = parabola_cut(v[k]);
        while s <= z[k] {
            k -= 1;
            s = parabola_cut(v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Squared distance from every pixel to the nearest set pixel.
pub(crate) fn squared_distance(mask: &BinaryMask) -> Vec<f64> {
    let (w, h) = mask.dims();
    let mut grid: Vec<f64> = mask.bits().iter().map(|&b| if b { 0.0 } else { FAR }).collect();
    let n = w.max(h);
    let (mut f, mut out) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    grid
}

/// Dilates `mask` by a Euclidean disc of `radius` pixels.
pub fn dilate(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 || mask.is_empty() {
        return mask.clone();
    }
    let r2 = f64::from(radius) * f64::from(radius);
    let dist = squared_distance(mask);
    BinaryMask::new(mask.width(), mask.height(), dist.iter().map(|&d| d <= r2).collect())
        .expect("dims preserved")
}

/// Union of `masks` grown by `radius`; an empty list yields an all-zero mask.
pub fn grow_union(masks: &[&BinaryMask], dims: (usize, usize), radius: i64) -> Result<BinaryMask, ConditionError> {
    if radius < 0 {
        return Err(ConditionError::NegativeRadius(radius));
    }
    let mut union = BinaryMask::empty(dims.0, dims.1)?;
    for m in masks {
        union = union.union(m)?;
    }
    Ok(dilate(&union, radius as u32))
}

/// `Grow_p(M_add ∪ M_sub ∪ M_color)` with a Euclidean disc.
pub fn grow_mask(strokes: &[BrushStroke], dims: (usize, usize), radius: i64) -> Result<BinaryMask, ConditionError> {
    let masks: Vec<&BinaryMask> = strokes.iter().map(BrushStroke::mask).collect();
    grow_union(&masks, dims, radius)
}

/// `I ⊙ (1 − M)`.
pub fn make_masked_image(image: &Image, mask: &BinaryMask) -> Result<Image, ConditionError> {
    ensure_same_dims(image.dims(), mask.dims())?;
    Ok(Image::from_fn(image.width(), image.height(), |x, y| {
        if mask.get(x, y) {
            [0.0; 3]
        } else {
            image.get(x, y)
        }
    })?)
}
