//! Separable Catmull-Rom downsampling and nearest-neighbour upsampling on
//! planar `f64` buffers.

/// Catmull-Rom cubic convolution coefficient.
pub const CUBIC_A: f64 = -0.5;

/// Identifier recorded in bundle metadata.
pub const CUBIC_KERNEL_ID: &str = "catmull-rom(a=-0.5),edge-clamp";
pub const NEAREST_KERNEL_ID: &str = "nearest(floor)";

/// Keys cubic convolution kernel.
#[inline]
pub fn cubic_weight(x: f64) -> f64 {
    let a = CUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// Four taps `(index, weight)` for output sample `j` when shrinking an axis
/// of length `len` by `factor`. Pixel centres are aligned; source indices are
/// clamped to the border.
pub fn cubic_taps(j: usize, factor: usize, len: usize) -> [(usize, f64); 4] {
    let src = (j as f64 + 0.5) * factor as f64 - 0.5;
    let base = src.floor();
    let t = src - base;
    let base = base as isize;
    let clamp = |i: isize| i.clamp(0, len as isize - 1) as usize;
    [
        (clamp(base - 1), cubic_weight(t + 1.0)),
        (clamp(base), cubic_weight(t)),
        (clamp(base + 1), cubic_weight(1.0 - t)),
        (clamp(base + 2), cubic_weight(2.0 - t)),
    ]
}

/// Shrinks a `width x height` plane by an integer `factor` with separable
/// cubic interpolation. Both dims must be divisible by `factor`.
pub fn downsample_cubic(plane: &[f64], width: usize, height: usize, factor: usize) -> Vec<f64> {
    assert!(factor >= 1 && width % factor == 0 && height % factor == 0);
    assert_eq!(plane.len(), width * height);
    let (ow, oh) = (width / factor, height / factor);
    // horizontal pass
    let mut tmp = vec![0.0; ow * height];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for j in 0..ow {
            tmp[y * ow + j] = cubic_taps(j, factor, width)
                .iter()
                .map(|&(i, w)| row[i] * w)
                .sum();
        }
    }
    // vertical pass
    let mut out = vec![0.0; ow * oh];
    for i in 0..oh {
        let taps = cubic_taps(i, factor, height);
        for j in 0..ow {
            out[i * ow + j] = taps.iter().map(|&(y, w)| tmp[y * ow + j] * w).sum();
        }
    }
    out
}

/// Enlarges a plane by `factor`; output pixel `(x, y)` copies source
/// `(x / factor, y / factor)`.
pub fn upsample_nearest(plane: &[f64], width: usize, height: usize, factor: usize) -> Vec<f64> {
    assert_eq!(plane.len(), width * height);
    let ow = width * factor;
    let mut out = Vec::with_capacity(ow * height * factor);
    for y in 0..height * factor {
        for x in 0..ow {
            out.push(plane[(y / factor) * width + x / factor]);
        }
    }
    out
}

/// Pads a plane on the right/bottom by edge replication up to the next
/// multiple of `factor`.
pub fn pad_replicate(plane: &[f64], width: usize, height: usize, factor: usize) -> (Vec<f64>, usize, usize) {
    let pw = width.div_ceil(factor) * factor;
    let ph = height.div_ceil(factor) * factor;
    let mut out = Vec::with_capacity(pw * ph);
    for y in 0..ph {
        let sy = y.min(height - 1);
        for x in 0..pw {
            out.push(plane[sy * width + x.min(width - 1)]);
        }
    }
    (out, pw, ph)
}

pub fn crop(plane: &[f64], width: usize, new_width: usize, new_height: usize) -> Vec<f64> {
    (0..new_height)
        .flat_map(|y| plane[y * width..y * width + new_width].iter().copied())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_partition_of_unity() {
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            let s = cubic_weight(t + 1.0) + cubic_weight(t) + cubic_weight(1.0 - t) + cubic_weight(2.0 - t);
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn half_pixel_taps_for_even_factor() {
        let taps = cubic_taps(0, 16, 16);
        let idx: Vec<usize> = taps.iter().map(|t| t.0).collect();
        assert_eq!(idx, vec![6, 7, 8, 9]);
        assert!((taps[0].1 + 0.0625).abs() < 1e-12);
        assert!((taps[1].1 - 0.5625).abs() < 1e-12);
    }

    #[test]
    fn constant_plane_survives_round_trip() {
        let p = vec![0.25; 32 * 48];
        let d = downsample_cubic(&p, 32, 48, 16);
        assert_eq!(d.len(), 6);
        assert!(d.iter().all(|v| (v - 0.25).abs() < 1e-12));
        let u = upsample_nearest(&d, 2, 3, 16);
        assert_eq!(u.len(), p.len());
    }

    #[test]
    fn replicate_pad_then_crop() {
        let p: Vec<f64> = (0..15).map(|v| v as f64).collect();
        let (padded, pw, ph) = pad_replicate(&p, 5, 3, 4);
        assert_eq!((pw, ph), (8, 4));
        assert_eq!(padded[7], 4.0);
        assert_eq!(padded[3 * 8], 10.0);
        assert_eq!(crop(&padded, pw, 5, 3), p);
    }
}
