//! Brute-force reference implementations, written per pixel and kept
//! independent of the library code paths they check.

#![allow(dead_code)]

use brushdiff::condition::BrushStroke;
use brushdiff::image::{BinaryMask, EdgeMap, Image};
use rand::Rng;

pub fn random_image(w: usize, h: usize, rng: &mut impl Rng) -> Image {
    Image::from_fn(w, h, |_, _| [rng.gen::<f32>(), rng.gen::<f32>(), rng.gen::<f32>()]).unwrap()
}

/// Random blob mask: a handful of rectangles, never empty.
pub fn random_mask(w: usize, h: usize, rng: &mut impl Rng) -> BinaryMask {
    let mut m = BinaryMask::empty(w, h).unwrap();
    for _ in 0..rng.gen_range(1..=3) {
        let x0 = rng.gen_range(0..w);
        let y0 = rng.gen_range(0..h);
        let x1 = rng.gen_range(x0..w.min(x0 + w / 2 + 1));
        let y1 = rng.gen_range(y0..h.min(y0 + h / 2 + 1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                m.set(x, y, true);
            }
        }
    }
    m
}

/// Mask with every pixel set independently with probability `p`.
pub fn noise_mask(w: usize, h: usize, p: f64, rng: &mut impl Rng) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(p)).unwrap()
}

pub fn random_edges(w: usize, h: usize, rng: &mut impl Rng) -> EdgeMap {
    EdgeMap::new(w, h, (0..w * h).map(|_| rng.gen::<f32>()).collect()).unwrap()
}

pub fn px(img: &Image, x: usize, y: usize) -> [f64; 3] {
    img.get(x, y).map(f64::from)
}

pub fn luma(p: [f64; 3]) -> f64 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

/// Gradient magnitude of luma with central differences, border pixels
/// repeated, doubled and clamped to 1.
pub fn oracle_edges(img: &Image) -> Vec<f64> {
    let (w, h) = img.dims();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let l = |xx: isize, yy: isize| {
                let cx = xx.max(0).min(w as isize - 1) as usize;
                let cy = yy.max(0).min(h as isize - 1) as usize;
                luma(px(img, cx, cy))
            };
            let (xi, yi) = (x as isize, y as isize);
            let gx = 0.5 * (l(xi + 1, yi) - l(xi - 1, yi));
            let gy = 0.5 * (l(xi, yi + 1) - l(xi, yi - 1));
            out[y * w + x] = f64::min(1.0, 2.0 * gx.hypot(gy));
        }
    }
    out
}

pub fn oracle_subtract(e: &[f64], m: &BinaryMask) -> Vec<f64> {
    e.iter().zip(m.bits()).map(|(v, &b)| v * (1.0 - f64::from(u8::from(b)))).collect()
}

pub fn oracle_add(e: &[f64], m: &BinaryMask) -> Vec<f64> {
    e.iter()
        .zip(m.bits())
        .map(|(v, &b)| {
            let m = f64::from(u8::from(b));
            v + m * (1.0 - v)
        })
        .collect()
}

pub fn oracle_blend(img: &[[f64; 3]], m: &BinaryMask, c: [f64; 3], alpha: f64) -> Vec<[f64; 3]> {
    img.iter()
        .zip(m.bits())
        .map(|(p, &b)| {
            let am = alpha * f64::from(u8::from(b));
            [0, 1, 2].map(|k| (1.0 - am) * p[k] + am * c[k])
        })
        .collect()
}

pub fn image_pixels(img: &Image) -> Vec<[f64; 3]> {
    let (w, h) = img.dims();
    (0..h).flat_map(|y| (0..w).map(move |x| px(img, x, y))).collect()
}

pub fn keys_cubic(x: f64) -> f64 {
    let a = -0.5;
    let t = x.abs();
    if t < 1.0 {
        1.0 - (a + 3.0) * t.powi(2) + (a + 2.0) * t.powi(3)
    } else if t < 2.0 {
        -4.0 * a + 8.0 * a * t - 5.0 * a * t.powi(2) + a * t.powi(3)
    } else {
        0.0
    }
}

/// Color condition evaluated block by block: every output pixel takes the
/// 4×4 cubic-weighted sum around its block centre in the replicate-padded
/// image, clamped to `[0, 1]`.
pub fn oracle_color_condition(pixels: &[[f64; 3]], w: usize, h: usize) -> Vec<[f64; 3]> {
    const F: usize = 16;
    let pw = w.div_ceil(F) * F;
    let ph = h.div_ceil(F) * F;
    let padded = |x: isize, y: isize| -> [f64; 3] {
        // replicate padding on the right/bottom, edge clamp on all sides
        let cx = x.clamp(0, pw as isize - 1).min(w as isize - 1) as usize;
        let cy = y.clamp(0, ph as isize - 1).min(h as isize - 1) as usize;
        pixels[cy * w + cx]
    };
    let block = |bx: usize, by: usize| -> [f64; 3] {
        let sx = (bx * F) as f64 + (F as f64 - 1.0) / 2.0;
        let sy = (by * F) as f64 + (F as f64 - 1.0) / 2.0;
        let mut acc = [0.0; 3];
        for iy in (sy.floor() as isize - 1)..=(sy.floor() as isize + 2) {
            for ix in (sx.floor() as isize - 1)..=(sx.floor() as isize + 2) {
                let wgt = keys_cubic(sx - ix as f64) * keys_cubic(sy - iy as f64);
                let p = padded(ix, iy);
                for c in 0..3 {
                    acc[c] += wgt * p[c];
                }
            }
        }
        acc.map(|v| v.clamp(0.0, 1.0))
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            out.push(block(x / F, y / F));
        }
    }
    out
}

/// Every pixel within Euclidean distance `r` of a set pixel.
pub fn oracle_dilate(m: &BinaryMask, r: u32) -> Vec<bool> {
    let (w, h) = m.dims();
    let r2 = i64::from(r) * i64::from(r);
    let set: Vec<(i64, i64)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| m.get(x, y))
        .map(|(x, y)| (x as i64, y as i64))
        .collect();
    let mut out = vec![false; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            out[(y as usize) * w + x as usize] = set.iter().any(|&(sx, sy)| (sx - x).pow(2) + (sy - y).pow(2) <= r2);
        }
    }
    out
}

pub fn oracle_union(masks: &[&BinaryMask], w: usize, h: usize) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| masks.iter().any(|m| m.get(x, y))).unwrap()
}

/// Independent per-pixel evaluation of the full stroke compilation.
pub struct OracleBundle {
    pub edge_cond: Vec<f64>,
    pub color_cond: Vec<[f64; 3]>,
    pub mask: Vec<bool>,
    pub masked_image: Vec<[f64; 3]>,
}

pub fn oracle_compile(img: &Image, strokes: &[BrushStroke], p: u32) -> OracleBundle {
    let (w, h) = img.dims();
    let of_kind = |want: &str| -> BinaryMask {
        let ms: Vec<&BinaryMask> = strokes
            .iter()
            .filter(|s| s.kind().as_str() == want)
            .map(|s| s.mask())
            .collect();
        oracle_union(&ms, w, h)
    };
    let e = oracle_edges(img);
    let e_sub = oracle_subtract(&e, &of_kind("subtract"));
    let edge_cond = oracle_add(&e_sub, &of_kind("add"));

    let mut blended = image_pixels(img);
    for s in strokes {
        if let BrushStroke::Color { mask, color, opacity } = s {
            blended = oracle_blend(&blended, mask, color.map(f64::from), f64::from(*opacity));
        }
    }
    let color_cond = oracle_color_condition(&blended, w, h);

    let all: Vec<&BinaryMask> = strokes.iter().map(|s| s.mask()).collect();
    let mask = oracle_dilate(&oracle_union(&all, w, h), p);
    let masked_image = image_pixels(img)
        .into_iter()
        .zip(&mask)
        .map(|(p, &m)| if m { [0.0; 3] } else { p })
        .collect();
    OracleBundle {
        edge_cond,
        color_cond,
        mask,
        masked_image,
    }
}

pub fn oracle_mse(a: &Image, b: &Image) -> f64 {
    let (pa, pb) = (image_pixels(a), image_pixels(b));
    let mut total = 0.0;
    for (x, y) in pa.iter().zip(&pb) {
        for c in 0..3 {
            total += (x[c] - y[c]).powi(2);
        }
    }
    total / (3 * pa.len()) as f64
}

pub fn oracle_psnr(a: &Image, b: &Image) -> f64 {
    let m = oracle_mse(a, b);
    if m == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * m.log10()
    }
}

/// Mean SSIM over all 8×8 windows and channels, with two-pass statistics.
pub fn oracle_ssim(a: &Image, b: &Image) -> f64 {
    const WIN: usize = 8;
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (w, h) = a.dims();
    let mut scores = Vec::new();
    for c in 0..3 {
        for y0 in 0..=h - WIN {
            for x0 in 0..=w - WIN {
                let mut xa = Vec::with_capacity(WIN * WIN);
                let mut xb = Vec::with_capacity(WIN * WIN);
                for y in y0..y0 + WIN {
                    for x in x0..x0 + WIN {
                        xa.push(px(a, x, y)[c]);
                        xb.push(px(b, x, y)[c]);
                    }
                }
                let n = xa.len() as f64;
                let ma = xa.iter().sum::<f64>() / n;
                let mb = xb.iter().sum::<f64>() / n;
                let va = xa.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / n;
                let vb = xb.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
                let cov = xa.iter().zip(&xb).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>() / n;
                scores.push(((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2)));
            }
        }
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}

pub fn oracle_density(mask: &BinaryMask, edges: &EdgeMap) -> f64 {
    let (w, h) = mask.dims();
    let (mut sum, mut n) = (0.0, 0usize);
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                sum += f64::from(edges.get(x, y));
                n += 1;
            }
        }
    }
    sum / n as f64
}

/// Top `k` indices by repeated arg-max; the first maximum wins ties.
pub fn oracle_top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut taken = vec![false; scores.len()];
    let mut out = Vec::new();
    while out.len() < k.min(scores.len()) {
        let mut best: Option<usize> = None;
        for i in 0..scores.len() {
            if !taken[i] && best.map_or(true, |b| scores[i] > scores[b]) {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        out.push(b);
    }
    out
}

/// Mean-fill inpainting followed by the edge overlay inside `region`.
pub fn oracle_mean_fill_composite(img: &Image, grown: &BinaryMask, region: &BinaryMask, edges: &EdgeMap) -> Vec<[f64; 3]> {
    let (w, h) = img.dims();
    let mut ring = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if grown.get(x, y) {
                continue;
            }
            let nbrs = [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)];
            if nbrs.iter().any(|&(nx, ny)| nx < w && ny < h && grown.get(nx, ny)) {
                ring.push(px(img, x, y));
            }
        }
    }
    let fill = if ring.is_empty() {
        [0.5; 3]
    } else {
        [0, 1, 2].map(|c| ring.iter().map(|p| p[c]).sum::<f64>() / ring.len() as f64)
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut p = if grown.get(x, y) { fill } else { px(img, x, y) };
            if region.get(x, y) {
                let k = 1.0 - f64::from(edges.get(x, y));
                p = p.map(|v| v * k);
            }
            out.push(p);
        }
    }
    out
}

pub fn max_abs_rgb(a: &[[f64; 3]], b: &Image) -> f64 {
    a.iter()
        .zip(image_pixels(b))
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).abs()))
        .fold(0.0, f64::max)
}

pub fn max_abs_plane(a: &[f64], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(p, &q)| (p - f64::from(q)).abs()).fold(0.0, f64::max)
}

pub mod net {
    use brushdiff::diffusion::{DenoiseInput, DualBranchModel, Group, InpaintInput, Tensor, TokenCondition, UNetSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub const TRAIN_STEPS: usize = 1000;

    pub fn model(n: usize, width: usize, lc: usize, seed: u64) -> DualBranchModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DualBranchModel::new(UNetSpec::new(n, width, lc), TRAIN_STEPS, &mut rng).unwrap()
    }

    /// Gives every zero convolution random weights so the branches inject.
    pub fn wake_zero_convs(m: &mut DualBranchModel, std: f64, rng: &mut impl Rng) {
        let (a, b) = m.zero_conv_params();
        for id in a.into_iter().chain(b) {
            let t = m.params_mut().get_mut(id);
            let shape = t.shape.clone();
            *t = Tensor::randn(&shape, std, rng);
        }
    }

    pub struct Inputs {
        pub z_t: Tensor,
        pub t: f64,
        pub tokens: TokenCondition,
        pub inpaint: InpaintInput,
        pub control: Tensor,
    }

    impl Inputs {
        pub fn random(lc: usize, h: usize, w: usize, rng: &mut impl Rng) -> Self {
            let mask = Tensor::new(
                vec![1, h, w],
                (0..h * w).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect(),
            );
            let prompts = ["", "red circle", "blue square", "green triangle"];
            Self {
                z_t: Tensor::randn(&[lc, h, w], 1.0, rng),
                t: rng.gen_range(0..TRAIN_STEPS) as f64,
                tokens: TokenCondition::from_prompt(prompts[rng.gen_range(0..prompts.len())]),
                inpaint: InpaintInput {
                    z_masked: Tensor::randn(&[lc, h, w], 1.0, rng),
                    mask,
                },
                control: Tensor::new(vec![4, h, w], (0..4 * h * w).map(|_| rng.gen::<f64>()).collect()),
            }
        }

        pub fn full(&self) -> DenoiseInput<'_> {
            DenoiseInput {
                z_t: &self.z_t,
                t: self.t,
                tokens: &self.tokens,
                inpaint: Some(&self.inpaint),
                control: Some(&self.control),
            }
        }
    }

    pub struct GradSample {
        pub name: String,
        pub analytic: f64,
        pub numeric: f64,
    }

    impl GradSample {
        pub fn rel_error(&self) -> f64 {
            let scale = self.analytic.abs().max(self.numeric.abs()).max(1e-10);
            (self.analytic - self.numeric).abs() / scale
        }
    }

    /// Analytic vs central-difference gradients of the noise loss for `count`
    /// randomly chosen branch parameter entries.
    pub fn gradient_check(seed: u64, count: usize) -> Vec<GradSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lc, n, width) = (3, 4, 6);
        let mut m = model(n, width, lc, seed);
        wake_zero_convs(&mut m, 0.3, &mut rng);
        let inputs = Inputs::random(lc, 4, 4, &mut rng);
        let target = Tensor::randn(&[lc, 4, 4], 1.0, &mut rng);
        let trainable = |g: Group| g.is_branch();
        let (_, grads) = m.loss_and_grads(&inputs.full(), &target, &trainable).unwrap();

        let branch: Vec<_> = m.params().ids().filter(|&id| m.params().group(id).is_branch()).collect();
        let loss_at = |m: &DualBranchModel| -> f64 {
            let pred = m.forward(&inputs.full()).unwrap().noise_pred;
            pred.mean_squared_error(&target)
        };
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let id = branch[rng.gen_range(0..branch.len())];
            let k = rng.gen_range(0..m.params().get(id).len());
            let analytic = grads.get(id).map_or(0.0, |g| g.data[k]);
            let h = 1e-5;
            let orig = m.params().get(id).data[k];
            let mut probe = m.clone();
            probe.params_mut().get_mut(id).data[k] = orig + h;
            let up = loss_at(&probe);
            probe.params_mut().get_mut(id).data[k] = orig - h;
            let down = loss_at(&probe);
            out.push(GradSample {
                name: format!("{}[{k}]", m.params().name(id)),
                analytic,
                numeric: (up - down) / (2.0 * h),
            });
        }
        out
    }
}

pub mod corpus {
    use brushdiff::dataset::{AnnotatedImage, Region};
    use brushdiff::image::{BinaryMask, Image};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LABELS: &[&str] = &[
        "a red sports car",
        "The old oak tree.",
        "dog",
        "two wooden chairs",
        "an umbrella",
        "the sky",
        "some green grass!",
        "Birthday Cake",
        "a",
        "window frame",
        "cat",
        "the small white boat",
    ];

    /// Ten 32×32 images of overlapping disc and box regions; region counts
    /// run from 1 to 10 so some images have fewer than five.
    pub fn synthetic(seed: u64) -> Vec<AnnotatedImage> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..10)
            .map(|i| {
                let n_regions = i + 1;
                let mut img = Image::filled(32, 32, [rng.gen(), rng.gen(), rng.gen()]).unwrap();
                let mut regions = Vec::new();
                for _ in 0..n_regions {
                    let (cx, cy) = (rng.gen_range(4.0..28.0), rng.gen_range(4.0..28.0));
                    let r: f64 = rng.gen_range(2.0..9.0);
                    let disc = rng.gen_bool(0.5);
                    let color = [rng.gen(), rng.gen(), rng.gen()];
                    let mask = BinaryMask::from_fn(32, 32, |x, y| {
                        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                        if disc {
                            dx * dx + dy * dy <= r * r
                        } else {
                            dx.abs() <= r && dy.abs() <= r * 0.6
                        }
                    })
                    .unwrap();
                    for y in 0..32 {
                        for x in 0..32 {
                            if mask.get(x, y) {
                                img.set(x, y, color);
                            }
                        }
                    }
                    regions.push(Region {
                        mask,
                        label: LABELS[rng.gen_range(0..LABELS.len())].to_string(),
                        description: String::new(),
                    });
                }
                AnnotatedImage::new(format!("img{i:02}"), img, regions).unwrap()
            })
            .collect()
    }
}

pub mod api;
