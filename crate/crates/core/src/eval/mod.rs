//! Image quality and conditioning metrics.

mod report;

pub use report::{evaluate_dirs, EvalReport, ImageReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::condition::{extract_edges, ConditionError, EdgeExtractor};
use crate::image::{BinaryMask, EdgeMap, Image};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimMismatch((usize, usize), (usize, usize)),
    #[error("image {0:?} is smaller than the {1}px SSIM window")]
    TooSmall((usize, usize), usize),
    #[error("mask is empty")]
    EmptyMask,
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error("{0}")]
    Io(String),
}

fn same_dims(a: (usize, usize), b: (usize, usize)) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::DimMismatch(a, b));
    }
    Ok(())
}

/// Mean squared error over all pixels and channels.
pub fn mse(a: &Image, b: &Image) -> Result<f64, EvalError> {
    same_dims(a.dims(), b.dims())?;
    let n = a.data().len() as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum::<f64>()
        / n)
}

/// `10·log10(1 / MSE)` in dB; identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, EvalError> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / m).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 8,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

/// Mean SSIM over every `window × window` position (stride 1) and channel,
/// with population statistics and dynamic range 1.
pub fn ssim(a: &Image, b: &Image, cfg: SsimConfig) -> Result<f64, EvalError> {
    same_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    let win = cfg.window;
    if win == 0 || w < win || h < win {
        return Err(EvalError::TooSmall((w, h), win));
    }
    let c1 = cfg.k1 * cfg.k1;
    let c2 = cfg.k2 * cfg.k2;
    let n = (win * win) as f64;
    let (ad, bd) = (a.data(), b.data());
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..3 {
        for y0 in 0..=h - win {
            for x0 in 0..=w - win {
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for y in y0..y0 + win {
                    for x in x0..x0 + win {
                        let i = (y * w + x) * 3 + c;
                        let (va, vb) = (ad[i] as f64, bd[i] as f64);
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                }
                let (ma, mb) = (sa / n, sb / n);
                let va = (saa / n - ma * ma).max(0.0);
                let vb = (sbb / n - mb * mb).max(0.0);
                let cov = sab / n - ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Pearson correlation of two samples mapped to `[0, 1]` by `(r + 1) / 2`.
/// Two constant samples score 1 when equal and 0.5 otherwise; one constant
/// sample scores 0.5.
pub fn correlation_score(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
        cov += (x - ma) * (y - mb);
    }
    const EPS: f64 = 1e-12;
    match (va <= EPS, vb <= EPS) {
        (true, true) => {
            if (ma - mb).abs() <= 1e-9 {
                1.0
            } else {
                0.5
            }
        }
        (true, false) | (false, true) => 0.5,
        _ => ((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0) + 1.0) / 2.0,
    }
}

/// How well the edges of `output` follow `e_cond` inside `mask`.
pub fn edge_alignment(
    output: &Image,
    e_cond: &EdgeMap,
    mask: &BinaryMask,
    extractor: &dyn EdgeExtractor,
) -> Result<f64, EvalError> {
    same_dims(output.dims(), e_cond.dims())?;
    same_dims(output.dims(), mask.dims())?;
    if mask.is_empty() {
        return Err(EvalError::EmptyMask);
    }
    let e_out = extract_edges(output, extractor)?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (i, &m) in mask.bits().iter().enumerate() {
        if m {
            a.push(e_out.data()[i] as f64);
            b.push(e_cond.data()[i] as f64);
        }
    }
    Ok(correlation_score(&a, &b))
}

/// Largest absolute channel difference outside `mask`.
pub fn unmasked_preservation(output: &Image, source: &Image, mask: &BinaryMask) -> Result<f64, EvalError> {
    same_dims(output.dims(), source.dims())?;
    same_dims(output.dims(), mask.dims())?;
    let mut worst = 0.0f64;
    for (i, &m) in mask.bits().iter().enumerate() {
        if !m {
            for c in 0..3 {
                let d = (output.data()[i * 3 + c] as f64 - source.data()[i * 3 + c] as f64).abs();
                worst = worst.max(d);
            }
        }
    }
    Ok(worst)
}

/// Serializes non-finite values as the strings `"inf"` / `"-inf"` / `"nan"`.
pub mod float_sentinel {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad float `{other}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(with = "float_sentinel")]
    pub psnr: f64,
    pub ssim: f64,
    /// Absent when no condition bundle was supplied.
    pub edge_alignment: Option<f64>,
    pub unmasked_preservation: Option<f64>,
    pub ssim_config: SsimConfig,
}
