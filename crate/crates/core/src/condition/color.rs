use super::{BrushStroke, ConditionError};
use crate::image::{ensure_same_dims, Image};
use crate::resample::{crop, downsample_cubic, pad_replicate, upsample_nearest};

/// Side of the color blocks in the color condition.
pub const COLOR_BLOCK: usize = 16;

/// `(1 − α·M) ⊙ I + α·M·c` for a single color stroke.
pub fn blend_color(image: &Image, stroke: &BrushStroke) -> Result<Image, ConditionError> {
    let BrushStroke::Color {
        mask,
        color,
        opacity,
    } = stroke
    else {
        return Err(ConditionError::NotColorStroke(stroke.kind()));
    };
    ensure_same_dims(image.dims(), mask.dims())?;
    let alpha = *opacity as f64;
    let data = image
        .data()
        .chunks_exact(3)
        .zip(mask.bits())
        .flat_map(|(px, &m)| {
            let am = if m { alpha } else { 0.0 };
            [0, 1, 2].map(|c| ((1.0 - am) * px[c] as f64 + am * color[c] as f64) as f32)
        })
        .collect::<Vec<f32>>();
    Ok(Image::from_fn(image.width(), image.height(), |x, y| {
        let i = (y * image.width() + x) * 3;
        [data[i], data[i + 1], data[i + 2]]
    })?)
}

/// Reduces an image to 16×16 color blocks: cubic downsampling by 16 followed
/// by nearest-neighbour upsampling back to the original size.
///
/// Sizes that are not multiples of 16 are edge-padded first and cropped
/// afterwards. Cubic overshoot is clamped to `[0, 1]`.
pub fn make_color_condition(blended: &Image) -> Result<Image, ConditionError> {
    let (w, h) = blended.dims();
    if w < COLOR_BLOCK || h < COLOR_BLOCK {
        return Err(ConditionError::TooSmall {
            width: w,
            height: h,
            block: COLOR_BLOCK,
        });
    }
    let mut channels = Vec::with_capacity(3);
    for c in 0..3 {
        let plane: Vec<f64> = blended.data().iter().skip(c).step_by(3).map(|&v| v as f64).collect();
        let (padded, pw, ph) = pad_replicate(&plane, w, h, COLOR_BLOCK);
        let small: Vec<f64> = downsample_cubic(&padded, pw, ph, COLOR_BLOCK)
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect();
        let big = upsample_nearest(&small, pw / COLOR_BLOCK, ph / COLOR_BLOCK, COLOR_BLOCK);
        channels.push(crop(&big, pw, w, h));
    }
    Ok(Image::from_fn(w, h, |x, y| {
        let i = y * w + x;
        [channels[0][i] as f32, channels[1][i] as f32, channels[2][i] as f32]
    })?)
}
