//! On-disk layout of a condition bundle.
//!
//! ```text
//! <dir>/edge_cond.pfm      grayscale Portable Float Map ("Pf"), f32 LE
//! <dir>/color_cond.pfm     RGB Portable Float Map ("PF"), f32 LE
//! <dir>/mask.png           1-bit grayscale PNG
//! <dir>/masked_image.pfm   RGB Portable Float Map
//! <dir>/meta.toml          BundleMeta
//! ```
//!
//! PFM stores rows bottom-to-top with a negative scale for little-endian
//! data. All files are lossless, so save/load round-trips bit-exactly.

use std::fs;
use std::path::Path;

use super::{BundleMeta, ConditionBundle, ConditionError};
use crate::image::{BinaryMask, EdgeMap, Image};

pub const EDGE_FILE: &str = "edge_cond.pfm";
pub const COLOR_FILE: &str = "color_cond.pfm";
pub const MASK_FILE: &str = "mask.png";
pub const MASKED_FILE: &str = "masked_image.pfm";
pub const META_FILE: &str = "meta.toml";

/// Encodes a float raster with 1 or 3 channels as PFM.
pub fn encode_pfm(width: usize, height: usize, channels: usize, data: &[f32]) -> Vec<u8> {
    assert!(channels == 1 || channels == 3);
    assert_eq!(data.len(), width * height * channels);
    let tag = if channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{tag}\n{width} {height}\n-1.0\n").into_bytes();
    let stride = width * channels;
    for y in (0..height).rev() {
        for v in &data[y * stride..(y + 1) * stride] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Returns `(width, height, channels, data)` with rows top-to-bottom.
pub fn decode_pfm(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f32>), ConditionError> {
    let bad = |m: &str| ConditionError::Format(format!("pfm: {m}"));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header not ascii"))?);
    }
    // exactly one whitespace byte separates header and raster
    pos += 1;
    let channels = match fields[0] {
        "PF" => 3,
        "Pf" => 1,
        _ => return Err(bad("bad magic")),
    };
    let width: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let scale: f32 = fields[3].parse().map_err(|_| bad("scale"))?;
    let body = bytes.get(pos..).ok_or_else(|| bad("missing raster"))?;
    if body.len() != width * height * channels * 4 {
        return Err(bad("raster length"));
    }
    let stride = width * channels;
    let mut data = vec![0f32; width * height * channels];
    for (row_idx, row) in body.chunks_exact(stride * 4).enumerate() {
        let y = height - 1 - row_idx;
        for (i, b) in row.chunks_exact(4).enumerate() {
            let raw = [b[0], b[1], b[2], b[3]];
            data[y * stride + i] = if scale < 0.0 {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
        }
    }
    Ok((width, height, channels, data))
}

fn read_image(path: &Path) -> Result<Image, ConditionError> {
    let (w, h, c, data) = decode_pfm(&fs::read(path)?)?;
    if c != 3 {
        return Err(ConditionError::Format(format!("{} is not RGB", path.display())));
    }
    Ok(Image::new(w, h, data)?)
}

pub fn save_bundle(bundle: &ConditionBundle, dir: &Path) -> Result<(), ConditionError> {
    fs::create_dir_all(dir)?;
    let (w, h) = bundle.dims();
    fs::write(dir.join(EDGE_FILE), encode_pfm(w, h, 1, bundle.edge_cond.data()))?;
    fs::write(dir.join(COLOR_FILE), encode_pfm(w, h, 3, bundle.color_cond.data()))?;
    fs::write(dir.join(MASKED_FILE), encode_pfm(w, h, 3, bundle.masked_image.data()))?;
    fs::write(dir.join(MASK_FILE), bundle.mask.encode_png())?;
    let meta = toml::to_string_pretty(&bundle.meta).map_err(|e| ConditionError::Format(e.to_string()))?;
    fs::write(dir.join(META_FILE), meta)?;
    Ok(())
}

pub fn load_bundle(dir: &Path) -> Result<ConditionBundle, ConditionError> {
    let meta: BundleMeta = toml::from_str(&fs::read_to_string(dir.join(META_FILE))?)
        .map_err(|e| ConditionError::Format(e.to_string()))?;
    let (w, h, c, edge) = decode_pfm(&fs::read(dir.join(EDGE_FILE))?)?;
    if c != 1 {
        return Err(ConditionError::Format("edge_cond must be single channel".into()));
    }
    let bundle = ConditionBundle {
        edge_cond: EdgeMap::new(w, h, edge)?,
        color_cond: read_image(&dir.join(COLOR_FILE))?,
        mask: BinaryMask::load_png(&dir.join(MASK_FILE))?,
        masked_image: read_image(&dir.join(MASKED_FILE))?,
        meta,
    };
    for dims in [
        bundle.color_cond.dims(),
        bundle.mask.dims(),
        bundle.masked_image.dims(),
        (bundle.meta.width, bundle.meta.height),
    ] {
        crate::image::ensure_same_dims((w, h), dims)?;
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_keeps_bits() {
        let data: Vec<f32> = (0..2 * 3 * 3).map(|i| (i as f32 * 0.123_456_7).fract()).collect();
        let bytes = encode_pfm(2, 3, 3, &data);
        let (w, h, c, back) = decode_pfm(&bytes).unwrap();
        assert_eq!((w, h, c), (2, 3, 3));
        assert_eq!(back, data);
    }

    #[test]
    fn pfm_rejects_garbage() {
        assert!(decode_pfm(b"P6\n1 1\n255\n").is_err());
        assert!(decode_pfm(b"Pf\n2 2\n-1.0\n\0\0\0\0").is_err());
    }
}
