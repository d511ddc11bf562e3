//! Raster types shared by every stage: RGB images, single-channel edge maps
//! and binary masks.
//!
//! Pixel values are stored as `f32` in `[0, 1]`. Images decoded from 8-bit
//! files hold exactly `v / 255`, so re-encoding them is lossless.

use std::io::Cursor;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Rgb};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid dimensions {width}x{height}")]
    InvalidDims { width: usize, height: usize },
    #[error("buffer length {got} does not match {width}x{height}x{channels}")]
    BadLength {
        width: usize,
        height: usize,
        channels: usize,
        got: usize,
    },
    #[error("pixel value {0} outside [0, 1]")]
    OutOfRange(f32),
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimMismatch(usize, usize, usize, usize),
    #[error("decode failed: {0}")]
    Decode(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn check_dims(width: usize, height: usize) -> Result<(), RasterError> {
    if width == 0 || height == 0 {
        return Err(RasterError::InvalidDims { width, height });
    }
    Ok(())
}

fn check_values(data: &[f32]) -> Result<(), RasterError> {
    match data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(RasterError::OutOfRange(*v)),
        None => Ok(()),
    }
}

/// Returns an error unless both rasters share the same extent.
pub fn ensure_same_dims(a: (usize, usize), b: (usize, usize)) -> Result<(), RasterError> {
    if a != b {
        return Err(RasterError::DimMismatch(a.0, a.1, b.0, b.1));
    }
    Ok(())
}

/// Three-channel image, row-major interleaved RGB.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        if data.len() != width * height * 3 {
            return Err(RasterError::BadLength {
                width,
                height,
                channels: 3,
                got: data.len(),
            });
        }
        check_values(&data)?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        check_values(&rgb)?;
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from a per-pixel closure; values are clamped to `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 3],
    ) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        for (c, v) in rgb.into_iter().enumerate() {
            self.data[i + c] = v.clamp(0.0, 1.0);
        }
    }

    /// Rounds every value to the nearest multiple of 1/255.
    pub fn quantize_u8(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&v| (v * 255.0).round() / 255.0)
                .collect(),
        }
    }

    pub fn to_rgb8(&self) -> ImageBuffer<Rgb<u8>, Vec<u8>> {
        let raw = self
            .data
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        ImageBuffer::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length checked at construction")
    }

    pub fn from_dynamic(img: &image::DynamicImage) -> Result<Self, RasterError> {
        let rgb = img.to_rgb8();
        let data = rgb.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        Image::new(rgb.width() as usize, rgb.height() as usize, data)
    }

    /// Decodes any supported container (PNG in this build).
    pub fn decode(bytes: &[u8]) -> Result<Self, RasterError> {
        let img = image::load_from_memory(bytes).map_err(|e| RasterError::Decode(e.to_string()))?;
        Self::from_dynamic(&img)
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb8()
            .write_to(&mut out, ImageFormat::Png)
            .expect("png encoding into memory");
        out.into_inner()
    }

    pub fn load_png(path: &Path) -> Result<Self, RasterError> {
        Self::decode(&std::fs::read(path)?)
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        std::fs::write(path, self.encode_png())?;
        Ok(())
    }

    /// Rec. 601 luma plane.
    pub fn luma(&self) -> Vec<f32> {
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect()
    }
}

/// Single-channel soft edge map with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl EdgeMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(RasterError::BadLength {
                width,
                height,
                channels: 1,
                got: data.len(),
            });
        }
        check_values(&data)?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self, RasterError> {
        Self::new(width, height, vec![0.0; width * height])
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// Strictly binary mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        if bits.len() != width * height {
            return Err(RasterError::BadLength {
                width,
                height,
                channels: 1,
                got: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self, RasterError> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn full(width: usize, height: usize) -> Result<Self, RasterError> {
        Self::new(width, height, vec![true; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.bits[y * self.width + x] = on;
    }

    /// `1.0` where set, `0.0` elsewhere.
    #[inline]
    pub fn value(&self, x: usize, y: usize) -> f32 {
        if self.get(x, y) {
            1.0
        } else {
            0.0
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask, RasterError> {
        ensure_same_dims(self.dims(), other.dims())?;
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a || *b)
                .collect(),
        })
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    /// Tight pixel bounding box `(xmin, ymin, xmax, ymax)`, inclusive.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bbox = Some(match bbox {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bbox
    }

    /// Any non-black pixel is treated as set.
    pub fn decode(bytes: &[u8]) -> Result<Self, RasterError> {
        let img = image::load_from_memory(bytes).map_err(|e| RasterError::Decode(e.to_string()))?;
        let luma = img.to_luma8();
        let bits = luma.as_raw().iter().map(|&v| v > 0).collect();
        BinaryMask::new(luma.width() as usize, luma.height() as usize, bits)
    }

    /// 1-bit grayscale PNG.
    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::One);
            let mut writer = enc.write_header().expect("png header");
            let stride = self.width.div_ceil(8);
            let mut packed = vec![0u8; stride * self.height];
            for y in 0..self.height {
                for x in 0..self.width {
                    if self.get(x, y) {
                        packed[y * stride + x / 8] |= 0x80 >> (x % 8);
                    }
                }
            }
            writer.write_image_data(&packed).expect("png body");
        }
        out
    }

    pub fn load_png(path: &Path) -> Result<Self, RasterError> {
        Self::decode(&std::fs::read(path)?)
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        std::fs::write(path, self.encode_png())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_and_bad_dims() {
        assert!(Image::new(0, 1, vec![]).is_err());
        assert!(Image::new(1, 1, vec![0.0, 1.5, 0.0]).is_err());
        assert!(EdgeMap::new(2, 1, vec![0.0]).is_err());
    }

    #[test]
    fn u8_png_round_trip_is_exact() {
        let img = Image::from_fn(7, 5, |x, y| {
            [x as f32 / 6.0, y as f32 / 4.0, ((x * y) % 3) as f32 / 2.0]
        })
        .unwrap()
        .quantize_u8();
        let back = Image::decode(&img.encode_png()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn one_bit_mask_png_round_trip() {
        let m = BinaryMask::from_fn(13, 3, |x, y| (x + y) % 3 == 0).unwrap();
        let bytes = m.encode_png();
        assert_eq!(BinaryMask::decode(&bytes).unwrap(), m);
    }

    #[test]
    fn bounding_box_is_tight() {
        let mut m = BinaryMask::empty(10, 10).unwrap();
        assert_eq!(m.bounding_box(), None);
        m.set(2, 7, true);
        m.set(5, 3, true);
        assert_eq!(m.bounding_box(), Some((2, 3, 5, 7)));
    }
}
