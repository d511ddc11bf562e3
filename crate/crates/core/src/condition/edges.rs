use std::collections::BTreeMap;
use std::sync::Arc;

use super::ConditionError;
use crate::image::{ensure_same_dims, BinaryMask, EdgeMap, Image};

pub const GRADIENT_EXTRACTOR_ID: &str = "gradient";
/// Reserved id for a learned extractor supplied by the host application.
pub const EXTERNAL_EXTRACTOR_ID: &str = "external";

/// Maps an image to a soft edge map in `[0, 1]`.
pub trait EdgeExtractor: Send + Sync {
    fn id(&self) -> &str;
    fn extract(&self, image: &Image) -> Result<EdgeMap, ConditionError>;
}

/// Central-difference gradient magnitude on luma, edge-clamped at the border.
///
/// The magnitude is scaled so that a full black-to-white step reads `1.0`
/// and clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradientExtractor;

impl EdgeExtractor for GradientExtractor {
    fn id(&self) -> &str {
        GRADIENT_EXTRACTOR_ID
    }

    fn extract(&self, image: &Image) -> Result<EdgeMap, ConditionError> {
        let (w, h) = image.dims();
        let luma = image.luma();
        let at = |x: isize, y: isize| -> f64 {
            let x = x.clamp(0, w as isize - 1) as usize;
            let y = y.clamp(0, h as isize - 1) as usize;
            luma[y * w + x] as f64
        };
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h as isize {
            for x in 0..w as isize {
                let gx = (at(x + 1, y) - at(x - 1, y)) / 2.0;
                let gy = (at(x, y + 1) - at(x, y - 1)) / 2.0;
                let mag = (gx * gx + gy * gy).sqrt();
                out.push((2.0 * mag).min(1.0) as f32);
            }
        }
        Ok(EdgeMap::from_raw_unchecked(w, h, out))
    }
}

/// Lookup table from extractor id to implementation.
#[derive(Clone)]
pub struct ExtractorRegistry {
    entries: BTreeMap<String, Option<Arc<dyn EdgeExtractor>>>,
}

impl Default for ExtractorRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

impl ExtractorRegistry {
    /// `gradient` is built in; `external` is known but has no backend until
    /// [`ExtractorRegistry::register`] supplies one.
    pub fn with_defaults() -> Self {
        let mut entries: BTreeMap<String, Option<Arc<dyn EdgeExtractor>>> = BTreeMap::new();
        entries.insert(GRADIENT_EXTRACTOR_ID.into(), Some(Arc::new(GradientExtractor)));
        entries.insert(EXTERNAL_EXTRACTOR_ID.into(), None);
        Self { entries }
    }

    pub fn register(&mut self, extractor: Arc<dyn EdgeExtractor>) {
        self.entries.insert(extractor.id().to_string(), Some(extractor));
    }

    pub fn resolve(&self, id: &str) -> Result<Arc<dyn EdgeExtractor>, ConditionError> {
        match self.entries.get(id) {
            Some(Some(e)) => Ok(e.clone()),
            Some(None) => Err(ConditionError::ExtractorUnavailable(id.to_string())),
            None => Err(ConditionError::UnknownExtractor(id.to_string())),
        }
    }
}

pub fn extract_edges(image: &Image, extractor: &dyn EdgeExtractor) -> Result<EdgeMap, ConditionError> {
    let edges = extractor.extract(image)?;
    ensure_same_dims(image.dims(), edges.dims())?;
    Ok(edges)
}

/// `E ⊙ (1 − M_sub)`.
pub fn apply_subtract(edges: &EdgeMap, m_sub: &BinaryMask) -> Result<EdgeMap, ConditionError> {
    ensure_same_dims(edges.dims(), m_sub.dims())?;
    let data = edges
        .data()
        .iter()
        .zip(m_sub.bits())
        .map(|(&e, &m)| e * (1.0 - if m { 1.0 } else { 0.0 }))
        .collect();
    Ok(EdgeMap::from_raw_unchecked(edges.width(), edges.height(), data))
}

/// `E_sub + M_add ⊙ (1 − E_sub)`.
pub fn apply_add(e_sub: &EdgeMap, m_add: &BinaryMask) -> Result<EdgeMap, ConditionError> {
    ensure_same_dims(e_sub.dims(), m_add.dims())?;
    let data = e_sub
        .data()
        .iter()
        .zip(m_add.bits())
        .map(|(&e, &m)| {
            let m = if m { 1.0 } else { 0.0 };
            (e + m * (1.0 - e)).clamp(0.0, 1.0)
        })
        .collect();
    Ok(EdgeMap::from_raw_unchecked(e_sub.width(), e_sub.height(), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_no_edges() {
        let img = Image::filled(9, 7, [0.3, 0.6, 0.9]).unwrap();
        let e = extract_edges(&img, &GradientExtractor).unwrap();
        assert!(e.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn registry_lookup_errors() {
        let reg = ExtractorRegistry::with_defaults();
        assert!(reg.resolve("gradient").is_ok());
        assert!(matches!(
            reg.resolve("external"),
            Err(ConditionError::ExtractorUnavailable(_))
        ));
        assert!(matches!(reg.resolve("pidinet"), Err(ConditionError::UnknownExtractor(_))));
    }

    #[test]
    fn registering_external_backend() {
        struct Flat;
        impl EdgeExtractor for Flat {
            fn id(&self) -> &str {
                EXTERNAL_EXTRACTOR_ID
            }
            fn extract(&self, image: &Image) -> Result<EdgeMap, ConditionError> {
                Ok(EdgeMap::zeros(image.width(), image.height())?)
            }
        }
        let mut reg = ExtractorRegistry::with_defaults();
        reg.register(Arc::new(Flat));
        assert_eq!(reg.resolve("external").unwrap().id(), "external");
    }

    #[test]
    fn subtract_and_add_pointwise() {
        let e = EdgeMap::new(2, 1, vec![0.7, 0.4]).unwrap();
        let on = BinaryMask::new(2, 1, vec![true, false]).unwrap();
        assert_eq!(apply_subtract(&e, &on).unwrap().data(), &[0.0, 0.4]);
        let add = BinaryMask::new(2, 1, vec![false, true]).unwrap();
        assert_eq!(apply_add(&e, &add).unwrap().data(), &[0.7, 1.0]);
    }

    #[test]
    fn dims_checked() {
        let e = EdgeMap::zeros(3, 3).unwrap();
        let m = BinaryMask::empty(2, 3).unwrap();
        assert!(apply_subtract(&e, &m).is_err());
        assert!(apply_add(&e, &m).is_err());
    }
}
