//! A normalized single-bubble patch together with its extracted features.

use crate::error::{Error, Result};
use crate::features::{extract_features, segment_bubble, FeatureVector};
use crate::imgproc::{BitMask, Raster};

/// Square bubble patch, its foreground mask and `k = zeta(patch, mask)`.
///
/// Records are canonical: the patch sits on the 8-bit grid and the features are
/// rounded to `f32`, so a record survives a trip through the database file unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct BubbleRecord {
    pub patch: Raster,
    pub mask: BitMask,
    pub features: FeatureVector,
}

impl BubbleRecord {
    /// Quantizes `patch`, derives its mask and extracts features.
    ///
    /// With `strict`, patches whose dark set splits into several sizeable pieces are
    /// rejected instead of being reduced to their largest piece.
    pub fn from_patch(patch: &Raster, strict: bool) -> Result<BubbleRecord> {
        if patch.width() != patch.height() {
            return Err(Error::Shape(format!(
                "record patches are square, got {}x{}",
                patch.width(),
                patch.height()
            )));
        }
        let patch = patch.quantized();
        let seg = segment_bubble(&patch)?;
        if strict && !seg.is_single() {
            return Err(Error::ComponentCount(seg.components));
        }
        if touches_border(&seg.mask) {
            return Err(Error::DegenerateMask("bubble touches the patch border".into()));
        }
        let features = extract_features(&patch, &seg.mask)?.to_f32_precision();
        if !features.is_valid() {
            return Err(Error::DegenerateMask(format!(
                "features out of range: {:?}",
                features.to_array()
            )));
        }
        Ok(BubbleRecord {
            patch,
            mask: seg.mask,
            features,
        })
    }

    pub fn side(&self) -> usize {
        self.patch.width()
    }
}

fn touches_border(mask: &BitMask) -> bool {
    let (w, h) = (mask.width(), mask.height());
    mask.iter_set().any(|(x, y)| x == 0 || y == 0 || x + 1 == w || y + 1 == h)
}
