//! Foreground mask of a single-bubble patch.
//!
//! A backlit bubble has three intensity levels: bright background, a slightly darker
//! core, and a dark rim. A global Otsu cut lands either between rim and core or between
//! core and background. In the first case the bright side is itself bimodal and a
//! second Otsu pass on it moves the cut to the background edge, so the mask always
//! covers the whole projected bubble.
//!
//! The cut is made on a 3x3 median of the patch and the dark set is opened before
//! labelling, so pixel noise neither joins the mask nor roughens its outline.

use super::otsu_values;
use crate::error::{Error, Result};
use crate::imgproc::{connected_components, median3, open_cross, BitMask, Connectivity, Raster};

/// Minimum mean gap between the two halves of the bright class for the second pass.
const REFINE_GAP: f32 = 0.12;

/// Dark components at least this fraction of the main one count as separate objects.
const STRAY_FRACTION: f64 = 0.02;

/// Dark components smaller than this (px) are treated as noise.
const STRAY_MIN_AREA: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation {
    /// Largest dark component with its holes filled.
    pub mask: BitMask,
    pub threshold: f32,
    /// Dark components large enough to count as objects (the main one included).
    pub components: usize,
    /// Pixels in all dark components other than the main one.
    pub stray_area: usize,
}

impl Segmentation {
    /// True when the patch shows one object and nothing else of note.
    pub fn is_single(&self) -> bool {
        self.components == 1
    }
}

pub fn segment_bubble(img: &Raster) -> Result<Segmentation> {
    let smooth = median3(img);
    let values = smooth.data();
    let first = otsu_values(values)?;
    if first.degenerate {
        return Err(Error::DegenerateMask("patch has no intensity variation".into()));
    }
    let mut t = first.threshold;
    let bright: Vec<f32> = values.iter().copied().filter(|&v| v >= t).collect();
    if bright.len() >= 2 {
        let second = otsu_values(&bright)?;
        if !second.degenerate {
            let (mut lo, mut nlo, mut hi, mut nhi) = (0.0f64, 0usize, 0.0f64, 0usize);
            for &v in &bright {
                if v < second.threshold {
                    lo += v as f64;
                    nlo += 1;
                } else {
                    hi += v as f64;
                    nhi += 1;
                }
            }
            if nlo > 0 && nhi > 0 && (hi / nhi as f64 - lo / nlo as f64) as f32 >= REFINE_GAP {
                t = second.threshold;
            }
        }
    }

    let dark = open_cross(&BitMask::from_fn(img.width(), img.height(), |x, y| smooth.get(x, y) < t));
    let labels = connected_components(&dark, Connectivity::Eight);
    let Some(main) = labels.largest() else {
        return Err(Error::DegenerateMask("no dark pixels below threshold".into()));
    };
    let sizes = labels.sizes();
    let main_area = sizes[main as usize];
    let floor = (STRAY_FRACTION * main_area as f64).max(STRAY_MIN_AREA as f64);
    let mut components = 0;
    let mut stray_area = 0;
    for (label, &size) in sizes.iter().enumerate().skip(1) {
        if label as u32 != main {
            stray_area += size;
        }
        if size as f64 >= floor || label as u32 == main {
            components += 1;
        }
    }
    Ok(Segmentation {
        mask: labels.mask_of(main).fill_holes(),
        threshold: t,
        components,
        stray_area,
    })
}

/// Filled foreground mask of the dominant bubble in a patch.
pub fn bubble_mask(img: &Raster) -> Result<BitMask> {
    Ok(segment_bubble(img)?.mask)
}
