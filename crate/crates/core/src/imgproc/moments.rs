use serde::{Deserialize, Serialize};

use super::raster::BitMask;
use crate::error::{Error, Result};

/// Per-axis variance of a uniform unit pixel.
const PIXEL_VARIANCE: f64 = 1.0 / 12.0;

/// Area, centroid and normalized second-order central moments of a binary region.
///
/// Coordinates are raster coordinates: `x` is the column, `y` the row (downward).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub area: f64,
    pub cx: f64,
    pub cy: f64,
    pub mu20: f64,
    pub mu02: f64,
    pub mu11: f64,
}

pub fn central_moments(mask: &BitMask) -> Result<Moments> {
    let mut n = 0usize;
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    for (x, y) in mask.iter_set() {
        n += 1;
        sx += x as f64;
        sy += y as f64;
    }
    if n == 0 {
        return Err(Error::DegenerateMask("empty mask has no moments".into()));
    }
    let a = n as f64;
    let (cx, cy) = (sx / a, sy / a);
    let (mut s20, mut s02, mut s11) = (0.0, 0.0, 0.0);
    for (x, y) in mask.iter_set() {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        s20 += dx * dx;
        s02 += dy * dy;
        s11 += dx * dy;
    }
    Ok(Moments {
        area: a,
        cx,
        cy,
        mu20: s20 / a + PIXEL_VARIANCE,
        mu02: s02 / a + PIXEL_VARIANCE,
        mu11: s11 / a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn rectangle_four_by_two() {
        let m = BitMask::from_fn(6, 4, |x, y| (1..5).contains(&x) && (1..3).contains(&y));
        let mo = central_moments(&m).unwrap();
        // x offsets -1.5,-0.5,0.5,1.5 -> mean square 1.25; y offsets +-0.5 -> 0.25
        assert_eq!(mo.area, 8.0);
        assert_abs_diff_eq!(mo.mu20, 1.25 + 1.0 / 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mo.mu02, 0.25 + 1.0 / 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mo.mu11, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mo.cx, 2.5);
        assert_abs_diff_eq!(mo.cy, 1.5);
    }

    #[test]
    fn single_pixel() {
        let mut m = BitMask::new(3, 3);
        m.set(2, 0, true);
        let mo = central_moments(&m).unwrap();
        assert_eq!(mo.area, 1.0);
        assert_abs_diff_eq!(mo.mu20, 1.0 / 12.0);
        assert_abs_diff_eq!(mo.mu02, 1.0 / 12.0);
        assert_eq!(mo.mu11, 0.0);
    }

    #[test]
    fn diagonal_pair() {
        let m = BitMask::from_fn(2, 2, |x, y| x == y);
        assert_abs_diff_eq!(central_moments(&m).unwrap().mu11, 0.25);
    }

    #[test]
    fn empty_is_error() {
        assert!(central_moments(&BitMask::new(4, 4)).is_err());
    }

    proptest! {
        #[test]
        fn covariance_is_psd(bits in proptest::collection::vec(any::<bool>(), 64)) {
            let m = BitMask::from_vec(8, 8, bits).unwrap();
            prop_assume!(!m.is_empty());
            let mo = central_moments(&m).unwrap();
            prop_assert!(mo.area > 0.0);
            prop_assert!(mo.mu20 >= 0.0 && mo.mu02 >= 0.0);
            prop_assert!(mo.mu20 * mo.mu02 - mo.mu11 * mo.mu11 >= -1e-12);
        }
    }
}
