//! Small-neighbourhood smoothing for noisy patches.

use super::{BitMask, Raster};

const CROSS: [(isize, isize); 5] = [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)];

/// 3x3 median filter with edge replication.
pub fn median3(img: &Raster) -> Raster {
    let (w, h) = (img.width(), img.height());
    let at = |x: isize, y: isize| img.get(x.clamp(0, w as isize - 1) as usize, y.clamp(0, h as isize - 1) as usize);
    Raster::from_fn(w, h, |x, y| {
        let mut v = [0.0f32; 9];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = at(x as isize + (i % 3) as isize - 1, y as isize + (i / 3) as isize - 1);
        }
        v.sort_unstable_by(f32::total_cmp);
        v[4]
    })
}

/// Erosion by the 4-neighbour cross; pixels outside the image count as unset.
pub fn erode_cross(mask: &BitMask) -> BitMask {
    BitMask::from_fn(mask.width(), mask.height(), |x, y| {
        CROSS.iter().all(|&(dx, dy)| mask.get_signed(x as isize + dx, y as isize + dy))
    })
}

pub fn dilate_cross(mask: &BitMask) -> BitMask {
    BitMask::from_fn(mask.width(), mask.height(), |x, y| {
        CROSS.iter().any(|&(dx, dy)| mask.get_signed(x as isize + dx, y as isize + dy))
    })
}

/// Opening by the cross: drops one-pixel spurs, bridges and specks.
pub fn open_cross(mask: &BitMask) -> BitMask {
    dilate_cross(&erode_cross(mask))
}
