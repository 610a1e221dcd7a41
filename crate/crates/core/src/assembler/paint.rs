//! Rescaling a database patch to its bubble and compositing it onto the canvas.

use super::{BubbleInstance, Extent, FlowSpec};
use crate::error::{Error, Result};
use crate::features::fit_ellipse;
use crate::imgproc::{central_moments, largest_component, resize_bilinear, BitMask, Raster};
use crate::record::BubbleRecord;

/// Patch pixels at least this far below the background take part in compositing.
pub const TRANSPARENCY_MARGIN: f64 = 0.05;

/// A record patch rescaled for one bubble.
#[derive(Clone, Debug, PartialEq)]
pub struct Sprite {
    pub patch: Raster,
    pub mask: BitMask,
    /// Mask centroid in patch coordinates (pixel `i` covers `[i, i + 1)`).
    pub cx: f64,
    pub cy: f64,
    /// Added to patch values so the patch background matches the scene background.
    pub offset: f32,
}

impl Sprite {
    /// Top-left canvas pixel of the patch for a bubble centred at `(x, y)`.
    pub fn origin(&self, x: f64, y: f64) -> (i64, i64) {
        ((x - self.cx).round() as i64, (y - self.cy).round() as i64)
    }
}

fn border_median(img: &Raster) -> f32 {
    let (w, h) = (img.width(), img.height());
    let mut v: Vec<f32> = (0..w)
        .flat_map(|x| [img.get(x, 0), img.get(x, h - 1)])
        .chain((1..h.saturating_sub(1)).flat_map(|y| [img.get(0, y), img.get(w - 1, y)]))
        .collect();
    v.sort_by(f32::total_cmp);
    v[v.len() / 2]
}

fn scaled_mask(mask: &BitMask, side: usize) -> Result<BitMask> {
    let src = Raster::from_fn(mask.width(), mask.height(), |x, y| mask.get(x, y) as u8 as f32);
    let up = resize_bilinear(&src, side, side)?;
    let mut m = largest_component(&BitMask::from_fn(side, side, |x, y| up.get(x, y) >= 0.5)).fill_holes();
    if m.is_empty() {
        m.set(side / 2, side / 2, true);
    }
    Ok(m)
}

/// Rescales `record` so its fitted semi-major axis matches `inst.a`, shrinking it
/// further if its footprint would not fit between the walls. Returns the sprite and
/// the instance snapped to the pixel grid, with the footprint extents and the scale
/// filled in.
pub fn prepare_sprite(record: &BubbleRecord, inst: &BubbleInstance, spec: &FlowSpec) -> Result<(Sprite, BubbleInstance)> {
    let fit = fit_ellipse(&central_moments(&record.mask)?)?;
    let (c0, c1) = spec.channel_columns();
    let room = (c1 - c0 + 1).max(1) as usize;
    let side = record.side();
    let mut scale = inst.a / fit.a;
    let mut attempt = 0;
    let (patch, mask, bbox) = loop {
        let s = ((side as f64 * scale).round() as usize).max(3);
        let mask = scaled_mask(&record.mask, s)?;
        let bbox = mask.bbox().expect("mask is non-empty");
        let wide = bbox.2 - bbox.0 + 1;
        if wide <= room {
            break (resize_bilinear(&record.patch, s, s)?, mask, bbox);
        }
        attempt += 1;
        if attempt > 30 {
            return Err(Error::Unsatisfiable(format!(
                "cannot shrink a bubble into a {room} px channel"
            )));
        }
        scale *= 0.98 * room as f64 / wide as f64;
    };
    let mom = central_moments(&mask)?;
    let (cx, cy) = (mom.cx + 0.5, mom.cy + 0.5);
    let sprite = Sprite {
        offset: (spec.background as f32 - border_median(&record.patch)),
        patch,
        mask,
        cx,
        cy,
    };
    let (ox, oy) = sprite.origin(inst.x, inst.y);
    let (x0, y0, x1, y1) = bbox;
    let out = BubbleInstance {
        x: ox as f64 + cx,
        y: oy as f64 + cy,
        extent: Extent {
            left: cx - x0 as f64,
            right: (x1 + 1) as f64 - cx,
            up: cy - y0 as f64,
            down: (y1 + 1) as f64 - cy,
        },
        scale,
        ..inst.clone()
    };
    Ok((sprite, out))
}

/// Min-composites `sprite` centred at the instance position. Pixels outside the mask
/// or not darker than `background - 0.05` are transparent; pixels off the canvas are
/// dropped. Returns the number of pixels painted.
pub fn paint(canvas: &mut Raster, sprite: &Sprite, inst: &BubbleInstance, background: f64) -> usize {
    let (ox, oy) = sprite.origin(inst.x, inst.y);
    let cut = (background - TRANSPARENCY_MARGIN) as f32;
    let (w, h) = (canvas.width() as i64, canvas.height() as i64);
    let mut painted = 0;
    for (px, py) in sprite.mask.iter_set() {
        let (x, y) = (ox + px as i64, oy + py as i64);
        if x < 0 || y < 0 || x >= w || y >= h {
            continue;
        }
        let v = (sprite.patch.get(px, py) + sprite.offset).clamp(0.0, 1.0);
        if v < cut {
            let (x, y) = (x as usize, y as usize);
            if v < canvas.get(x, y) {
                canvas.set(x, y, v);
            }
            painted += 1;
        }
    }
    painted
}
