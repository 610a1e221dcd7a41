use super::raster::Raster;
use crate::error::{Error, Result};

/// Bilinear resampling with half-pixel-centre alignment (pixel `i` covers `[i, i+1)`).
///
/// Samples outside the source are clamped to the edge, so every output value is a
/// convex combination of input values.
pub fn resize_bilinear(img: &Raster, new_w: usize, new_h: usize) -> Result<Raster> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::invalid("resize target must be at least 1x1"));
    }
    let (w, h) = (img.width(), img.height());
    if w == 0 || h == 0 {
        return Err(Error::invalid("cannot resize an empty raster"));
    }
    if (w, h) == (new_w, new_h) {
        return Ok(img.clone());
    }
    let sx = w as f64 / new_w as f64;
    let sy = h as f64 / new_h as f64;
    let taps = |i: usize, scale: f64, n: usize| -> (usize, usize, f64) {
        let c = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = c.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, c - i0 as f64)
    };
    let xt: Vec<_> = (0..new_w).map(|x| taps(x, sx, w)).collect();
    let yt: Vec<_> = (0..new_h).map(|y| taps(y, sy, h)).collect();
    Ok(Raster::from_fn(new_w, new_h, |x, y| {
        let (x0, x1, fx) = xt[x];
        let (y0, y1, fy) = yt[y];
        let top = img.get(x0, y0) as f64 * (1.0 - fx) + img.get(x1, y0) as f64 * fx;
        let bot = img.get(x0, y1) as f64 * (1.0 - fx) + img.get(x1, y1) as f64 * fx;
        (top * (1.0 - fy) + bot * fy) as f32
    }))
}
