use super::{FlowSpec, LabelSet};
use crate::error::Result;
use crate::imgproc::Raster;

/// Kernels are cut off this many sigmas from the centre (then renormalized).
const CUTOFF: f64 = 4.0;

/// Real-valued density raster kept in `f64` so the integral stays exact.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DensityMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Grayscale view `min(1, value * scale)`.
    pub fn to_raster(&self, scale: f64) -> Raster {
        Raster::from_fn(self.width, self.height, |x, y| (self.get(x, y) * scale).min(1.0) as f32)
    }
}

/// Sum of unit-mass Gaussians (sigma from the spec) at the label centres, each
/// renormalized over the pixels it covers inside the image.
pub fn density_map(labels: &LabelSet, spec: &FlowSpec) -> Result<DensityMap> {
    let (w, h) = (spec.width, spec.height);
    let mut map = DensityMap {
        width: w,
        height: h,
        data: vec![0.0; w * h],
    };
    let sigma = spec.kernel_sigma;
    let reach = (CUTOFF * sigma).ceil() as i64;
    for l in &labels.labels {
        let px = (l.x.floor() as i64).clamp(0, w as i64 - 1);
        let py = (l.y.floor() as i64).clamp(0, h as i64 - 1);
        let xs = (px - reach).max(0)..=(px + reach).min(w as i64 - 1);
        let ys = (py - reach).max(0)..=(py + reach).min(h as i64 - 1);
        let weight = |x: i64, y: i64| {
            if sigma == 0.0 {
                ((x, y) == (px, py)) as u8 as f64
            } else {
                let dx = x as f64 + 0.5 - l.x;
                let dy = y as f64 + 0.5 - l.y;
                (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
            }
        };
        let mut total = 0.0;
        for y in ys.clone() {
            for x in xs.clone() {
                total += weight(x, y);
            }
        }
        if total <= 0.0 {
            // a very narrow kernel can underflow on every pixel centre
            map.data[py as usize * w + px as usize] += 1.0;
            continue;
        }
        for y in ys.clone() {
            for x in xs.clone() {
                map.data[y as usize * w + x as usize] += weight(x, y) / total;
            }
        }
    }
    Ok(map)
}
