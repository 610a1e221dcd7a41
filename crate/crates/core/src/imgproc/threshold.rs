use super::raster::{BitMask, Raster};
use crate::error::{Error, Result};

const OTSU_BINS: usize = 256;

/// Result of [`threshold_otsu`]. Pixels with intensity `< threshold` form the dark class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Otsu {
    pub threshold: f32,
    /// Set when the region has no intensity variance; `threshold` is then that constant.
    pub degenerate: bool,
}

/// Otsu threshold over `region` (whole image when `None`).
///
/// The histogram spans the region's own `[min, max]` with 256 bins, so low-contrast
/// regions are resolved as finely as high-contrast ones. When several cuts maximise the
/// between-class variance, the middle of the first maximal run is returned.
pub fn threshold_otsu(img: &Raster, region: Option<&BitMask>) -> Result<Otsu> {
    let values: Vec<f32> = match region {
        Some(m) => {
            if !img.same_size(m) {
                return Err(Error::Shape("region and image differ in size".into()));
            }
            img.data()
                .iter()
                .zip(m.bits())
                .filter(|(_, &b)| b)
                .map(|(&v, _)| v)
                .collect()
        }
        None => img.data().to_vec(),
    };
    otsu_values(&values)
}

pub(crate) fn otsu_values(values: &[f32]) -> Result<Otsu> {
    if values.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let (lo, hi) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo <= f32::EPSILON * hi.abs().max(1.0) {
        return Ok(Otsu {
            threshold: lo,
            degenerate: true,
        });
    }
    let span = (hi - lo) as f64;
    let mut count = [0f64; OTSU_BINS];
    let mut sum = [0f64; OTSU_BINS];
    for &v in values {
        let b = (((v - lo) as f64 / span) * OTSU_BINS as f64) as usize;
        let b = b.min(OTSU_BINS - 1);
        count[b] += 1.0;
        sum[b] += v as f64;
    }
    let total_n: f64 = count.iter().sum();
    let total_s: f64 = sum.iter().sum();

    // cut c puts bins [0, c) in the dark class
    let mut best = f64::NEG_INFINITY;
    let mut run = (1usize, 1usize);
    let mut in_run = false;
    let (mut n0, mut s0) = (0.0, 0.0);
    for c in 1..OTSU_BINS {
        n0 += count[c - 1];
        s0 += sum[c - 1];
        let n1 = total_n - n0;
        if n0 == 0.0 || n1 == 0.0 {
            in_run = false;
            continue;
        }
        let mu0 = s0 / n0;
        let mu1 = (total_s - s0) / n1;
        let between = n0 * n1 * (mu0 - mu1) * (mu0 - mu1);
        let tol = 1e-12 * between.abs().max(1e-300);
        if between > best + tol {
            best = between;
            run = (c, c);
            in_run = true;
        } else if in_run && (between - best).abs() <= tol {
            run.1 = c;
        } else {
            in_run = false;
        }
    }
    let cut = (run.0 + run.1) as f64 / 2.0;
    Ok(Otsu {
        threshold: (lo as f64 + cut * span / OTSU_BINS as f64) as f32,
        degenerate: false,
    })
}

/// Local-mean threshold: a pixel is set iff it is darker than the mean of its
/// `window x window` neighbourhood minus `offset`. Windows are clipped at the borders.
pub fn threshold_adaptive(img: &Raster, window: usize, offset: f32) -> Result<BitMask> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "adaptive window must be odd and >= 3, got {window}"
        )));
    }
    let (w, h) = (img.width(), img.height());
    if window > 2 * w.min(h) {
        return Err(Error::invalid(format!(
            "adaptive window {window} exceeds twice the smaller image side ({})",
            w.min(h)
        )));
    }
    // summed-area table with a zero row and column
    let mut sat = vec![0f64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += img.get(x, y) as f64;
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    let r = window / 2;
    Ok(BitMask::from_fn(w, h, |x, y| {
        let x0 = x.saturating_sub(r);
        let y0 = y.saturating_sub(r);
        let x1 = (x + r + 1).min(w);
        let y1 = (y + r + 1).min(h);
        let s = sat[y1 * (w + 1) + x1] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0]
            + sat[y0 * (w + 1) + x0];
        let mean = s / ((x1 - x0) * (y1 - y0)) as f64;
        (img.get(x, y) as f64) < mean - offset as f64
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive scan of the 256 candidate thresholds k/255; returns the best ones.
    fn scan_oracle(values: &[f32]) -> Vec<f32> {
        let mut scored: Vec<(f64, f32)> = (1..256)
            .map(|k| {
                let t = k as f32 / 255.0;
                let (d, b): (Vec<f32>, Vec<f32>) = values.iter().partition(|&&v| v < t);
                if d.is_empty() || b.is_empty() {
                    return (f64::NEG_INFINITY, t);
                }
                let m = |s: &[f32]| s.iter().map(|&v| v as f64).sum::<f64>() / s.len() as f64;
                let (w0, w1) = (d.len() as f64, b.len() as f64);
                (w0 * w1 * (m(&d) - m(&b)).powi(2), t)
            })
            .collect();
        let best = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        scored.retain(|s| (s.0 - best).abs() <= 1e-9 * best);
        scored.into_iter().map(|s| s.1).collect()
    }

    fn split(values: &[f32], t: f32) -> usize {
        values.iter().filter(|&&v| v < t).count()
    }

    #[test]
    fn bimodal_split_is_even() {
        let mut v = vec![0.0f32; 50];
        v.extend(vec![1.0f32; 50]);
        let img = Raster::from_vec(10, 10, v.clone()).unwrap();
        let o = threshold_otsu(&img, None).unwrap();
        assert!(!o.degenerate);
        assert!(o.threshold > 0.0 && o.threshold < 1.0);
        assert_eq!(split(&v, o.threshold), 50);
    }

    #[test]
    fn constant_image_is_degenerate() {
        let img = Raster::new(4, 4, 0.5);
        let o = threshold_otsu(&img, None).unwrap();
        assert!(o.degenerate);
        assert_eq!(o.threshold, 0.5);
    }

    #[test]
    fn three_levels_match_exhaustive_scan() {
        let mut v = vec![0.1f32; 100];
        v.extend(vec![0.5f32; 10]);
        v.extend(vec![0.9f32; 100]);
        let img = Raster::from_vec(210, 1, v.clone()).unwrap();
        let o = threshold_otsu(&img, None).unwrap();
        assert!(o.threshold > 0.1 && o.threshold < 0.9);
        let ours = split(&v, o.threshold);
        let oracle: Vec<usize> = scan_oracle(&v).iter().map(|&t| split(&v, t)).collect();
        assert!(oracle.contains(&ours), "split {ours} not among oracle splits {oracle:?}");
    }

    #[test]
    fn empty_region_errors() {
        let img = Raster::new(3, 3, 0.2);
        let m = BitMask::new(3, 3);
        assert!(matches!(threshold_otsu(&img, Some(&m)), Err(Error::EmptyRegion)));
    }

    #[test]
    fn region_restricts_statistics() {
        let img = Raster::from_fn(4, 1, |x, _| [0.0, 0.2, 0.8, 1.0][x]);
        let m = BitMask::from_fn(4, 1, |x, _| x >= 1);
        let o = threshold_otsu(&img, Some(&m)).unwrap();
        assert!(o.threshold > 0.2 && o.threshold <= 0.8);
    }

    #[test]
    fn adaptive_constant_is_empty() {
        let img = Raster::new(9, 9, 0.6);
        assert!(threshold_adaptive(&img, 3, 0.05).unwrap().is_empty());
    }

    #[test]
    fn adaptive_single_dark_pixel() {
        let img = Raster::from_fn(7, 7, |x, y| if (x, y) == (3, 3) { 0.0 } else { 0.9 });
        let m = threshold_adaptive(&img, 3, 0.1).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.get(3, 3));
    }

    #[test]
    fn adaptive_ramp_matches_local_mean_oracle() {
        // staircase ramp, steps two pixels wide: the last pixel of every step sits
        // below its local mean, the first one above it
        let img = Raster::from_fn(20, 20, |x, _| (x / 2) as f32 / 10.0);
        let m = threshold_adaptive(&img, 5, 0.0).unwrap();
        let oracle = BitMask::from_fn(20, 20, |x, y| {
            let mut s = 0.0f64;
            let mut n = 0.0;
            for yy in y.saturating_sub(2)..(y + 3).min(20) {
                for xx in x.saturating_sub(2)..(x + 3).min(20) {
                    s += img.get(xx, yy) as f64;
                    n += 1.0;
                }
            }
            (img.get(x, y) as f64) < s / n
        });
        assert_eq!(m, oracle);
        let frac = m.count() as f64 / 400.0;
        assert!(frac > 0.25 && frac < 0.75, "fraction {frac}");
    }

    #[test]
    fn adaptive_rejects_bad_windows() {
        let img = Raster::new(4, 4, 0.5);
        assert!(threshold_adaptive(&img, 4, 0.0).is_err());
        assert!(threshold_adaptive(&img, 1, 0.0).is_err());
        assert!(threshold_adaptive(&img, 9, 0.0).is_err());
    }
}
