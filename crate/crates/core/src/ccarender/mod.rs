//! Concentric-ellipse (CCA) bubble renderer and the synthetic training corpus.
//!
//! A bubble is a dark band between two similar closed curves: the outer boundary
//! `r(theta) = ellipse(a, b) * (1 + sum eps_n cos(n theta + psi_n))` and the same
//! curve scaled by `s = sqrt(1 - m)`. The band therefore covers exactly the fraction
//! `m` of the projected area.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{BitMask, Raster};
use crate::patchpipe::{normalize_patch, Patch};
use crate::record::BubbleRecord;

/// Subsamples per axis for pixels near a boundary.
const SUPERSAMPLE: usize = 8;

/// Largest bubble extent as a fraction of the canvas side.
const FIT_FRACTION: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcaParams {
    /// Semi-axes in pixels, `a >= b`.
    pub a: f64,
    pub b: f64,
    pub phi: f64,
    /// Edge (dark band) area fraction.
    pub m: f64,
    /// `(amplitude, phase)` for harmonics 2, 3, 4, 5 in that order.
    pub wobble: Vec<(f64, f64)>,
    pub i_bg: f32,
    pub i_edge: f32,
    pub i_in: f32,
    pub noise: f32,
    /// Seed of the additive noise.
    pub seed: u64,
}

impl Default for CcaParams {
    fn default() -> Self {
        CcaParams {
            a: 20.0,
            b: 20.0,
            phi: 0.0,
            m: 0.3,
            wobble: Vec::new(),
            i_bg: 0.88,
            i_edge: 0.15,
            i_in: 0.65,
            noise: 0.02,
            seed: 0,
        }
    }
}

impl CcaParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if !(self.b > 0.0 && self.a >= self.b && self.a.is_finite()) {
            return bad(format!("semi-axes must satisfy a >= b > 0, got a={} b={}", self.a, self.b));
        }
        if !(0.0..1.0).contains(&self.m) {
            return bad(format!("edge ratio must lie in [0, 1), got {}", self.m));
        }
        if self.wobble.len() > 4 {
            return bad(format!("at most 4 wobble harmonics (n = 2..5), got {}", self.wobble.len()));
        }
        if let Some(&(eps, _)) = self.wobble.iter().find(|(eps, _)| !(0.0..=0.15).contains(eps)) {
            return bad(format!("wobble amplitude {eps} outside [0, 0.15]"));
        }
        let levels = [self.i_edge, self.i_in, self.i_bg];
        if levels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return bad("intensities must lie in [0, 1]".into());
        }
        if !(self.i_edge < self.i_in && self.i_in < self.i_bg) {
            return bad("intensities must satisfy edge < interior < background".into());
        }
        if !(self.noise >= 0.0) {
            return bad(format!("noise sigma must be >= 0, got {}", self.noise));
        }
        Ok(())
    }

    /// `2 * a * (1 + sum eps_n)`: an upper bound on the bubble's diameter.
    pub fn extent(&self) -> f64 {
        2.0 * self.a.max(self.b) * (1.0 + self.wobble.iter().map(|w| w.0).sum::<f64>())
    }
}

/// Boundary geometry of one bubble placed at `(cx, cy)` (continuous coordinates; the
/// centre of pixel `(x, y)` is `(x + 0.5, y + 0.5)`).
struct Shape<'a> {
    p: &'a CcaParams,
    cx: f64,
    cy: f64,
    cos: f64,
    sin: f64,
    s: f64,
}

/// Region of a sample point.
#[derive(Clone, Copy, PartialEq)]
enum Zone {
    Outside,
    Band,
    Inside,
}

impl<'a> Shape<'a> {
    fn new(p: &'a CcaParams, cx: f64, cy: f64) -> Self {
        Shape {
            p,
            cx,
            cy,
            cos: p.phi.cos(),
            sin: p.phi.sin(),
            s: (1.0 - p.m).sqrt(),
        }
    }

    /// Polar radius and outer boundary radius of a point in the bubble frame.
    fn radii(&self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        let rho = u.hypot(v);
        let th = v.atan2(u);
        let (a, b) = (self.p.a, self.p.b);
        let ell = a * b / ((b * th.cos()).powi(2) + (a * th.sin()).powi(2)).sqrt();
        let mut k = 1.0;
        for (i, &(eps, psi)) in self.p.wobble.iter().enumerate() {
            k += eps * ((i as f64 + 2.0) * th + psi).cos();
        }
        (rho, ell * k)
    }

    fn zone(&self, x: f64, y: f64) -> Zone {
        let (rho, r) = self.radii(x, y);
        if rho > r {
            Zone::Outside
        } else if rho > self.s * r {
            Zone::Band
        } else {
            Zone::Inside
        }
    }

    fn level(&self, z: Zone) -> f64 {
        match z {
            Zone::Outside => self.p.i_bg as f64,
            Zone::Band => self.p.i_edge as f64,
            Zone::Inside => self.p.i_in as f64,
        }
    }

    /// Area-averaged intensity and outer-region coverage of pixel `(x, y)`.
    fn pixel(&self, x: usize, y: usize) -> (f64, f64) {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let (rho, r) = self.radii(px, py);
        // sample boundaries are at most ~1 px away in radius once the slope of the
        // wobbled curve is accounted for; 2 px keeps every straddling pixel
        let near = (rho - r).abs() < 2.0 || (rho - self.s * r).abs() < 2.0;
        if !near {
            let z = self.zone(px, py);
            return (self.level(z), if z == Zone::Outside { 0.0 } else { 1.0 });
        }
        let n = SUPERSAMPLE;
        let (mut sum, mut cover) = (0.0, 0usize);
        for j in 0..n {
            for i in 0..n {
                let sx = x as f64 + (i as f64 + 0.5) / n as f64;
                let sy = y as f64 + (j as f64 + 0.5) / n as f64;
                let z = self.zone(sx, sy);
                sum += self.level(z);
                if z != Zone::Outside {
                    cover += 1;
                }
            }
        }
        let nn = (n * n) as f64;
        (sum / nn, cover as f64 / nn)
    }
}

/// One bubble of a multi-bubble render.
#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    pub params: CcaParams,
    pub cx: f64,
    pub cy: f64,
}

/// Renders several bubbles onto a flat background; overlapping bubbles combine by
/// per-pixel minimum. Returns the image and one mask per bubble (pixels at least half
/// covered). Intensities and noise of the first bubble's parameters are used for the
/// background; each bubble keeps its own band and interior levels.
pub fn render_scene(
    width: usize,
    height: usize,
    bubbles: &[Placement],
    background: f32,
    noise: f32,
    seed: u64,
) -> Result<(Raster, Vec<BitMask>)> {
    let mut canvas = vec![background as f64; width * height];
    let mut masks = Vec::with_capacity(bubbles.len());
    for pl in bubbles {
        pl.params.validate()?;
        let shape = Shape::new(&pl.params, pl.cx, pl.cy);
        let reach = pl.params.extent() / 2.0 + 2.0;
        let x0 = (pl.cx - reach).floor().max(0.0) as usize;
        let y0 = (pl.cy - reach).floor().max(0.0) as usize;
        let x1 = ((pl.cx + reach).ceil().max(0.0) as usize).min(width);
        let y1 = ((pl.cy + reach).ceil().max(0.0) as usize).min(height);
        let mut mask = BitMask::new(width, height);
        for y in y0..y1 {
            for x in x0..x1 {
                let (v, cover) = shape.pixel(x, y);
                if cover > 0.0 {
                    // blend the bubble against this scene's background, then composite
                    let v = v + (1.0 - cover) * (background as f64 - pl.params.i_bg as f64);
                    let c = &mut canvas[y * width + x];
                    *c = c.min(v);
                }
                if cover >= 0.5 {
                    mask.set(x, y, true);
                }
            }
        }
        masks.push(mask);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<f32> = canvas.into_iter().map(|v| v as f32).collect();
    if noise > 0.0 {
        let normal = Normal::new(0.0f32, noise).map_err(|e| Error::invalid(e.to_string()))?;
        for v in &mut data {
            *v += normal.sample(&mut rng);
        }
    }
    Ok((Raster::from_vec_clamped(width, height, data)?, masks))
}

/// Renders one bubble centred on a `size x size` canvas.
pub fn render(params: &CcaParams, size: usize) -> Result<(Raster, BitMask)> {
    params.validate()?;
    let limit = FIT_FRACTION * size as f64;
    if params.extent() > limit {
        return Err(Error::BubbleExceedsCanvas {
            extent: params.extent(),
            limit,
        });
    }
    let c = size as f64 / 2.0;
    let pl = Placement {
        params: params.clone(),
        cx: c,
        cy: c,
    };
    let (img, mut masks) = render_scene(size, size, &[pl], params.i_bg, params.noise, params.seed)?;
    Ok((img, masks.pop().expect("one mask per bubble")))
}

/// Sampling ranges of [`make_corpus`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusRanges {
    pub e: (f64, f64),
    pub phi: (f64, f64),
    pub m: (f64, f64),
    pub wobble: (f64, f64),
    /// Equivalent diameter `2 sqrt(a b)` of the rendered bubble, pixels.
    pub diameter: (f64, f64),
    pub i_bg: f32,
    pub i_edge: f32,
    pub i_in: f32,
    pub noise: f32,
}

impl Default for CorpusRanges {
    fn default() -> Self {
        CorpusRanges {
            e: (0.4, 1.0),
            phi: (-FRAC_PI_2, FRAC_PI_2),
            m: (0.05, 0.9),
            wobble: (0.0, 0.08),
            diameter: (32.0, 80.0),
            i_bg: 0.88,
            i_edge: 0.15,
            i_in: 0.65,
            noise: 0.02,
        }
    }
}

impl CorpusRanges {
    fn validate(&self) -> Result<()> {
        let ordered = |(lo, hi): (f64, f64)| lo <= hi && lo.is_finite() && hi.is_finite();
        let ok = ordered(self.e)
            && ordered(self.phi)
            && ordered(self.m)
            && ordered(self.wobble)
            && ordered(self.diameter)
            && self.e.0 > 0.0
            && self.e.1 <= 1.0
            && self.m.0 >= 0.0
            && self.m.1 < 1.0
            && self.wobble.0 >= 0.0
            && self.wobble.1 <= 0.15
            && self.diameter.0 >= 8.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid corpus ranges: {self:?}")))
        }
    }

    /// Draws the render parameters for one corpus entry.
    pub fn sample(&self, rng: &mut impl Rng) -> CcaParams {
        let mut uni = |(lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let e = uni(self.e);
        // (-pi/2, pi/2]: flip the closed end of the default range
        let phi = crate::features::wrap_phi(uni(self.phi));
        let m = uni(self.m);
        let d = uni(self.diameter);
        let wobble = (0..4)
            .map(|_| (uni(self.wobble), uni((0.0, 2.0 * PI))))
            .collect();
        CcaParams {
            a: d / (2.0 * e.sqrt()),
            b: d * e.sqrt() / 2.0,
            phi,
            m,
            wobble,
            i_bg: self.i_bg,
            i_edge: self.i_edge,
            i_in: self.i_in,
            noise: self.noise,
            seed: rng.next_u64(),
        }
    }
}

pub mod fixtures;

/// Attempts per record before the corpus generator gives up on an index.
const CORPUS_RETRIES: usize = 20;

/// `n` normalized records of side `side`; features are extracted from the pixels, not
/// copied from the render parameters. Entry `i` depends only on `(seed, i)`.
pub fn make_corpus(n: usize, seed: u64, ranges: &CorpusRanges, side: usize) -> Result<Vec<BubbleRecord>> {
    if n == 0 {
        return Err(Error::invalid("corpus size must be at least 1"));
    }
    ranges.validate()?;
    (0..n).map(|i| corpus_entry(i, seed, ranges, side)).collect()
}

fn corpus_entry(i: usize, seed: u64, ranges: &CorpusRanges, side: usize) -> Result<BubbleRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    let mut last = None;
    for _ in 0..CORPUS_RETRIES {
        let params = ranges.sample(&mut rng);
        let size = (params.extent() / FIT_FRACTION).ceil() as usize + 8;
        let (image, mask) = render(&params, size)?;
        let patch = Patch {
            image,
            mask,
            origin: (0, 0),
        };
        match normalize_patch(&patch, side) {
            Ok(rec) => return Ok(rec),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}
