//! Scene assembly: flow specification → bubble list → database lookup → placement
//! inside the channel → min-compositing, plus labels and density maps.

mod density;
mod export;
mod paint;
mod scene;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{interpolate, FeatureVector};

pub use density::{density_map, DensityMap};
pub use export::{export, read_labels_csv, read_meta, LabelRow, SceneMeta, CSV_HEADER};
pub use paint::{paint, prepare_sprite, Sprite};
pub use scene::{synthesize, synthesize_with_order, Label, LabelSet, Scene};

/// Smallest painted diameter in pixels.
pub const MIN_DIAMETER_PX: f64 = 4.0;

/// Lateral void-fraction profile across the channel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Uniform,
    /// One peak at mid-channel.
    Center,
    /// Two peaks, `wall_offset` from either wall.
    Double,
    /// One peak at the left wall.
    Side,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSpec {
    pub width: usize,
    pub height: usize,
    /// Pixels per millimetre.
    pub resolution: f64,
    /// Channel walls in millimetres from the left image edge.
    pub wall_left_mm: f64,
    pub wall_right_mm: f64,
    /// Exact bubble count. Takes precedence over `density`.
    pub count: Option<usize>,
    /// Areal number density in bubbles per mm² of visible channel; the count is
    /// then Poisson distributed.
    pub density: Option<f64>,
    pub median_diameter_mm: f64,
    /// Standard deviation of the log diameter.
    pub log_sigma: f64,
    /// Aspect ratio E drawn uniformly from this range.
    pub aspect: (f64, f64),
    pub profile: Profile,
    /// Peak width as a fraction of the channel width.
    pub peak_sigma: f64,
    /// Peak distance from the wall for the double profile, fraction of the width.
    pub wall_offset: f64,
    pub background: f64,
    pub noise: f64,
    /// Density kernel sigma in pixels.
    pub kernel_sigma: f64,
    /// Weights of the database query.
    pub query_weights: [f64; 4],
    pub seed: u64,
}

impl Default for FlowSpec {
    fn default() -> Self {
        FlowSpec {
            width: 256,
            height: 256,
            resolution: 10.0,
            wall_left_mm: 0.0,
            wall_right_mm: 25.6,
            count: Some(20),
            density: None,
            median_diameter_mm: 2.0,
            log_sigma: 0.25,
            aspect: (0.5, 1.0),
            profile: Profile::Uniform,
            peak_sigma: 0.12,
            wall_offset: 0.15,
            background: 0.88,
            noise: 0.01,
            kernel_sigma: 4.0,
            query_weights: [1.0; 4],
            seed: 0,
        }
    }
}

impl FlowSpec {
    /// Left and right walls in pixels.
    pub fn walls_px(&self) -> (f64, f64) {
        (self.wall_left_mm * self.resolution, self.wall_right_mm * self.resolution)
    }

    /// Leftmost and rightmost pixel columns lying wholly inside the channel.
    pub fn channel_columns(&self) -> (i64, i64) {
        let (l, r) = self.walls_px();
        (l.ceil() as i64, r.floor() as i64 - 1)
    }

    pub fn channel_width_px(&self) -> f64 {
        let (l, r) = self.walls_px();
        r - l
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if self.width == 0 || self.height == 0 {
            return bad(format!("image size {}x{} is empty", self.width, self.height));
        }
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return bad(format!("resolution must be positive, got {}", self.resolution));
        }
        let (l, r) = self.walls_px();
        if !(l.is_finite() && r.is_finite() && 0.0 <= l && l < r && r <= self.width as f64 + 1e-9) {
            return bad(format!(
                "walls at {l:.2} and {r:.2} px must satisfy 0 <= left < right <= {}",
                self.width
            ));
        }
        if self.count.is_none() && !self.density.is_some_and(|d| d.is_finite() && d >= 0.0) {
            return bad("need a count or a non-negative density".into());
        }
        if !(self.median_diameter_mm.is_finite() && self.median_diameter_mm > 0.0) {
            return bad(format!("median diameter must be positive, got {}", self.median_diameter_mm));
        }
        if !(self.log_sigma.is_finite() && self.log_sigma >= 0.0) {
            return bad(format!("log_sigma must be >= 0, got {}", self.log_sigma));
        }
        let (lo, hi) = self.aspect;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return bad(format!("aspect range ({lo}, {hi}) must lie in (0, 1]"));
        }
        if !(self.peak_sigma.is_finite() && self.peak_sigma >= 0.01) {
            return bad(format!("peak_sigma must be >= 0.01, got {}", self.peak_sigma));
        }
        if !(0.0..=0.5).contains(&self.wall_offset) {
            return bad(format!("wall_offset must lie in [0, 0.5], got {}", self.wall_offset));
        }
        if !(0.05..=1.0).contains(&self.background) {
            return bad(format!("background must lie in [0.05, 1], got {}", self.background));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad(format!("noise must be >= 0, got {}", self.noise));
        }
        if !(self.kernel_sigma.is_finite() && self.kernel_sigma >= 0.0) {
            return bad(format!("kernel_sigma must be >= 0, got {}", self.kernel_sigma));
        }
        if self.query_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return bad(format!("query weights must be >= 0, got {:?}", self.query_weights));
        }
        if MIN_DIAMETER_PX > 0.9 * self.channel_width_px() {
            return Err(Error::Unsatisfiable(format!(
                "a {MIN_DIAMETER_PX} px bubble does not fit a {:.1} px channel",
                self.channel_width_px()
            )));
        }
        Ok(())
    }

    /// Unnormalized lateral density at `u` in `[0, 1]` across the channel, and an
    /// upper bound of it.
    pub fn profile_density(&self, u: f64) -> (f64, f64) {
        let g = |mu: f64| (-0.5 * ((u - mu) / self.peak_sigma).powi(2)).exp();
        match self.profile {
            Profile::Uniform => (1.0, 1.0),
            Profile::Center => (g(0.5), 1.0),
            Profile::Double => (g(self.wall_offset) + g(1.0 - self.wall_offset), 2.0),
            Profile::Side => (g(0.0), 1.0),
        }
    }

    /// Lateral position in `[0, 1)` by rejection against the profile.
    pub fn sample_lateral(&self, rng: &mut impl Rng) -> f64 {
        loop {
            let u: f64 = rng.random_range(0.0..1.0);
            let (p, bound) = self.profile_density(u);
            if rng.random_range(0.0..bound) < p {
                return u;
            }
        }
    }
}

/// Distances in pixels from a bubble centre to the edges of its footprint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub left: f64,
    pub right: f64,
    pub up: f64,
    pub down: f64,
}

impl Extent {
    /// Bounding extents of an ellipse with semi-axes `a`, `b` rotated by `phi`
    /// (anti-clockwise on screen, y pointing down).
    pub fn of_ellipse(a: f64, b: f64, phi: f64) -> Extent {
        let (s, c) = phi.sin_cos();
        let hx = (a * a * c * c + b * b * s * s).sqrt();
        let hy = (a * a * s * s + b * b * c * c).sqrt();
        Extent {
            left: hx,
            right: hx,
            up: hy,
            down: hy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleInstance {
    pub x: f64,
    pub y: f64,
    /// Depth in `[0, 1]`; metadata only.
    pub z: f64,
    pub a: f64,
    pub b: f64,
    pub target: FeatureVector,
    pub extent: Extent,
    /// Chosen database record, once queried.
    pub record: Option<usize>,
    /// Patch magnification, once a record is chosen.
    pub scale: f64,
    /// Part of the footprint lies above or below the image.
    pub clipped: bool,
}

/// Draws the bubble list of one scene. `pool` supplies the circularity and edge
/// ratio through interpolation of random pairs.
pub fn sample_bubble_list(
    spec: &FlowSpec,
    pool: &[FeatureVector],
    rng: &mut impl Rng,
) -> Result<Vec<BubbleInstance>> {
    spec.validate()?;
    let n = match (spec.count, spec.density) {
        (Some(n), _) => n,
        (None, Some(density)) => {
            let area_mm2 = (spec.wall_right_mm - spec.wall_left_mm) * spec.height as f64 / spec.resolution;
            let lambda = density * area_mm2;
            if lambda > 0.0 {
                Poisson::new(lambda)
                    .map_err(|e| Error::invalid(format!("density: {e}")))?
                    .sample(rng) as usize
            } else {
                0
            }
        }
        (None, None) => unreachable!("validated"),
    };
    if n > 0 && pool.is_empty() {
        return Err(Error::invalid("feature pool is empty"));
    }
    let sizes = LogNormal::new((spec.median_diameter_mm * spec.resolution).ln(), spec.log_sigma)
        .map_err(|e| Error::invalid(format!("size law: {e}")))?;
    let (left, _) = spec.walls_px();
    let width = spec.channel_width_px();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let x = left + spec.sample_lateral(rng) * width;
        let y = rng.random_range(0.0..spec.height as f64);
        let z = rng.random_range(0.0..=1.0);
        let d = sizes.sample(rng).clamp(MIN_DIAMETER_PX, 0.9 * width);
        let (lo, hi) = spec.aspect;
        let e = if lo < hi { rng.random_range(lo..=hi) } else { lo };
        let phi = rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
        let ki = &pool[rng.random_range(0..pool.len())];
        let kj = &pool[rng.random_range(0..pool.len())];
        let mix = interpolate(ki, kj, rng.random_range(0.0..=1.0))?;
        let a = d / (2.0 * e.sqrt());
        let b = d * e.sqrt() / 2.0;
        out.push(BubbleInstance {
            x,
            y,
            z,
            a,
            b,
            target: FeatureVector::new(e, phi, mix.psi, mix.m),
            extent: Extent::of_ellipse(a, b, phi),
            record: None,
            scale: 1.0,
            clipped: false,
        });
    }
    Ok(out)
}

/// Applies the boundary rules: a footprint crossing a wall is shifted by whole
/// pixels until it clears the wall; one crossing the top or bottom image edge stays
/// put and is flagged for cropping. Both may apply to one bubble.
pub fn place_with_boundary(inst: &BubbleInstance, spec: &FlowSpec) -> Result<BubbleInstance> {
    let (l, r) = spec.walls_px();
    let e = inst.extent;
    if e.left + e.right > r - l + 1e-9 {
        return Err(Error::Unsatisfiable(format!(
            "bubble {:.1} px wide does not fit the {:.1} px channel",
            e.left + e.right,
            r - l
        )));
    }
    let mut out = inst.clone();
    let over_left = l - (inst.x - e.left);
    let over_right = inst.x + e.right - r;
    if over_left > 1e-9 {
        out.x += over_left.ceil();
    } else if over_right > 1e-9 {
        out.x -= over_right.ceil();
    }
    if out.x - e.left < l - 1e-9 || out.x + e.right > r + 1e-9 {
        return Err(Error::Unsatisfiable(format!(
            "no whole-pixel shift fits a {:.1} px bubble between walls at {l:.2} and {r:.2} px",
            e.left + e.right
        )));
    }
    out.clipped = out.y - e.up < 0.0 || out.y + e.down > spec.height as f64;
    Ok(out)
}
