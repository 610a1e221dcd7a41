//! The four bubble descriptors `k = [E, phi, Psi, m]` and operations on them.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{
    central_moments, connected_components, contour_perimeter, threshold::otsu_values, BitMask,
    Connectivity, Moments, Raster,
};

mod segment;

pub use segment::{bubble_mask, segment_bubble, Segmentation};

/// Component order used everywhere a feature vector is serialized.
pub const COMPONENTS: [&str; 4] = ["E", "phi", "psi", "m"];

/// Feature vector `[E, phi, Psi, m]`, angle in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct FeatureVector {
    pub e: f64,
    pub phi: f64,
    pub psi: f64,
    pub m: f64,
}

impl From<[f64; 4]> for FeatureVector {
    fn from(a: [f64; 4]) -> Self {
        FeatureVector {
            e: a[0],
            phi: a[1],
            psi: a[2],
            m: a[3],
        }
    }
}

impl From<FeatureVector> for [f64; 4] {
    fn from(k: FeatureVector) -> Self {
        k.to_array()
    }
}

impl FeatureVector {
    pub fn new(e: f64, phi: f64, psi: f64, m: f64) -> Self {
        FeatureVector { e, phi, psi, m }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.e, self.phi, self.psi, self.m]
    }

    pub fn get(&self, component: Component) -> f64 {
        self.to_array()[component as usize]
    }

    pub fn with(mut self, component: Component, value: f64) -> Self {
        match component {
            Component::E => self.e = value,
            Component::Phi => self.phi = wrap_phi(value),
            Component::Psi => self.psi = value,
            Component::M => self.m = value,
        }
        self
    }

    /// Checks the documented component ranges.
    pub fn is_valid(&self) -> bool {
        self.e > 0.0
            && self.e <= 1.0
            && self.phi > -FRAC_PI_2
            && self.phi <= FRAC_PI_2
            && self.psi > 0.0
            && self.psi <= 1.0
            && (0.0..=1.0).contains(&self.m)
    }

    /// Rounds every component to `f32`, the storage width of the database.
    pub fn to_f32_precision(self) -> Self {
        let r = |v: f64| v as f32 as f64;
        let mut k = FeatureVector::new(r(self.e), r(self.phi), r(self.psi), r(self.m));
        // f32 rounding can push the angle just outside (-pi/2, pi/2]
        if k.phi > FRAC_PI_2 {
            k.phi = (FRAC_PI_2 as f32).next_down() as f64;
        } else if k.phi <= -FRAC_PI_2 {
            k.phi = (-FRAC_PI_2 as f32).next_up() as f64;
        }
        k
    }
}

/// One of the four components, in serialization order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    #[serde(rename = "E")]
    E = 0,
    #[serde(rename = "phi")]
    Phi = 1,
    #[serde(rename = "psi")]
    Psi = 2,
    #[serde(rename = "m")]
    M = 3,
}

impl Component {
    pub const ALL: [Component; 4] = [Component::E, Component::Phi, Component::Psi, Component::M];

    pub fn name(self) -> &'static str {
        COMPONENTS[self as usize]
    }

    /// Signed difference `a - b`; angles are compared on the period-pi circle.
    pub fn diff(self, a: f64, b: f64) -> f64 {
        match self {
            Component::Phi => wrap_phi(a - b),
            _ => a - b,
        }
    }
}

impl std::str::FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "E" | "e" => Ok(Component::E),
            "phi" | "PHI" | "Phi" => Ok(Component::Phi),
            "psi" | "PSI" | "Psi" => Ok(Component::Psi),
            "m" | "M" => Ok(Component::M),
            other => Err(Error::invalid(format!(
                "unknown feature component `{other}` (expected E, phi, psi or m)"
            ))),
        }
    }
}

/// Maps an angle onto its period-pi representative in `(-pi/2, pi/2]`.
pub fn wrap_phi(phi: f64) -> f64 {
    let mut r = phi.rem_euclid(PI);
    if r > FRAC_PI_2 {
        r -= PI;
    }
    r
}

/// Equal-second-moment ellipse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipseFit {
    pub a: f64,
    pub b: f64,
    pub phi: f64,
}

pub fn fit_ellipse(mom: &Moments) -> Result<EllipseFit> {
    let half_tr = 0.5 * (mom.mu20 + mom.mu02);
    let root = (0.25 * (mom.mu20 - mom.mu02).powi(2) + mom.mu11 * mom.mu11).sqrt();
    let (l1, l2) = (half_tr + root, half_tr - root);
    if l2 <= 0.0 || !l2.is_finite() {
        return Err(Error::DegenerateMask(format!(
            "covariance eigenvalues ({l1}, {l2}) are not both positive"
        )));
    }
    let phi = if l1 - l2 < 1e-6 * mom.area {
        0.0
    } else {
        wrap_phi(0.5 * (2.0 * mom.mu11).atan2(mom.mu20 - mom.mu02))
    };
    Ok(EllipseFit {
        a: 2.0 * l1.sqrt(),
        b: 2.0 * l2.sqrt(),
        phi,
    })
}

pub fn aspect_ratio(fit: &EllipseFit) -> f64 {
    fit.b / fit.a
}

/// `4 pi A / P^2`, clamped to `(0, 1]`.
pub fn circularity(mask: &BitMask) -> Result<f64> {
    let per = contour_perimeter(mask)?;
    let p = if per.steps < 4 { 4.0 } else { per.length };
    let psi = 4.0 * PI * mask.count() as f64 / (p * p);
    Ok(psi.min(1.0))
}

/// Fraction of mask pixels darker than the in-mask Otsu threshold.
pub fn edge_ratio(img: &Raster, mask: &BitMask) -> Result<f64> {
    if !img.same_size(mask) {
        return Err(Error::Shape(format!(
            "image {}x{} and mask {}x{} differ",
            img.width(),
            img.height(),
            mask.width(),
            mask.height()
        )));
    }
    let vals: Vec<f32> = mask.iter_set().map(|(x, y)| img.get(x, y)).collect();
    if vals.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let (lo, hi) = vals
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if hi - lo < 0.1 {
        let mean = vals.iter().map(|&v| v as f64).sum::<f64>() / vals.len() as f64;
        return Ok(if mean < 0.5 { 1.0 } else { 0.0 });
    }
    let t = otsu_values(&vals)?.threshold;
    Ok(vals.iter().filter(|&&v| v < t).count() as f64 / vals.len() as f64)
}

/// The feature extractor: `k = [E, phi, Psi, m]` of a single-component mask.
pub fn extract_features(img: &Raster, mask: &BitMask) -> Result<FeatureVector> {
    let n = connected_components(mask, Connectivity::Eight).count as usize;
    if n != 1 {
        return Err(Error::ComponentCount(n));
    }
    let fit = fit_ellipse(&central_moments(mask)?)?;
    Ok(FeatureVector {
        e: aspect_ratio(&fit),
        phi: fit.phi,
        psi: circularity(mask)?,
        m: edge_ratio(img, mask)?,
    })
}

/// `beta * k_i + (1 - beta) * k_j`, with the angle taken along the shorter arc.
pub fn interpolate(ki: &FeatureVector, kj: &FeatureVector, beta: f64) -> Result<FeatureVector> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid(format!("beta must lie in [0, 1], got {beta}")));
    }
    if beta == 1.0 {
        return Ok(*ki);
    }
    if beta == 0.0 {
        return Ok(*kj);
    }
    let lin = |a: f64, b: f64| beta * a + (1.0 - beta) * b;
    let arc = wrap_phi(ki.phi - kj.phi);
    Ok(FeatureVector {
        e: lin(ki.e, kj.e),
        phi: wrap_phi(kj.phi + beta * arc),
        psi: lin(ki.psi, kj.psi),
        m: lin(ki.m, kj.m),
    })
}

/// Angular separation on the period-pi circle, scaled to `[0, 1]`.
pub fn phi_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d) / FRAC_PI_2
}

/// Weighted Euclidean distance `sqrt(sum w_i d_i^2)`; the angle uses [`phi_distance`].
pub fn feature_distance(k1: &FeatureVector, k2: &FeatureVector, w: &[f64; 4]) -> f64 {
    let d = [
        k1.e - k2.e,
        phi_distance(k1.phi, k2.phi),
        k1.psi - k2.psi,
        k1.m - k2.m,
    ];
    (0..4).map(|i| w[i] * d[i] * d[i]).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests;
