//! Conditioning accuracy: does the generator produce what it was asked for?

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GanModel;
use crate::error::{Error, Result};
use crate::features::{interpolate, phi_distance, Component, FeatureVector};
use crate::record::BubbleRecord;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub requested: f64,
    /// Mean of the component over the usable samples (circular mean for phi).
    pub measured: Option<f64>,
    /// Samples whose features could be extracted.
    pub usable: usize,
    /// `|requested - measured|`, or the distance to the pool mean when nothing was usable.
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditioningReport {
    pub component: Component,
    pub points: Vec<PointResult>,
    /// Root mean square of the point errors divided by `range`.
    pub rmse: f64,
    /// Width of the component's range in the pool (`pi` for phi).
    pub range: f64,
    /// Fraction of all samples that were usable.
    pub yield_fraction: f64,
}

/// Observed `(min, max)` of `c` over `pool`; phi always spans its full period.
fn pool_range(c: Component, pool: &[FeatureVector]) -> (f64, f64) {
    if c == Component::Phi {
        return (-FRAC_PI_2, FRAC_PI_2);
    }
    pool.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| {
        let v = k.get(c);
        (lo.min(v), hi.max(v))
    })
}

fn mean_of(c: Component, values: &[f64]) -> f64 {
    if c == Component::Phi {
        let (s, co) = values
            .iter()
            .fold((0.0, 0.0), |(s, co), &p| (s + (2.0 * p).sin(), co + (2.0 * p).cos()));
        0.5 * s.atan2(co)
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn error_of(c: Component, a: f64, b: f64) -> f64 {
    if c == Component::Phi {
        phi_distance(a, b) * FRAC_PI_2
    } else {
        (a - b).abs()
    }
}

/// `points` evenly spaced values inside the pool's range of `c`, keeping a tenth of
/// the range clear at either end. Phi values are spread over the whole period.
pub fn sweep_points(c: Component, pool: &[FeatureVector], points: usize) -> Result<Vec<f64>> {
    if pool.is_empty() || points == 0 {
        return Err(Error::invalid("sweep needs a non-empty pool and at least one point"));
    }
    if c == Component::Phi {
        return Ok((0..points)
            .map(|i| -FRAC_PI_2 + PI * (i as f64 + 0.5) / points as f64)
            .collect());
    }
    let (lo, hi) = pool_range(c, pool);
    let span = hi - lo;
    Ok((0..points)
        .map(|i| {
            let t = if points == 1 {
                0.5
            } else {
                i as f64 / (points - 1) as f64
            };
            lo + span * (0.1 + 0.8 * t)
        })
        .collect())
}

/// For each sweep value, generates `samples` bubbles conditioned on interpolations of
/// random pool pairs with component `c` overridden, re-extracts their features and
/// compares the mean of `c` with the request.
pub fn evaluate_conditioning<T: Scalar>(
    model: &GanModel<T>,
    c: Component,
    sweep: &[f64],
    samples: usize,
    pool: &[FeatureVector],
    seed: u64,
) -> Result<ConditioningReport> {
    if pool.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    if samples == 0 || sweep.is_empty() {
        return Err(Error::invalid("need at least one sweep value and one sample"));
    }
    let (lo, hi) = pool_range(c, pool);
    if let Some(&v) = sweep.iter().find(|&&v| !(lo..=hi).contains(&v)) {
        return Err(Error::OffManifold(format!(
            "{} = {v} outside the observed range [{lo}, {hi}]",
            c.name()
        )));
    }
    let all: Vec<f64> = pool.iter().map(|k| k.get(c)).collect();
    let fallback = mean_of(c, &all);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(sweep.len());
    let mut usable_total = 0;
    for &v in sweep {
        let targets = (0..samples)
            .map(|_| {
                let a = &pool[rng.random_range(0..pool.len())];
                let b = &pool[rng.random_range(0..pool.len())];
                let beta = rng.random_range(0.0..=1.0);
                Ok(interpolate(a, b, beta)?.with(c, v))
            })
            .collect::<Result<Vec<_>>>()?;
        let images = model.generate(&targets, &mut rng)?;
        let got: Vec<f64> = images
            .iter()
            .filter_map(|img| BubbleRecord::from_patch(img, false).ok())
            .map(|r| r.features.get(c))
            .collect();
        usable_total += got.len();
        let measured = (!got.is_empty()).then(|| mean_of(c, &got));
        points.push(PointResult {
            requested: v,
            measured,
            usable: got.len(),
            error: error_of(c, v, measured.unwrap_or(fallback)),
        });
    }
    let range = hi - lo;
    let mse = points.iter().map(|p| p.error * p.error).sum::<f64>() / points.len() as f64;
    Ok(ConditioningReport {
        component: c,
        rmse: if range > 0.0 { mse.sqrt() / range } else { 0.0 },
        range,
        yield_fraction: usable_total as f64 / (samples * sweep.len()) as f64,
        points,
    })
}
