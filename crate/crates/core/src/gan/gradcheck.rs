//! Finite-difference verification of the reverse passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Tensor, TensorKind, Discriminator, GanConfig, GanModel, Generator, StepBatch};
use crate::error::Result;
use crate::features::FeatureVector;

/// Central-difference step.
const STEP: f64 = 1e-5;

/// One-sided step used next to a kink.
const SHORT: f64 = 1e-7;

/// Gradients smaller than this are compared in absolute rather than relative terms.
const FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(|analytic| + |numeric|, 1e-6)` over all parameters.
    pub max_rel_error: f64,
    /// Tensor and element index of the worst parameter.
    pub worst: String,
    pub parameters: usize,
}

pub(crate) fn random_features(rng: &mut impl Rng, n: usize) -> Vec<FeatureVector> {
    (0..n)
        .map(|_| {
            FeatureVector::new(
                rng.random_range(0.3..1.0),
                rng.random_range(-1.5..1.5),
                rng.random_range(0.6..1.0),
                rng.random_range(0.05..0.9),
            )
        })
        .collect()
}

/// A random `f64` model built from `cfg` (seeded by `seed`) and a random batch.
pub(crate) fn fixture(cfg: &GanConfig, seed: u64) -> Result<(GanModel<f64>, Vec<f64>, StepBatch<f64>)> {
    let cfg = GanConfig { seed, ..cfg.clone() };
    let mut model = GanModel::<f64>::new(&cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    // zero biases put whole dead channels exactly on the ReLU kink
    for (t, kind) in model.generator.tensors_mut().into_iter().zip(Generator::<f64>::kinds()) {
        jitter_bias(t, kind, &mut rng);
    }
    for (t, kind) in model.discriminator.tensors_mut().into_iter().zip(Discriminator::<f64>::kinds()) {
        jitter_bias(t, kind, &mut rng);
    }
    let n = cfg.batch_size;
    let x: Vec<f64> = (0..n * cfg.image_len()).map(|_| rng.random_range(0.0..1.0)).collect();
    let k1 = random_features(&mut rng, n);
    let k2 = random_features(&mut rng, n);
    let k3 = random_features(&mut rng, n);
    let z = model.sample_latent(n, &mut rng);
    let xh = model.generator_forward(&z, &k2)?;
    Ok((model, z, StepBatch { x, xh, k1, k2, k3 }))
}

fn jitter_bias(t: &mut Tensor<f64>, kind: TensorKind, rng: &mut impl Rng) {
    if matches!(kind, TensorKind::DenseBias | TensorKind::ConvBias) {
        t.data.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
    }
}

/// Relative error of `analytic` against finite differences of `f` around 0. A
/// step that crosses a ReLU kink spoils the central difference and one side, so a
/// mismatch falls back to the better of two short one-sided differences.
fn param_error(analytic: f64, base: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let central = rel(analytic, (f(STEP)? - f(-STEP)?) / (2.0 * STEP));
    if central <= FLOOR {
        return Ok(central);
    }
    let forward = rel(analytic, (f(SHORT)? - base) / SHORT);
    let backward = rel(analytic, (base - f(-SHORT)?) / SHORT);
    Ok(central.min(forward).min(backward))
}

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(FLOOR)
}

/// Compares reverse-mode gradients of both losses with central differences on every
/// parameter of both networks of a random `f64` model.
pub fn grad_check(cfg: &GanConfig, seed: u64) -> Result<GradCheckReport> {
    let (mut model, z, batch) = fixture(cfg, seed)?;
    let mut worst = (0.0f64, String::new());
    let mut count = 0;

    let (base_d, d_grads) = model.discriminator_grads(&batch)?;
    for (t, name) in Discriminator::<f64>::names().into_iter().enumerate() {
        for i in 0..d_grads[t].len() {
            let orig = model.discriminator.tensors()[t].data[i];
            let r = param_error(d_grads[t][i], base_d, |d| {
                model.discriminator.tensors_mut()[t].data[i] = orig + d;
                let v = model.discriminator_objective(&batch);
                model.discriminator.tensors_mut()[t].data[i] = orig;
                v
            })?;
            if r > worst.0 {
                worst = (r, format!("{name}[{i}]"));
            }
            count += 1;
        }
    }

    let (base_g, g_grads) = model.generator_grads(&z, &batch)?;
    for (t, name) in Generator::<f64>::names().into_iter().enumerate() {
        for i in 0..g_grads[t].len() {
            let orig = model.generator.tensors()[t].data[i];
            let r = param_error(g_grads[t][i], base_g, |d| {
                model.generator.tensors_mut()[t].data[i] = orig + d;
                let v = model.generator_objective(&z, &batch);
                model.generator.tensors_mut()[t].data[i] = orig;
                v
            })?;
            if r > worst.0 {
                worst = (r, format!("{name}[{i}]"));
            }
            count += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst: worst.1,
        parameters: count,
    })
}
