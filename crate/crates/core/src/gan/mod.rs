//! Feature-conditioned generative adversarial network.
//!
//! Both networks receive the feature vector `k = [E, phi, Psi, m]`. It is fed to them
//! as five numbers `[2E - 1, cos 2phi, sin 2phi, 2Psi - 1, 2m - 1]` so that the two
//! ends of the orientation range, which describe the same shape, meet.
//!
//! Everything numeric is generic over [`Scalar`]; training uses `f32` and gradient
//! verification `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::imgproc::Raster;
use crate::scalar::Scalar;

mod adam;
mod eval;
mod gradcheck;
mod io;
pub mod layers;
mod loss;
mod nets;
mod train;

pub use adam::{Adam, AdamParams};
pub use eval::{evaluate_conditioning, sweep_points, ConditioningReport, PointResult};
pub use gradcheck::{grad_check, GradCheckReport};
pub use io::{decode_model, encode_model, load_model, save_model, BGM_MAGIC, BGM_VERSION};
pub use layers::{Tensor, TensorKind};
pub use loss::{discriminator_loss, generator_loss, GeneratorLoss, RealTerm, Scores, SCORE_CLAMP};
pub use nets::{Discriminator, Generator, Grads};
pub use train::{train, EpochStats, Trained};

/// Initial weight distribution. Biases always start at zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// `N(0, init_std)` for every weight.
    Normal,
    /// `N(0, 2 / fan_in)`, which keeps activations from fading through
    /// unnormalized rectifier stacks.
    #[default]
    FanIn,
}

/// Width of the encoded conditioning input.
pub const COND_DIM: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    /// Image side, a multiple of 8.
    pub side: usize,
    pub channels: usize,
    /// Latent dimension.
    pub nz: usize,
    /// Width of the generator's feature embedding.
    pub ne: usize,
    /// Width of the discriminator's feature projection.
    pub nd: usize,
    /// Channels of the generator's coarsest feature map.
    pub g_base: usize,
    /// Channels of the discriminator's first stage (doubled per stage).
    pub d_base: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub seed: u64,
    pub g_loss: GeneratorLoss,
    pub real_term: RealTerm,
    pub init: Init,
    /// Standard deviation of the initial weights under [`Init::Normal`].
    pub init_std: f64,
    /// Negative slope of the leaky rectifiers.
    pub slope: f64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            side: 32,
            channels: 1,
            nz: 64,
            ne: 64,
            nd: 128,
            g_base: 128,
            d_base: 32,
            batch_size: 64,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 30,
            seed: 0,
            g_loss: GeneratorLoss::NonSaturating,
            real_term: RealTerm::Log,
            init: Init::FanIn,
            init_std: 0.02,
            slope: 0.2,
        }
    }
}

impl GanConfig {
    /// Full-size settings: 64 px colour patches, 100-d latent, 512-d projection.
    pub fn full_scale() -> Self {
        GanConfig {
            side: 64,
            channels: 3,
            nz: 100,
            nd: 512,
            ..GanConfig::default()
        }
    }

    /// A network small enough for finite-difference checks.
    pub fn tiny() -> Self {
        GanConfig {
            side: 8,
            channels: 1,
            nz: 3,
            ne: 4,
            nd: 4,
            g_base: 8,
            d_base: 2,
            batch_size: 3,
            init: Init::Normal,
            init_std: 0.4,
            ..GanConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.side < 8 || !self.side.is_multiple_of(8) {
            return bad(format!("image side must be a positive multiple of 8, got {}", self.side));
        }
        if self.channels == 0 || self.nz == 0 || self.ne == 0 || self.nd == 0 || self.d_base == 0 {
            return bad("channel and latent dimensions must be at least 1".into());
        }
        if self.g_base < 4 || !self.g_base.is_multiple_of(4) {
            return bad(format!("g_base must be a multiple of 4, got {}", self.g_base));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0) {
            return bad("optimizer betas must lie in [0, 1) and eps be positive".into());
        }
        if !(self.init_std >= 0.0 && self.slope >= 0.0 && self.slope < 1.0) {
            return bad("init_std must be >= 0 and slope in [0, 1)".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.side * self.side
    }
}

/// Network input rows for a batch of feature vectors.
pub fn encode_features<T: Scalar>(k: &[FeatureVector]) -> Vec<T> {
    k.iter()
        .flat_map(|f| {
            [
                2.0 * f.e - 1.0,
                (2.0 * f.phi).cos(),
                (2.0 * f.phi).sin(),
                2.0 * f.psi - 1.0,
                2.0 * f.m - 1.0,
            ]
        })
        .map(T::lit)
        .collect()
}

/// One entry of the architecture descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerInfo {
    pub name: String,
    pub kind: TensorKind,
    pub shape: Vec<usize>,
}

/// Generator and discriminator parameters with their optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct GanModel<T> {
    pub config: GanConfig,
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub opt_g: Adam<T>,
    pub opt_d: Adam<T>,
}

impl<T: Scalar> GanModel<T> {
    /// All parameters zero.
    pub fn zeroed(config: &GanConfig) -> Result<Self> {
        config.validate()?;
        let generator = Generator::new(config);
        let discriminator = Discriminator::new(config);
        Ok(GanModel {
            opt_g: Adam::new(&generator.tensors()),
            opt_d: Adam::new(&discriminator.tensors()),
            config: config.clone(),
            generator,
            discriminator,
        })
    }

    /// Weights drawn per `config.init` with the config's seed; biases zero.
    pub fn new(config: &GanConfig) -> Result<Self> {
        let mut model = Self::zeroed(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let kinds = Generator::<T>::kinds().into_iter().chain(Discriminator::<T>::kinds());
        let tensors = model
            .generator
            .tensors_mut()
            .into_iter()
            .chain(model.discriminator.tensors_mut());
        for (t, kind) in tensors.zip(kinds) {
            if matches!(kind, TensorKind::DenseWeight | TensorKind::ConvWeight) {
                // weights are [out, fan_in...] for both layer kinds
                let fan_in: usize = t.shape[1..].iter().product();
                let std = match config.init {
                    Init::Normal => config.init_std,
                    Init::FanIn => (2.0 / fan_in as f64).sqrt(),
                };
                for w in &mut t.data {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *w = T::lit(std * z);
                }
            }
        }
        Ok(model)
    }

    pub fn architecture(&self) -> Vec<LayerInfo> {
        let g = Generator::<T>::names()
            .into_iter()
            .zip(Generator::<T>::kinds())
            .zip(self.generator.tensors());
        let d = Discriminator::<T>::names()
            .into_iter()
            .zip(Discriminator::<T>::kinds())
            .zip(self.discriminator.tensors());
        g.chain(d)
            .map(|((name, kind), t)| LayerInfo {
                name: name.to_string(),
                kind,
                shape: t.shape.clone(),
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.generator
            .tensors()
            .iter()
            .chain(self.discriminator.tensors().iter())
            .map(|t| t.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.generator
            .tensors()
            .iter()
            .chain(self.discriminator.tensors().iter())
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    fn check_batch(&self, what: &str, len: usize, per: usize, n: usize) -> Result<()> {
        if len != n * per {
            return Err(Error::Shape(format!(
                "{what}: expected {n} x {per} = {} values, got {len}",
                n * per
            )));
        }
        Ok(())
    }

    /// `n` images (`n x channels x side x side`, values in `[0, 1]`) from latent rows
    /// `z` (`n x nz`) and feature vectors `k`.
    pub fn generator_forward(&self, z: &[T], k: &[FeatureVector]) -> Result<Vec<T>> {
        let n = k.len();
        self.check_batch("latent batch", z.len(), self.config.nz, n)?;
        Ok(self.generator.forward(z, &encode_features(k), n).images)
    }

    /// Scores in `(0, 1)` of `n` images paired with `k`.
    pub fn discriminator_forward(&self, x: &[T], k: &[FeatureVector]) -> Result<Vec<T>> {
        let n = k.len();
        self.check_batch("image batch", x.len(), self.config.image_len(), n)?;
        let tr = self.discriminator.forward(x, &encode_features(k), n);
        Ok(tr.logits.into_iter().map(layers::sigmoid).collect())
    }

    /// Standard-normal latent rows.
    pub fn sample_latent(&self, n: usize, rng: &mut impl Rng) -> Vec<T> {
        (0..n * self.config.nz)
            .map(|_| T::lit(StandardNormal.sample(rng)))
            .collect()
    }

    /// Grayscale rasters for the given feature vectors (channels averaged).
    pub fn generate(&self, k: &[FeatureVector], rng: &mut impl Rng) -> Result<Vec<Raster>> {
        let z = self.sample_latent(k.len(), rng);
        let images = self.generator_forward(&z, k)?;
        Ok(self.to_rasters(&images))
    }

    pub fn to_rasters(&self, images: &[T]) -> Vec<Raster> {
        let (c, s) = (self.config.channels, self.config.side);
        images
            .chunks_exact(c * s * s)
            .map(|img| {
                Raster::from_fn(s, s, |x, y| {
                    let sum: f64 = (0..c).map(|ch| img[ch * s * s + y * s + x].as_f64()).sum();
                    (sum / c as f64).clamp(0.0, 1.0) as f32
                })
            })
            .collect()
    }

    /// Network input for a grayscale raster of the configured side.
    pub fn image_input(&self, r: &Raster) -> Result<Vec<T>> {
        let s = self.config.side;
        if r.width() != s || r.height() != s {
            return Err(Error::Shape(format!(
                "expected {s}x{s} image, got {}x{}",
                r.width(),
                r.height()
            )));
        }
        let plane: Vec<T> = r.data().iter().map(|&v| T::lit(v as f64)).collect();
        Ok(plane.repeat(self.config.channels))
    }

    /// `L(D)` and its parameter gradients for real images `x` with features `k1`,
    /// generated images `xh` conditioned on `k2`, and mismatched features `k3`.
    pub fn discriminator_grads(&self, b: &StepBatch<T>) -> Result<(f64, Grads<T>)> {
        let n = b.check(self, true)?;
        let d = &self.discriminator;
        let x4 = [&b.x[..], &b.xh[..], &b.xh[..], &b.x[..]].concat();
        let c4 = [&b.k1[..], &b.k2[..], &b.k3[..], &b.k2[..]].concat();
        let tr = d.forward(&x4, &encode_features(&c4), 4 * n);
        let (loss, g_logits) = loss::discriminator_objective(&tr.logits, n, self.config.real_term);
        let mut grads = nets::zero_grads(&d.tensors());
        d.backward(&tr, &g_logits, Some(&mut grads), false);
        check_grads(&grads, Discriminator::<T>::names())?;
        Ok((loss, grads))
    }

    /// Generator loss and its parameter gradients for latent rows `z` (the images are
    /// regenerated from `z` and `k2`; `b.xh` is ignored).
    pub fn generator_grads(&self, z: &[T], b: &StepBatch<T>) -> Result<(f64, Grads<T>)> {
        let n = b.check(self, false)?;
        self.check_batch("latent batch", z.len(), self.config.nz, n)?;
        let gtr = self.generator.forward(z, &encode_features(&b.k2), n);
        let d = &self.discriminator;
        let (loss, g_x) = match self.config.g_loss {
            GeneratorLoss::ZeroSum => {
                let xh = &gtr.images;
                let x4 = [&b.x[..], &xh[..], &xh[..], &b.x[..]].concat();
                let c4 = [&b.k1[..], &b.k2[..], &b.k3[..], &b.k2[..]].concat();
                let tr = d.forward(&x4, &encode_features(&c4), 4 * n);
                let (loss, gl) =
                    loss::generator_objective(&tr.logits, n, GeneratorLoss::ZeroSum, self.config.real_term);
                let gx = d.backward(&tr, &gl, None, true).expect("input grad");
                let m = self.config.image_len() * n;
                let g: Vec<T> = (0..m).map(|i| gx[m + i] + gx[2 * m + i]).collect();
                (loss, g)
            }
            mode => {
                let tr = d.forward(&gtr.images, &encode_features(&b.k2), n);
                let (loss, gl) = loss::generator_objective(&tr.logits, n, mode, self.config.real_term);
                (loss, d.backward(&tr, &gl, None, true).expect("input grad"))
            }
        };
        let grads = self.generator.backward(&gtr, &g_x);
        check_grads(&grads, Generator::<T>::names())?;
        Ok((loss, grads))
    }

    /// `L(D)` alone; see [`GanModel::discriminator_grads`].
    pub fn discriminator_objective(&self, b: &StepBatch<T>) -> Result<f64> {
        let n = b.check(self, true)?;
        let x4 = [&b.x[..], &b.xh[..], &b.xh[..], &b.x[..]].concat();
        let c4 = [&b.k1[..], &b.k2[..], &b.k3[..], &b.k2[..]].concat();
        let tr = self.discriminator.forward(&x4, &encode_features(&c4), 4 * n);
        Ok(loss::discriminator_objective(&tr.logits, n, self.config.real_term).0)
    }

    /// The generator loss alone; see [`GanModel::generator_grads`].
    pub fn generator_objective(&self, z: &[T], b: &StepBatch<T>) -> Result<f64> {
        let n = b.check(self, false)?;
        self.check_batch("latent batch", z.len(), self.config.nz, n)?;
        let xh = self.generator.forward(z, &encode_features(&b.k2), n).images;
        let (real, mode) = (self.config.real_term, self.config.g_loss);
        let d = &self.discriminator;
        Ok(match mode {
            GeneratorLoss::ZeroSum => {
                let x4 = [&b.x[..], &xh[..], &xh[..], &b.x[..]].concat();
                let c4 = [&b.k1[..], &b.k2[..], &b.k3[..], &b.k2[..]].concat();
                let tr = d.forward(&x4, &encode_features(&c4), 4 * n);
                loss::generator_objective(&tr.logits, n, mode, real).0
            }
            _ => {
                let tr = d.forward(&xh, &encode_features(&b.k2), n);
                loss::generator_objective(&tr.logits, n, mode, real).0
            }
        })
    }

    pub fn cast<U: Scalar>(&self) -> GanModel<U> {
        let mut out = GanModel::<U>::zeroed(&self.config).expect("validated config");
        for (dst, src) in out.generator.tensors_mut().into_iter().zip(self.generator.tensors()) {
            *dst = src.cast();
        }
        for (dst, src) in out.discriminator.tensors_mut().into_iter().zip(self.discriminator.tensors()) {
            *dst = src.cast();
        }
        out.opt_g = self.opt_g.cast();
        out.opt_d = self.opt_d.cast();
        out
    }
}

fn check_grads<T: Scalar>(grads: &Grads<T>, names: Vec<&'static str>) -> Result<()> {
    for (g, name) in grads.iter().zip(names) {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { layer: name.to_string() });
        }
    }
    Ok(())
}

/// Inputs of one optimisation step: `n` real images with their features `k1`,
/// generated images `xh` conditioned on `k2`, and unrelated features `k3`.
#[derive(Clone, Debug)]
pub struct StepBatch<T> {
    pub x: Vec<T>,
    pub xh: Vec<T>,
    pub k1: Vec<FeatureVector>,
    pub k2: Vec<FeatureVector>,
    pub k3: Vec<FeatureVector>,
}

impl<T: Scalar> StepBatch<T> {
    fn check(&self, model: &GanModel<T>, with_generated: bool) -> Result<usize> {
        let n = self.k1.len();
        if self.k2.len() != n || self.k3.len() != n {
            return Err(Error::Shape("feature batches differ in length".into()));
        }
        let per = model.config.image_len();
        model.check_batch("real images", self.x.len(), per, n)?;
        if with_generated {
            model.check_batch("generated images", self.xh.len(), per, n)?;
        }
        Ok(n)
    }
}

#[cfg(test)]
mod tests;
