//! The adversarial training loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{encode_features, GanConfig, GanModel, StepBatch};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::imgproc::resize_bilinear;
use crate::record::BubbleRecord;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean discriminator loss over the epoch's steps.
    pub d_loss: f64,
    pub g_loss: f64,
}

pub struct Trained<T> {
    pub model: GanModel<T>,
    pub history: Vec<EpochStats>,
}

/// Trains a freshly initialized model on `corpus` for `cfg.epochs` epochs.
///
/// Each step draws a minibatch of real records, pairs every record with the features
/// of two other records (`k2` conditions the generator, `k3` is a wrong label), takes
/// one discriminator step and then one generator step. The result depends only on
/// the corpus, the config and its seed.
pub fn train<T: Scalar>(corpus: &[BubbleRecord], cfg: &GanConfig) -> Result<Trained<T>> {
    cfg.validate()?;
    if corpus.len() < 2 * cfg.batch_size {
        return Err(Error::invalid(format!(
            "corpus of {} records is smaller than two batches of {}",
            corpus.len(),
            cfg.batch_size
        )));
    }
    let model = GanModel::new(cfg)?;
    let images = corpus
        .iter()
        .map(|r| {
            let s = cfg.side;
            if r.side() == s {
                model.image_input(&r.patch)
            } else {
                model.image_input(&resize_bilinear(&r.patch, s, s)?)
            }
        })
        .collect::<Result<Vec<Vec<T>>>>()?;
    let features: Vec<FeatureVector> = corpus.iter().map(|r| r.features).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut trained = Trained {
        model,
        history: Vec::with_capacity(cfg.epochs),
    };
    for epoch in 0..cfg.epochs {
        let stats = run_epoch(&mut trained.model, &images, &features, epoch, &mut rng)?;
        log::info!(
            "epoch {}/{}: L(D) {:.4}  L(G) {:.4}",
            epoch + 1,
            cfg.epochs,
            stats.d_loss,
            stats.g_loss
        );
        trained.history.push(stats);
    }
    Ok(trained)
}

/// An index in `0..n` other than `own`.
fn other(rng: &mut impl Rng, n: usize, own: usize) -> usize {
    let j = rng.random_range(0..n - 1);
    if j >= own {
        j + 1
    } else {
        j
    }
}

fn run_epoch<T: Scalar>(
    model: &mut GanModel<T>,
    images: &[Vec<T>],
    features: &[FeatureVector],
    epoch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EpochStats> {
    let cfg = model.config.clone();
    let n_rec = images.len();
    let mut order: Vec<usize> = (0..n_rec).collect();
    order.shuffle(rng);
    let (mut d_sum, mut g_sum, mut steps) = (0.0, 0.0, 0usize);
    for (step, idx) in order.chunks_exact(cfg.batch_size).enumerate() {
        let n = idx.len();
        let x: Vec<T> = idx.iter().flat_map(|&i| images[i].iter().copied()).collect();
        let k1: Vec<FeatureVector> = idx.iter().map(|&i| features[i]).collect();
        let k2: Vec<FeatureVector> = idx.iter().map(|&i| features[other(rng, n_rec, i)]).collect();
        let k3: Vec<FeatureVector> = idx.iter().map(|&i| features[other(rng, n_rec, i)]).collect();
        let z = model.sample_latent(n, rng);
        let xh = model.generator.forward(&z, &encode_features(&k2), n).images;
        let mut batch = StepBatch { x, xh, k1, k2, k3 };

        let diverged = |what: &str, v: f64| Error::Diverged {
            epoch,
            step,
            detail: format!("{what} = {v}"),
        };
        let (d_loss, d_grads) = model.discriminator_grads(&batch).map_err(|e| at(e, epoch, step))?;
        if !d_loss.is_finite() {
            return Err(diverged("L(D)", d_loss));
        }
        model.opt_d.step(model.discriminator.tensors_mut(), &d_grads, cfg.adam());

        batch.xh.clear();
        let (g_loss, g_grads) = model.generator_grads(&z, &batch).map_err(|e| at(e, epoch, step))?;
        if !g_loss.is_finite() {
            return Err(diverged("L(G)", g_loss));
        }
        model.opt_g.step(model.generator.tensors_mut(), &g_grads, cfg.adam());
        d_sum += d_loss;
        g_sum += g_loss;
        steps += 1;
    }
    if !model.is_finite() {
        return Err(Error::Diverged {
            epoch,
            step: steps,
            detail: "non-finite parameters".into(),
        });
    }
    let steps_f = steps.max(1) as f64;
    Ok(EpochStats {
        epoch,
        d_loss: d_sum / steps_f,
        g_loss: g_sum / steps_f,
    })
}

fn at(e: Error, epoch: usize, step: usize) -> Error {
    match e {
        Error::NonFiniteGradient { layer } => Error::Diverged {
            epoch,
            step,
            detail: format!("non-finite gradient in {layer}"),
        },
        other => other,
    }
}
