//! Adversarial objectives.
//!
//! The discriminator sees four pairs per sample: the real image with its own
//! features (`y`), the generated image with the features it was conditioned on
//! (`yh1`), the generated image with unrelated features (`yh2`), and the real image
//! with unrelated features (`yh3`). Only `y` is a positive.

use serde::{Deserialize, Serialize};

use super::layers::{sigmoid, softplus};
use crate::scalar::Scalar;

/// Scores are clamped to `[SCORE_CLAMP, 1 - SCORE_CLAMP]` before logarithms.
pub const SCORE_CLAMP: f64 = 1e-7;

/// Form of the real-pair term of the discriminator loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RealTerm {
    /// `-1/2 mean(log y)`.
    #[default]
    Log,
    /// `-1/2 mean(y)`.
    Linear,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLoss {
    /// `-mean(log yh1)`.
    #[default]
    NonSaturating,
    /// `-1/2 mean(yh1)`.
    PaperLinear,
    /// `-L(D)`: the generator minimizes exactly what the discriminator maximizes.
    ZeroSum,
}

/// Discriminator scores of one batch, all in `(0, 1)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scores {
    pub y: Vec<f64>,
    pub yh1: Vec<f64>,
    pub yh2: Vec<f64>,
    pub yh3: Vec<f64>,
}

fn clamp(p: f64) -> f64 {
    p.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP)
}

fn mean(v: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = v.len().max(1) as f64;
    v.sum::<f64>() / n
}

pub fn discriminator_loss(s: &Scores, real: RealTerm) -> f64 {
    let first = match real {
        RealTerm::Log => mean(s.y.iter().map(|&p| clamp(p).ln())),
        RealTerm::Linear => mean(s.y.iter().copied()),
    };
    let neg = |v: &[f64]| mean(v.iter().map(|&p| (1.0 - clamp(p)).ln()));
    -0.5 * first - 0.5 * (neg(&s.yh1) + neg(&s.yh2) + neg(&s.yh3)) / 3.0
}

pub fn generator_loss(s: &Scores, mode: GeneratorLoss, real: RealTerm) -> f64 {
    match mode {
        GeneratorLoss::NonSaturating => -mean(s.yh1.iter().map(|&p| clamp(p).ln())),
        GeneratorLoss::PaperLinear => -0.5 * mean(s.yh1.iter().copied()),
        GeneratorLoss::ZeroSum => -discriminator_loss(s, real),
    }
}

/// Largest logit magnitude that survives the score clamp.
fn logit_limit() -> f64 {
    ((1.0 - SCORE_CLAMP) / SCORE_CLAMP).ln()
}

/// `-log(sigmoid(l))` with the score clamp applied to the value, and the derivative
/// of the unclamped term. Zeroing the derivative past the clamp would cut the
/// generator off exactly when the discriminator rejects it most confidently.
fn neg_log_sigmoid<T: Scalar>(l: T) -> (f64, T) {
    let lim = T::lit(logit_limit());
    let lc = l.max(-lim).min(lim);
    (softplus(-lc).as_f64(), -sigmoid(-l))
}

/// `-log(1 - sigmoid(l))` and its derivative, with the score clamp applied.
fn neg_log_one_minus_sigmoid<T: Scalar>(l: T) -> (f64, T) {
    let (v, d) = neg_log_sigmoid(-l);
    (v, -d)
}

/// Loss terms on one group of logits. `weight` multiplies the summed term.
fn accumulate<T: Scalar>(logits: &[T], weight: f64, f: impl Fn(T) -> (f64, T), grad: &mut [T]) -> f64 {
    let w = T::lit(weight);
    let mut total = 0.0;
    for (g, &l) in grad.iter_mut().zip(logits) {
        let (v, d) = f(l);
        total += v;
        *g += w * d;
    }
    weight * total
}

/// `L(D)` on logits laid out as `[y | yh1 | yh2 | yh3]`, each block `n` long, with
/// its gradient.
pub(crate) fn discriminator_objective<T: Scalar>(logits: &[T], n: usize, real: RealTerm) -> (f64, Vec<T>) {
    debug_assert_eq!(logits.len(), 4 * n);
    let nf = n as f64;
    let mut grad = vec![T::zero(); 4 * n];
    let (real_l, fake_l) = logits.split_at(n);
    let (real_g, fake_g) = grad.split_at_mut(n);
    let mut loss = match real {
        RealTerm::Log => accumulate(real_l, 0.5 / nf, neg_log_sigmoid, real_g),
        RealTerm::Linear => accumulate(
            real_l,
            0.5 / nf,
            |l| {
                let p = sigmoid(l);
                (-p.as_f64(), -(p * (T::one() - p)))
            },
            real_g,
        ),
    };
    loss += accumulate(fake_l, 0.5 / (3.0 * nf), neg_log_one_minus_sigmoid, fake_g);
    (loss, grad)
}

/// Generator objective on the logits of the generated pairs.
///
/// For the non-saturating and linear modes `logits` is the `yh1` block alone; for
/// the zero-sum mode it is the full `[y | yh1 | yh2 | yh3]` layout and the gradient
/// is the negated discriminator gradient.
pub(crate) fn generator_objective<T: Scalar>(
    logits: &[T],
    n: usize,
    mode: GeneratorLoss,
    real: RealTerm,
) -> (f64, Vec<T>) {
    let nf = n as f64;
    match mode {
        GeneratorLoss::NonSaturating => {
            let mut g = vec![T::zero(); n];
            let v = accumulate(logits, 1.0 / nf, neg_log_sigmoid, &mut g);
            (v, g)
        }
        GeneratorLoss::PaperLinear => {
            let mut g = vec![T::zero(); n];
            let v = accumulate(
                logits,
                0.5 / nf,
                |l| {
                    let p = sigmoid(l);
                    (-p.as_f64(), -(p * (T::one() - p)))
                },
                &mut g,
            );
            (v, g)
        }
        GeneratorLoss::ZeroSum => {
            let (v, g) = discriminator_objective(logits, n, real);
            (-v, g.into_iter().map(|x| -x).collect())
        }
    }
}
