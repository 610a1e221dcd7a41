use super::gradcheck::{fixture, random_features};
use super::layers::{sigmoid, softplus, Dense};
use super::*;
use crate::features::Component;
use crate::imgproc::BitMask;
use crate::record::BubbleRecord;
use proptest::prelude::*;
use std::f64::consts::LN_2;

fn scores(y: f64, yh: f64, n: usize) -> Scores {
    Scores {
        y: vec![y; n],
        yh1: vec![yh; n],
        yh2: vec![yh; n],
        yh3: vec![yh; n],
    }
}

#[test]
fn loss_values_at_one_half() {
    let s = scores(0.5, 0.5, 7);
    assert!((discriminator_loss(&s, RealTerm::Log) - LN_2).abs() < 1e-12);
    let linear = -0.25 + 0.5 * LN_2;
    assert!((discriminator_loss(&s, RealTerm::Linear) - linear).abs() < 1e-12);
    assert!((linear - 0.09657).abs() < 1e-5);
    assert!((generator_loss(&s, GeneratorLoss::NonSaturating, RealTerm::Log) - LN_2).abs() < 1e-12);
    assert!((generator_loss(&s, GeneratorLoss::PaperLinear, RealTerm::Log) + 0.25).abs() < 1e-12);
}

#[test]
fn loss_limits() {
    let perfect = scores(1.0, 0.0, 4);
    assert!(discriminator_loss(&perfect, RealTerm::Log) < 1e-6);
    let fooled = scores(0.5, 1.0, 4);
    assert!(generator_loss(&fooled, GeneratorLoss::NonSaturating, RealTerm::Log) < 1e-6);
    assert!((generator_loss(&fooled, GeneratorLoss::PaperLinear, RealTerm::Log) + 0.5).abs() < 1e-6);
    // clamping keeps the loss finite when the discriminator is confidently wrong
    assert!(discriminator_loss(&scores(0.0, 1.0, 2), RealTerm::Log).is_finite());
}

#[test]
fn perfect_discriminator_has_vanishing_gradient() {
    let n = 3;
    let logits: Vec<f64> = [vec![50.0; n], vec![-50.0; 3 * n]].concat();
    let (loss, grad) = loss::discriminator_objective(&logits, n, RealTerm::Log);
    assert!(loss < 1e-6);
    assert!(grad.iter().all(|&g| g.abs() < 1e-20));
}

#[test]
fn rejected_generator_still_gets_a_gradient() {
    // far past the score clamp the value saturates but the slope stays -1/n
    let (loss, grad) = loss::generator_objective(&[-40.0f64, -60.0], 2, GeneratorLoss::NonSaturating, RealTerm::Log);
    let cap = -(SCORE_CLAMP.ln());
    assert!((loss - cap).abs() < 1e-6);
    assert!(grad.iter().all(|&g| (g + 0.5).abs() < 1e-12));
}

proptest! {
    #[test]
    fn zero_sum_identity(v in proptest::collection::vec(0.0f64..=1.0, 12), real_log in any::<bool>()) {
        let s = Scores {
            y: v[0..3].to_vec(),
            yh1: v[3..6].to_vec(),
            yh2: v[6..9].to_vec(),
            yh3: v[9..12].to_vec(),
        };
        let real = if real_log { RealTerm::Log } else { RealTerm::Linear };
        let d = discriminator_loss(&s, real);
        let g = generator_loss(&s, GeneratorLoss::ZeroSum, real);
        prop_assert_eq!(g, -d);
    }

    #[test]
    fn logit_objectives_match_score_losses(l in proptest::collection::vec(-12.0f64..12.0, 8)) {
        let n = 2;
        let p: Vec<f64> = l.iter().map(|&v| sigmoid(v)).collect();
        let s = Scores {
            y: p[0..2].to_vec(),
            yh1: p[2..4].to_vec(),
            yh2: p[4..6].to_vec(),
            yh3: p[6..8].to_vec(),
        };
        for real in [RealTerm::Log, RealTerm::Linear] {
            let (v, _) = loss::discriminator_objective(&l, n, real);
            prop_assert!((v - discriminator_loss(&s, real)).abs() < 1e-9);
            for mode in [GeneratorLoss::NonSaturating, GeneratorLoss::PaperLinear] {
                let (g, _) = loss::generator_objective(&l[2..4], n, mode, real);
                prop_assert!((g - generator_loss(&s, mode, real)).abs() < 1e-9);
            }
            let (g, _) = loss::generator_objective(&l, n, GeneratorLoss::ZeroSum, real);
            prop_assert!((g - generator_loss(&s, GeneratorLoss::ZeroSum, real)).abs() < 1e-9);
        }
    }
}

#[test]
fn zero_model_outputs_one_half() {
    let cfg = GanConfig::tiny();
    let model = GanModel::<f64>::zeroed(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let k = random_features(&mut rng, 3);
    let z = model.sample_latent(3, &mut rng);
    let x = model.generator_forward(&z, &k).unwrap();
    assert!(x.iter().all(|&v| v == 0.5));
    let y = model.discriminator_forward(&x, &k).unwrap();
    assert!(y.iter().all(|&v| v == 0.5));
}

#[test]
fn forward_is_deterministic_and_batch_independent() {
    let cfg = GanConfig {
        side: 16,
        g_base: 16,
        d_base: 4,
        nz: 6,
        ne: 5,
        nd: 7,
        ..GanConfig::default()
    };
    let model = GanModel::<f32>::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 5;
    let k = random_features(&mut rng, n);
    let z = model.sample_latent(n, &mut rng);
    let x = model.generator_forward(&z, &k).unwrap();
    assert_eq!(x, model.generator_forward(&z, &k).unwrap());
    let y = model.discriminator_forward(&x, &k).unwrap();
    let per = cfg.image_len();
    for i in 0..n {
        let zi = &z[i * cfg.nz..(i + 1) * cfg.nz];
        let xi = model.generator_forward(zi, &k[i..i + 1]).unwrap();
        assert_eq!(&xi[..], &x[i * per..(i + 1) * per]);
        let yi = model.discriminator_forward(&xi, &k[i..i + 1]).unwrap();
        assert_eq!(yi[0], y[i]);
    }
    assert!(x.iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert!(y.iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn discriminator_sees_the_features() {
    let model = GanModel::<f64>::new(&GanConfig::tiny()).unwrap();
    let x = vec![0.3; GanConfig::tiny().image_len()];
    let a = FeatureVector::new(0.5, 0.2, 0.9, 0.3);
    let b = FeatureVector::new(0.9, -1.0, 0.8, 0.6);
    let ya = model.discriminator_forward(&x, &[a]).unwrap();
    let yb = model.discriminator_forward(&x, &[b]).unwrap();
    assert_ne!(ya, yb);
}

#[test]
fn shape_mismatch_is_an_error() {
    let model = GanModel::<f32>::new(&GanConfig::tiny()).unwrap();
    let k = [FeatureVector::new(0.5, 0.0, 0.9, 0.3)];
    assert!(matches!(model.generator_forward(&[0.0; 2], &k), Err(Error::Shape(_))));
    assert!(matches!(model.discriminator_forward(&[0.0; 5], &k), Err(Error::Shape(_))));
}

#[test]
fn gradients_match_finite_differences() {
    let r = grad_check(&GanConfig::tiny(), 1).unwrap();
    assert!(r.max_rel_error < 1e-4, "{r:?}");
    assert!(r.parameters > 1000);
}

#[test]
fn gradients_match_in_every_loss_mode() {
    for (g_loss, real_term) in [
        (GeneratorLoss::PaperLinear, RealTerm::Linear),
        (GeneratorLoss::ZeroSum, RealTerm::Log),
        (GeneratorLoss::ZeroSum, RealTerm::Linear),
    ] {
        let cfg = GanConfig {
            g_loss,
            real_term,
            ..GanConfig::tiny()
        };
        let r = grad_check(&cfg, 3).unwrap();
        assert!(r.max_rel_error < 1e-4, "{g_loss:?}/{real_term:?}: {r:?}");
    }
}

#[test]
fn affine_layer_gradient_is_exact() {
    // L = sum_j c_j y_j, so dL/dW = c^T x and dL/db = sum of c rows
    let mut d = Dense::<f64>::new(3, 2);
    d.w.data = vec![0.5, -1.0, 2.0, 0.25, 0.0, -0.75];
    d.b.data = vec![0.1, -0.2];
    let x = [1.0, 2.0, 3.0, -1.0, 0.5, 4.0];
    let c = [0.3, -0.7, 1.1, 0.9];
    let mut gw = vec![0.0; 6];
    let mut gb = vec![0.0; 2];
    let gx = d.backward(&x, &c, 2, &mut gw, &mut gb, true).unwrap();
    for o in 0..2 {
        for i in 0..3 {
            let expect = c[o] * x[i] + c[2 + o] * x[3 + i];
            assert!((gw[o * 3 + i] - expect).abs() <= 1e-15);
        }
        assert!((gb[o] - (c[o] + c[2 + o])).abs() <= 1e-15);
    }
    for s in 0..2 {
        for i in 0..3 {
            let expect = c[2 * s] * d.w.data[i] + c[2 * s + 1] * d.w.data[3 + i];
            assert!((gx[s * 3 + i] - expect).abs() <= 1e-15);
        }
    }
}

#[test]
fn logistic_layer_gradient() {
    // L = mean(-log sigmoid(w . x + b)) over two samples
    let mut d = Dense::<f64>::new(4, 1);
    d.w.data = vec![0.3, -0.8, 0.5, 1.2];
    let x = [0.2, 0.4, -0.6, 0.9, -1.0, 0.3, 0.7, -0.2];
    let loss = |d: &Dense<f64>| {
        let l = d.forward(&x, 2);
        l.iter().map(|&v| softplus(-v)).sum::<f64>() / 2.0
    };
    let l = d.forward(&x, 2);
    let gy: Vec<f64> = l.iter().map(|&v| -sigmoid(-v) / 2.0).collect();
    let mut gw = vec![0.0; 4];
    let mut gb = vec![0.0; 1];
    d.backward(&x, &gy, 2, &mut gw, &mut gb, false);
    let h = 1e-5;
    for i in 0..4 {
        let mut p = d.clone();
        p.w.data[i] += h;
        let mut m = d.clone();
        m.w.data[i] -= h;
        let num = (loss(&p) - loss(&m)) / (2.0 * h);
        assert!((num - gw[i]).abs() / (num.abs() + gw[i].abs()) < 1e-6);
    }
}

fn sub_batch(b: &StepBatch<f64>, idx: &[usize], per: usize) -> StepBatch<f64> {
    let pick = |v: &[f64]| idx.iter().flat_map(|&i| v[i * per..(i + 1) * per].iter().copied()).collect();
    let pickk = |v: &[FeatureVector]| idx.iter().map(|&i| v[i]).collect();
    StepBatch {
        x: pick(&b.x),
        xh: pick(&b.xh),
        k1: pickk(&b.k1),
        k2: pickk(&b.k2),
        k3: pickk(&b.k3),
    }
}

#[test]
fn duplicated_sample_doubles_its_contribution() {
    let cfg = GanConfig::tiny();
    let (model, _, batch) = fixture(&cfg, 5).unwrap();
    let per = cfg.image_len();
    let grads = |idx: &[usize]| model.discriminator_grads(&sub_batch(&batch, idx, per)).unwrap().1;
    let a = grads(&[0]);
    let b = grads(&[1]);
    let aab = grads(&[0, 0, 1]);
    for t in 0..a.len() {
        for i in 0..a[t].len() {
            let expect = 2.0 * a[t][i] + b[t][i];
            assert!((3.0 * aab[t][i] - expect).abs() <= 1e-10 * (1.0 + expect.abs()));
        }
    }
}

#[test]
fn small_discriminator_step_descends() {
    let cfg = GanConfig {
        lr: 1e-5,
        ..GanConfig::tiny()
    };
    let (mut model, _, batch) = fixture(&cfg, 8).unwrap();
    let (before, grads) = model.discriminator_grads(&batch).unwrap();
    let adam = model.config.adam();
    model.opt_d.step(model.discriminator.tensors_mut(), &grads, adam);
    let after = model.discriminator_objective(&batch).unwrap();
    assert!(after < before, "{after} >= {before}");
}

#[test]
fn nonfinite_gradient_names_the_layer() {
    let cfg = GanConfig::tiny();
    let (mut model, _, batch) = fixture(&cfg, 9).unwrap();
    model.discriminator.head.w.data[0] = f64::NAN;
    match model.discriminator_grads(&batch) {
        Err(Error::NonFiniteGradient { layer }) => assert!(layer.starts_with("d.")),
        other => panic!("expected a non-finite gradient error, got {other:?}"),
    }
}

fn toy_corpus(n: usize, side: usize, seed: u64) -> Vec<BubbleRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_features(&mut rng, n)
        .into_iter()
        .map(|features| BubbleRecord {
            patch: Raster::from_fn(side, side, |_, _| rng.random_range(0.0..1.0)),
            mask: BitMask::new(side, side),
            features,
        })
        .collect()
}

#[test]
fn zero_epochs_leave_the_model_untouched() {
    let cfg = GanConfig {
        epochs: 0,
        ..GanConfig::tiny()
    };
    let t = train::<f32>(&toy_corpus(8, 8, 1), &cfg).unwrap();
    assert_eq!(t.model, GanModel::new(&cfg).unwrap());
    assert!(t.history.is_empty());
}

#[test]
fn training_is_reproducible() {
    let cfg = GanConfig {
        epochs: 2,
        seed: 4,
        ..GanConfig::tiny()
    };
    let corpus = toy_corpus(12, 8, 2);
    let a = train::<f32>(&corpus, &cfg).unwrap();
    let b = train::<f32>(&corpus, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.history, b.history);
    assert_ne!(a.model, GanModel::new(&cfg).unwrap());
    assert_eq!(a.model.opt_d.steps, 8);
    let c = train::<f32>(&corpus, &GanConfig { seed: 5, ..cfg }).unwrap();
    assert_ne!(a.model, c.model);
}

#[test]
fn training_needs_two_batches() {
    let cfg = GanConfig::tiny();
    assert!(train::<f32>(&toy_corpus(5, 8, 3), &cfg).is_err());
}

#[test]
fn config_validation() {
    assert!(GanConfig::default().validate().is_ok());
    assert!(GanConfig::full_scale().validate().is_ok());
    assert!(GanConfig { side: 20, ..GanConfig::default() }.validate().is_err());
    assert!(GanConfig { nz: 0, ..GanConfig::default() }.validate().is_err());
    assert!(GanConfig { g_base: 6, ..GanConfig::default() }.validate().is_err());
}

#[test]
fn architecture_matches_parameters() {
    let m = GanModel::<f32>::new(&GanConfig::default()).unwrap();
    let arch = m.architecture();
    assert_eq!(arch.len(), 24);
    let total: usize = arch.iter().map(|l| l.shape.iter().product::<usize>()).sum();
    assert_eq!(total, m.parameter_count());
    assert_eq!(arch[2].shape, vec![128 * 4 * 4, 64 + 64]);
}

#[test]
fn model_file_round_trip() {
    let cfg = GanConfig {
        epochs: 1,
        ..GanConfig::tiny()
    };
    let model = train::<f32>(&toy_corpus(8, 8, 6), &cfg).unwrap().model;
    let bytes = encode_model(&model);
    assert_eq!(&bytes[..7], b"BGANv1\0");
    let back: GanModel<f32> = decode_model(&bytes).unwrap();
    assert_eq!(back, model);
    assert_eq!(encode_model(&back), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bgm");
    save_model(&model, &path).unwrap();
    assert_eq!(load_model::<f32>(&path).unwrap(), model);
}

#[test]
fn damaged_model_files_are_rejected() {
    let model = GanModel::<f32>::new(&GanConfig::tiny()).unwrap();
    let bytes = encode_model(&model);

    let cut = &bytes[..bytes.len() - 10];
    match decode_model::<f32>(cut) {
        Err(Error::Truncated { expected, actual }) => {
            assert_eq!(actual, cut.len() as u64);
            assert!(expected > actual);
        }
        other => panic!("expected truncation error, got {other:?}"),
    }

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_model::<f32>(&bad), Err(Error::BadMagic { .. })));

    let mut v2 = bytes.clone();
    v2[7..11].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(
        decode_model::<f32>(&v2),
        Err(Error::UnsupportedVersion { found: 2, supported: 1 })
    ));

    // first tensor's first dimension
    let mut shape = bytes.clone();
    shape[17..21].copy_from_slice(&999u32.to_le_bytes());
    assert!(decode_model::<f32>(&shape).is_err());
}

#[test]
fn conditioning_sweep_rules() {
    let cfg = GanConfig::tiny();
    let model = GanModel::<f32>::zeroed(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let pool = random_features(&mut rng, 40);
    let (lo, hi) = pool.iter().fold((1.0f64, 0.0f64), |(l, h), k| (l.min(k.e), h.max(k.e)));
    let err = evaluate_conditioning(&model, Component::E, &[hi + 0.01], 4, &pool, 0).unwrap_err();
    assert!(matches!(err, Error::OffManifold(_)));

    // a flat grey generator yields nothing usable: each point scores the pool mean
    let v = lo + 0.3 * (hi - lo);
    let r = evaluate_conditioning(&model, Component::E, &[v; 3], 4, &pool, 0).unwrap();
    let mean = pool.iter().map(|k| k.e).sum::<f64>() / pool.len() as f64;
    assert_eq!(r.yield_fraction, 0.0);
    assert!((r.rmse - (v - mean).abs() / (hi - lo)).abs() < 1e-12);

    let pts = sweep_points(Component::M, &pool, 10).unwrap();
    assert_eq!(pts.len(), 10);
    assert!(pts.windows(2).all(|w| w[1] > w[0]));
    let phis = sweep_points(Component::Phi, &pool, 10).unwrap();
    assert!(phis.iter().all(|p| p.abs() < std::f64::consts::FRAC_PI_2));

    // angle errors are radians over a range of pi; 0.6 rad from a pool at 0
    let flat: Vec<FeatureVector> = pool.iter().map(|k| k.with(Component::Phi, 0.0)).collect();
    let r = evaluate_conditioning(&model, Component::Phi, &[0.6], 4, &flat, 0).unwrap();
    assert!((r.rmse - 0.6 / std::f64::consts::PI).abs() < 1e-12, "{}", r.rmse);
}

use crate::error::Error;
use crate::imgproc::Raster;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
