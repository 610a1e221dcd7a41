use super::*;
use crate::ccarender::{render, CcaParams};
use crate::imgproc::resize_bilinear;
use approx::assert_abs_diff_eq;
use proptest::prelude::*;

fn cca(d: f64, e: f64, phi: f64, m: f64) -> (Raster, BitMask) {
    let p = CcaParams {
        a: d / (2.0 * e.sqrt()),
        b: d * e.sqrt() / 2.0,
        phi,
        m,
        seed: 11,
        ..CcaParams::default()
    };
    let size = (p.extent() / 0.95).ceil() as usize + 8;
    let (img, _) = render(&p, size).unwrap();
    let mask = bubble_mask(&img).unwrap();
    (img, mask)
}

/// Eigen-decomposition of a symmetric 2x2 matrix by Jacobi rotation, as an oracle
/// independent of the closed form used by `fit_ellipse`.
fn jacobi(a: f64, b: f64, c: f64) -> (f64, f64) {
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    let (s, co) = theta.sin_cos();
    let l1 = a * co * co + 2.0 * b * s * co + c * s * s;
    let l2 = a * s * s - 2.0 * b * s * co + c * co * co;
    (l1.max(l2), l1.min(l2))
}

#[test]
fn rectangle_fit() {
    let m = BitMask::from_fn(6, 4, |x, y| (1..5).contains(&x) && (1..3).contains(&y));
    let mo = central_moments(&m).unwrap();
    let fit = fit_ellipse(&mo).unwrap();
    let (l1, l2) = jacobi(mo.mu20, mo.mu11, mo.mu02);
    assert_abs_diff_eq!(aspect_ratio(&fit), (l2 / l1).sqrt(), epsilon = 1e-12);
    assert_abs_diff_eq!(
        aspect_ratio(&fit),
        ((0.25f64 + 1.0 / 12.0) / (1.25 + 1.0 / 12.0)).sqrt(),
        epsilon = 1e-12
    );
    assert_abs_diff_eq!(aspect_ratio(&fit), 0.5, epsilon = 1e-3);
    assert_eq!(fit.phi, 0.0);
}

#[test]
fn isotropic_moments_have_zero_angle() {
    let mo = Moments {
        area: 50.0,
        cx: 0.0,
        cy: 0.0,
        mu20: 3.0,
        mu02: 3.0,
        mu11: 0.0,
    };
    let fit = fit_ellipse(&mo).unwrap();
    assert_eq!(aspect_ratio(&fit), 1.0);
    assert_eq!(fit.phi, 0.0);
}

#[test]
fn quarter_turn_maps_to_half_pi() {
    let wide = BitMask::from_fn(8, 8, |x, y| (1..7).contains(&x) && (3..5).contains(&y));
    let tall = BitMask::from_fn(8, 8, |x, y| wide.get(y, x));
    let a = fit_ellipse(&central_moments(&wide).unwrap()).unwrap();
    let b = fit_ellipse(&central_moments(&tall).unwrap()).unwrap();
    assert_eq!(a.phi, 0.0);
    assert_abs_diff_eq!(b.phi, FRAC_PI_2, epsilon = 1e-12);
    assert_abs_diff_eq!(aspect_ratio(&a), aspect_ratio(&b), epsilon = 1e-12);
}

#[test]
fn degenerate_covariance_is_rejected() {
    let mo = Moments {
        area: 1.0,
        cx: 0.0,
        cy: 0.0,
        mu20: 1.0,
        mu02: 1.0,
        mu11: 1.0,
    };
    assert!(matches!(fit_ellipse(&mo), Err(Error::DegenerateMask(_))));
}

#[test]
fn aspect_ratio_examples() {
    let f = |a, b| aspect_ratio(&EllipseFit { a, b, phi: 0.0 });
    assert_eq!(f(2.0, 1.0), 0.5);
    assert_eq!(f(1.5, 1.5), 1.0);
    assert_abs_diff_eq!(f(3.0, 1.0), 1.0 / 3.0);
}

#[test]
fn circularity_of_square_and_disk() {
    let sq = BitMask::from_fn(14, 14, |x, y| (2..12).contains(&x) && (2..12).contains(&y));
    assert_abs_diff_eq!(circularity(&sq).unwrap(), 4.0 * PI * 100.0 / 1296.0, epsilon = 1e-12);
    let (_, disk) = cca(100.0, 1.0, 0.0, 0.3);
    let psi = circularity(&disk).unwrap();
    assert!((0.95..=1.0).contains(&psi), "{psi}");
}

#[test]
fn circularity_of_ellipse_matches_ramanujan() {
    // a = 2b; a large raster makes the digital perimeter close to the continuum one
    let (a, b) = (120.0f64, 60.0f64);
    let m = BitMask::from_fn(260, 140, |x, y| {
        let (dx, dy) = (x as f64 - 129.5, y as f64 - 69.5);
        (dx / a).powi(2) + (dy / b).powi(2) <= 1.0
    });
    let p = PI * (3.0 * (a + b) - ((3.0 * a + b) * (a + 3.0 * b)).sqrt());
    let oracle = 4.0 * PI * PI * a * b / (p * p);
    assert_abs_diff_eq!(oracle, 0.841, epsilon = 1e-3);
    assert_abs_diff_eq!(circularity(&m).unwrap(), oracle, epsilon = 0.02);
}

#[test]
fn tiny_masks_use_unit_square_perimeter() {
    let mut m = BitMask::new(3, 3);
    m.set(1, 1, true);
    assert_abs_diff_eq!(circularity(&m).unwrap(), PI / 4.0);
    assert!(circularity(&BitMask::new(3, 3)).is_err());
}

#[test]
fn edge_ratio_examples() {
    let img = Raster::from_fn(10, 1, |x, _| if x < 3 { 0.1 } else { 0.8 });
    let mask = BitMask::from_fn(10, 1, |_, _| true);
    assert_abs_diff_eq!(edge_ratio(&img, &mask).unwrap(), 0.3);
    let dark = Raster::new(10, 1, 0.1);
    assert_eq!(edge_ratio(&dark, &mask).unwrap(), 1.0);
    let light = Raster::new(10, 1, 0.7);
    assert_eq!(edge_ratio(&light, &mask).unwrap(), 0.0);
}

#[test]
fn edge_ratio_of_rendered_band() {
    // s = sqrt(1 - 0.19) = 0.9
    let (img, mask) = cca(60.0, 1.0, 0.0, 0.19);
    assert_abs_diff_eq!(edge_ratio(&img, &mask).unwrap(), 0.19, epsilon = 0.05);
}

#[test]
fn round_trip_of_reference_bubble() {
    let (img, mask) = cca(48.0, 0.61, 0.53, 0.78);
    let k = extract_features(&img, &mask).unwrap();
    assert_abs_diff_eq!(k.e, 0.61, epsilon = 0.03);
    assert!(phi_distance(k.phi, 0.53) * FRAC_PI_2 <= 0.05, "phi {}", k.phi);
    assert_abs_diff_eq!(k.m, 0.78, epsilon = 0.05);
    assert!(k.is_valid());
}

#[test]
fn disk_features() {
    let (img, mask) = cca(64.0, 1.0, 0.0, 0.4);
    let k = extract_features(&img, &mask).unwrap();
    assert_abs_diff_eq!(k.e, 1.0, epsilon = 0.01);
    assert!(k.psi >= 0.95);
    assert_abs_diff_eq!(k.m, 0.4, epsilon = 0.05);
}

#[test]
fn half_turn_leaves_features_unchanged() {
    let (img, mask) = cca(50.0, 0.7, 0.9, 0.5);
    let (w, h) = (img.width(), img.height());
    let img_r = Raster::from_fn(w, h, |x, y| img.get(w - 1 - x, h - 1 - y));
    let a = extract_features(&img, &mask).unwrap();
    let b = extract_features(&img_r, &mask.rotated_180()).unwrap();
    assert_abs_diff_eq!(a.e, b.e, epsilon = 1e-12);
    assert_abs_diff_eq!(a.phi, b.phi, epsilon = 1e-12);
    assert_abs_diff_eq!(a.psi, b.psi, epsilon = 1e-12);
    assert_eq!(a.m, b.m);
}

#[test]
fn extraction_needs_one_component() {
    let img = Raster::new(6, 1, 0.5);
    let m = BitMask::from_fn(6, 1, |x, _| x == 0 || x == 5);
    assert!(matches!(extract_features(&img, &m), Err(Error::ComponentCount(2))));
}

#[test]
fn interpolation_examples() {
    let ki = FeatureVector::new(0.4, 0.0, 0.8, 0.2);
    let kj = FeatureVector::new(0.8, 0.0, 0.6, 0.6);
    assert_eq!(interpolate(&ki, &kj, 1.0).unwrap(), ki);
    assert_eq!(interpolate(&ki, &kj, 0.0).unwrap(), kj);
    let mid = interpolate(&ki, &kj, 0.5).unwrap();
    for (got, want) in mid.to_array().iter().zip([0.6, 0.0, 0.7, 0.4]) {
        assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
    }
    assert!(interpolate(&ki, &kj, 1.5).is_err());
    assert!(interpolate(&ki, &kj, -0.1).is_err());
}

#[test]
fn interpolation_crosses_the_seam() {
    let ki = FeatureVector::new(0.5, 1.5, 0.9, 0.3);
    let kj = FeatureVector::new(0.5, -1.5, 0.9, 0.3);
    let mid = interpolate(&ki, &kj, 0.5).unwrap();
    // circular mean of 1.5 and -1.5 on the period-pi circle is pi/2
    assert_abs_diff_eq!(mid.phi.abs(), FRAC_PI_2, epsilon = 1e-9);
    assert!(mid.is_valid());
}

#[test]
fn distance_examples() {
    let w = [1.0; 4];
    let k = FeatureVector::new(0.5, 0.3, 0.9, 0.4);
    assert_eq!(feature_distance(&k, &k, &w), 0.0);
    let a = FeatureVector::new(0.5, FRAC_PI_2, 0.9, 0.4);
    let b = FeatureVector::new(0.5, -FRAC_PI_2 + 0.01, 0.9, 0.4);
    assert_abs_diff_eq!(feature_distance(&a, &b, &w), 0.01 / FRAC_PI_2, epsilon = 1e-12);
    let c = FeatureVector::new(1.5, 0.3, 0.9, 0.4);
    assert_abs_diff_eq!(feature_distance(&k, &c, &w), 1.0, epsilon = 1e-12);
}

#[test]
fn wrap_phi_range() {
    assert_eq!(wrap_phi(FRAC_PI_2), FRAC_PI_2);
    assert_abs_diff_eq!(wrap_phi(-FRAC_PI_2), FRAC_PI_2, epsilon = 1e-15);
    assert_abs_diff_eq!(wrap_phi(PI + 0.2), 0.2, epsilon = 1e-12);
    assert_abs_diff_eq!(wrap_phi(-0.2), -0.2, epsilon = 1e-15);
}

#[test]
fn serialization_order() {
    let k = FeatureVector::new(0.5, -0.25, 0.75, 0.125);
    assert_eq!(serde_json::to_string(&k).unwrap(), "[0.5,-0.25,0.75,0.125]");
    let back: FeatureVector = serde_json::from_str("[0.5,-0.25,0.75,0.125]").unwrap();
    assert_eq!(back, k);
}

#[test]
fn upscaling_preserves_features() {
    for (d, e, phi, m) in [(40.0, 0.6, 0.4, 0.3), (32.0, 0.9, -1.0, 0.6), (56.0, 0.45, 1.2, 0.15)] {
        let (img, mask) = cca(d, e, phi, m);
        let k = extract_features(&img, &mask).unwrap();
        let big = resize_bilinear(&img, 2 * img.width(), 2 * img.height()).unwrap();
        let kb = extract_features(&big, &bubble_mask(&big).unwrap()).unwrap();
        assert_abs_diff_eq!(k.e, kb.e, epsilon = 0.05);
        assert!(phi_distance(k.phi, kb.phi) * FRAC_PI_2 <= 0.05);
        assert_abs_diff_eq!(k.psi, kb.psi, epsilon = 0.05);
        assert_abs_diff_eq!(k.m, kb.m, epsilon = 0.05);
    }
}

#[test]
fn rotation_shifts_angle() {
    let base = 0.2;
    let (img, mask) = cca(48.0, 0.6, base, 0.4);
    let k0 = extract_features(&img, &mask).unwrap();
    for delta in [0.3, 0.9, 1.4, 2.5] {
        let (img, mask) = cca(48.0, 0.6, wrap_phi(base + delta), 0.4);
        let k = extract_features(&img, &mask).unwrap();
        let shift = wrap_phi(k.phi - k0.phi);
        assert!(
            phi_distance(shift, delta) * 90.0 <= 3.0,
            "delta {delta}: measured shift {shift}"
        );
    }
}

fn arb_k() -> impl Strategy<Value = FeatureVector> {
    (0.01f64..=1.0, -1.5707f64..=FRAC_PI_2, 0.01f64..=1.0, 0.0f64..=1.0)
        .prop_map(|(e, p, s, m)| FeatureVector::new(e, p, s, m))
}

proptest! {
    #[test]
    fn interpolation_stays_valid(ki in arb_k(), kj in arb_k(), beta in 0.0f64..=1.0) {
        let k = interpolate(&ki, &kj, beta).unwrap();
        prop_assert!(k.is_valid(), "{:?}", k);
    }

    #[test]
    fn distance_is_a_metric(a in arb_k(), b in arb_k(), c in arb_k(),
                            w in proptest::array::uniform4(0.0f64..3.0)) {
        let d = |x: &FeatureVector, y: &FeatureVector| feature_distance(x, y, &w);
        prop_assert!(d(&a, &a) == 0.0);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-12);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
    }

    #[test]
    fn wrapped_angles_are_in_range(phi in -20.0f64..20.0) {
        let w = wrap_phi(phi);
        prop_assert!(w > -FRAC_PI_2 && w <= FRAC_PI_2);
        prop_assert!(phi_distance(w, phi) < 1e-9);
    }
}
