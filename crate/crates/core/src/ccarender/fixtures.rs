//! Rendered scenes with known content, used to validate the patch pipeline.

use rand::Rng;

use super::{render_scene, CcaParams, Placement};
use crate::error::Result;
use crate::imgproc::{BitMask, Raster};

/// A rendered scene and the per-bubble masks it was drawn from.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub image: Raster,
    pub masks: Vec<BitMask>,
    pub placements: Vec<Placement>,
}

fn bubble(rng: &mut impl Rng, d: f64, e: (f64, f64)) -> CcaParams {
    let e = rng.random_range(e.0..=e.1);
    CcaParams {
        a: d / (2.0 * e.sqrt()),
        b: d * e.sqrt() / 2.0,
        phi: rng.random_range(-1.5..1.5),
        m: rng.random_range(0.1..=0.8),
        wobble: (0..4)
            .map(|_| (rng.random_range(0.0..=0.03), rng.random_range(0.0..std::f64::consts::TAU)))
            .collect(),
        seed: 0,
        ..CcaParams::default()
    }
}

/// One bubble of equivalent diameter in `diameter`, alone on a canvas.
pub fn isolated_bubble(rng: &mut impl Rng, diameter: (f64, f64)) -> Result<Fixture> {
    let d = rng.random_range(diameter.0..=diameter.1);
    let p = bubble(rng, d, (0.5, 1.0));
    let size = (p.extent() * 1.5).ceil() as usize + 16;
    let c = size as f64 / 2.0;
    let placements = vec![Placement { params: p, cx: c, cy: c }];
    let (image, masks) = render_scene(size, size, &placements, 0.88, 0.02, rng.random())?;
    Ok(Fixture {
        image,
        masks,
        placements,
    })
}

/// Two bubbles whose masks overlap by `overlap` of the smaller one's area.
pub fn two_bubble_cluster(rng: &mut impl Rng, diameter: (f64, f64), overlap: f64) -> Result<Fixture> {
    let d1 = rng.random_range(diameter.0..=diameter.1);
    let d2 = rng.random_range(diameter.0..=diameter.1);
    let p1 = bubble(rng, d1, (0.6, 1.0));
    let p2 = bubble(rng, d2, (0.6, 1.0));
    let reach = (p1.extent() + p2.extent()) / 2.0;
    let size = (reach * 2.2).ceil() as usize + 16;
    let c = size as f64 / 2.0;
    let dir = rng.random_range(0.0..std::f64::consts::TAU);
    let (ux, uy) = (dir.cos(), dir.sin());
    let place = |sep: f64| {
        vec![
            Placement { params: p1.clone(), cx: c - ux * sep / 2.0, cy: c - uy * sep / 2.0 },
            Placement { params: p2.clone(), cx: c + ux * sep / 2.0, cy: c + uy * sep / 2.0 },
        ]
    };
    let frac = |sep: f64| -> Result<f64> {
        let (_, m) = render_scene(size, size, &place(sep), 0.88, 0.0, 0)?;
        let both = m[0].and(&m[1]).count() as f64;
        Ok(both / m[0].count().min(m[1].count()) as f64)
    };
    // overlap shrinks monotonically (up to pixel noise) with the separation
    let (mut lo, mut hi) = (0.0, reach);
    for _ in 0..20 {
        let mid = 0.5 * (lo + hi);
        if frac(mid)? > overlap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let placements = place(0.5 * (lo + hi));
    let (image, masks) = render_scene(size, size, &placements, 0.88, 0.02, rng.random())?;
    Ok(Fixture {
        image,
        masks,
        placements,
    })
}
