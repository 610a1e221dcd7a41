use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{density_map, paint, place_with_boundary, prepare_sprite, sample_bubble_list, DensityMap, FlowSpec};
use crate::bubdb::BubbleDb;
use crate::error::{Error, Result};
use crate::features::{extract_features, fit_ellipse};
use crate::imgproc::{central_moments, Raster};

/// Ground truth of one painted bubble. Geometry is that of the footprint as
/// painted, before any cropping at the image edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub a: f64,
    pub b: f64,
    pub phi: f64,
    pub e: f64,
    pub psi: f64,
    pub m: f64,
    /// `pi a b` of the footprint's moment ellipse.
    pub area: f64,
    /// Inclusive canvas bounding box `(x0, y0, x1, y1)`; may extend past the image.
    pub bbox: (i64, i64, i64, i64),
    pub clipped: bool,
    pub record: usize,
    /// Pixels actually darkened or matched by this bubble.
    pub painted: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub labels: Vec<Label>,
    pub spec: FlowSpec,
    pub seed: u64,
}

impl LabelSet {
    pub fn count(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub image: Raster,
    pub labels: LabelSet,
    pub density: DensityMap,
}

/// Synthesizes one labelled scene from `spec`, drawing bubbles from `db`.
pub fn synthesize(spec: &FlowSpec, db: &BubbleDb) -> Result<Scene> {
    synthesize_with_order(spec, db, None)
}

/// As [`synthesize`], painting in the given order (a permutation of bubble ids)
/// instead of by ascending depth.
pub fn synthesize_with_order(spec: &FlowSpec, db: &BubbleDb, order: Option<&[usize]>) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let list = sample_bubble_list(spec, &db.features(), &mut rng)?;
    if !list.is_empty() && db.is_empty() {
        return Err(Error::EmptyDatabase);
    }

    let mut placed = Vec::with_capacity(list.len());
    for inst in &list {
        let idx = db.query_nearest(&inst.target, &spec.query_weights)?;
        let record = &db.records()[idx];
        let (sprite, snapped) = prepare_sprite(record, inst, spec)?;
        let mut inst = place_with_boundary(&snapped, spec)?;
        inst.record = Some(idx);
        placed.push((sprite, inst));
    }

    let mut image = Raster::new(spec.width, spec.height, 0.0);
    for y in 0..spec.height {
        for x in 0..spec.width {
            let n: f64 = StandardNormal.sample(&mut rng);
            image.set(x, y, (spec.background + spec.noise * n).clamp(0.0, 1.0) as f32);
        }
    }

    let order: Vec<usize> = match order {
        Some(o) => {
            let mut seen = vec![false; placed.len()];
            if o.len() != placed.len() || o.iter().any(|&i| i >= seen.len() || std::mem::replace(&mut seen[i], true)) {
                return Err(Error::invalid("paint order must be a permutation of the bubble ids"));
            }
            o.to_vec()
        }
        None => {
            let mut o: Vec<usize> = (0..placed.len()).collect();
            o.sort_by(|&i, &j| placed[i].1.z.total_cmp(&placed[j].1.z).then(i.cmp(&j)));
            o
        }
    };
    let mut painted = vec![0; placed.len()];
    for &i in &order {
        let (sprite, inst) = &placed[i];
        painted[i] = paint(&mut image, sprite, inst, spec.background);
    }

    let mut labels = Vec::with_capacity(placed.len());
    for (id, (sprite, inst)) in placed.iter().enumerate() {
        let record = inst.record.expect("queried above");
        let fit = fit_ellipse(&central_moments(&sprite.mask)?)?;
        // tiny rescaled patches may not support extraction; keep the record's values
        let k = extract_features(&sprite.patch, &sprite.mask).unwrap_or(db.records()[record].features);
        let (ox, oy) = sprite.origin(inst.x, inst.y);
        let (x0, y0, x1, y1) = sprite.mask.bbox().expect("non-empty mask");
        labels.push(Label {
            id,
            x: inst.x,
            y: inst.y,
            z: inst.z,
            a: fit.a,
            b: fit.b,
            phi: k.phi,
            e: k.e,
            psi: k.psi,
            m: k.m,
            area: std::f64::consts::PI * fit.a * fit.b,
            bbox: (ox + x0 as i64, oy + y0 as i64, ox + x1 as i64, oy + y1 as i64),
            clipped: inst.clipped,
            record,
            painted: painted[id],
        });
    }
    let labels = LabelSet {
        labels,
        spec: spec.clone(),
        seed: spec.seed,
    };
    let density = density_map(&labels, spec)?;
    Ok(Scene { image, labels, density })
}
