//! Pre-generated bubble database: build from a trained generator, nearest-feature
//! lookup, feature statistics and the `BUBDB1` container.

mod io;
mod kdtree;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{interpolate, FeatureVector};
use crate::gan::GanModel;
use crate::record::BubbleRecord;
use crate::scalar::Scalar;

pub use io::{decode_db, encode_db, load_db, save_db, BDB_MAGIC, BDB_VERSION};
pub use kdtree::KdTree;

/// Equal weights on all four components.
pub const UNIT_WEIGHTS: [f64; 4] = [1.0; 4];

/// Records generated per generator call while building.
const BUILD_BATCH: usize = 64;

/// Bubble records of one patch side, indexed by feature vector.
#[derive(Clone, Debug)]
pub struct BubbleDb {
    records: Vec<BubbleRecord>,
    side: usize,
    corpus: bool,
    index: KdTree,
}

impl PartialEq for BubbleDb {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records && self.side == other.side && self.corpus == other.corpus
    }
}

impl BubbleDb {
    /// `corpus` marks a training set rather than a generated database.
    pub fn new(records: Vec<BubbleRecord>, corpus: bool) -> Result<BubbleDb> {
        let side = records.first().map_or(0, BubbleRecord::side);
        if let Some(r) = records.iter().find(|r| r.side() != side || r.mask.width() != side) {
            return Err(Error::Shape(format!(
                "mixed patch sides {} and {} in one database",
                side,
                r.side()
            )));
        }
        if side > u16::MAX as usize {
            return Err(Error::invalid(format!("patch side {side} too large")));
        }
        let index = KdTree::build(&records.iter().map(|r| r.features).collect::<Vec<_>>());
        Ok(BubbleDb {
            records,
            side,
            corpus,
            index,
        })
    }

    pub fn records(&self) -> &[BubbleRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<BubbleRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Patch side in pixels (0 for an empty database).
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn is_corpus(&self) -> bool {
        self.corpus
    }

    pub fn set_corpus(&mut self, corpus: bool) {
        self.corpus = corpus;
    }

    pub fn features(&self) -> Vec<FeatureVector> {
        self.records.iter().map(|r| r.features).collect()
    }

    /// Index of the record nearest to `target` under
    /// [`feature_distance`](crate::features::feature_distance); ties go to the lowest index.
    pub fn query_nearest(&self, target: &FeatureVector, weights: &[f64; 4]) -> Result<usize> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(format!("weights must be finite and >= 0, got {weights:?}")));
        }
        if target.to_array().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("query vector must be finite"));
        }
        self.index.nearest(target, weights).ok_or(Error::EmptyDatabase)
    }

    /// Pearson correlations of `[E, phi, psi, m]` across the records.
    pub fn correlation_matrix(&self) -> Result<Correlation> {
        correlation_matrix(&self.features())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub matrix: [[f64; 4]; 4],
    /// Set where either component has zero variance; the entry is then 0
    /// (the diagonal stays 1).
    pub degenerate: [[bool; 4]; 4],
}

pub fn correlation_matrix(features: &[FeatureVector]) -> Result<Correlation> {
    if features.len() < 3 {
        return Err(Error::invalid(format!(
            "correlation needs at least 3 records, got {}",
            features.len()
        )));
    }
    let n = features.len() as f64;
    let cols: Vec<[f64; 4]> = features.iter().map(|k| k.to_array()).collect();
    let mut mean = [0.0; 4];
    for c in &cols {
        for d in 0..4 {
            mean[d] += c[d] / n;
        }
    }
    let mut cov = [[0.0; 4]; 4];
    for c in &cols {
        for i in 0..4 {
            for j in 0..4 {
                cov[i][j] += (c[i] - mean[i]) * (c[j] - mean[j]);
            }
        }
    }
    let flat: Vec<bool> = (0..4)
        .map(|d| cols.iter().all(|c| c[d] == cols[0][d]))
        .collect();
    let mut matrix = [[0.0; 4]; 4];
    let mut degenerate = [[false; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            if i == j {
                matrix[i][j] = 1.0;
                degenerate[i][j] = flat[i];
            } else if flat[i] || flat[j] {
                degenerate[i][j] = true;
            } else {
                let r = cov[i][j] / (cov[i][i] * cov[j][j]).sqrt();
                matrix[i][j] = r.clamp(-1.0, 1.0);
            }
        }
    }
    // exact symmetry regardless of summation order
    for i in 0..4 {
        for j in 0..i {
            matrix[i][j] = matrix[j][i];
        }
    }
    Ok(Correlation { matrix, degenerate })
}

/// Statistics of a finished build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildStats {
    pub attempts: usize,
    pub accepted: usize,
}

/// Generates `n` single-bubble records conditioned on interpolations of random
/// pool pairs; features are re-extracted from every generated patch. Patches that
/// do not segment into one bubble are replaced, up to `10 n` attempts in total.
pub fn build<T: Scalar>(
    model: &GanModel<T>,
    n: usize,
    pool: &[FeatureVector],
    seed: u64,
) -> Result<(BubbleDb, BuildStats)> {
    if n == 0 {
        return Err(Error::invalid("database size must be at least 1"));
    }
    if pool.is_empty() {
        return Err(Error::invalid("conditioning pool is empty"));
    }
    let cap = n.saturating_mul(10);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    let mut attempts = 0;
    while records.len() < n {
        if attempts >= cap {
            return Err(Error::UnusablePatches {
                accepted: records.len(),
                attempts,
                cap,
            });
        }
        let batch = (n - records.len()).min(BUILD_BATCH).min(cap - attempts);
        let targets = (0..batch)
            .map(|_| {
                let a = &pool[rng.random_range(0..pool.len())];
                let b = &pool[rng.random_range(0..pool.len())];
                interpolate(a, b, rng.random_range(0.0..=1.0))
            })
            .collect::<Result<Vec<_>>>()?;
        for img in model.generate(&targets, &mut rng)? {
            attempts += 1;
            if let Ok(r) = BubbleRecord::from_patch(&img, true) {
                records.push(r);
            }
        }
        log::debug!("build: {} of {n} records after {attempts} attempts", records.len());
    }
    let stats = BuildStats {
        attempts,
        accepted: records.len(),
    };
    Ok((BubbleDb::new(records, false)?, stats))
}
