//! Marker-controlled watershed on a distance map.
//!
//! Pixels are flooded from the highest distance down. A new peak opens a basin;
//! when two basins meet, the one with the lower peak survives only if it rose at
//! least `h` above the meeting level (h-maxima suppression). Surviving basins keep
//! their own labels, so the meeting pixels form the watershed lines between them.

use super::raster::{BitMask, Field, LabelMap};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Watershed {
    pub count: usize,
    pub labels: LabelMap,
}

struct Basins {
    parent: Vec<usize>,
    peak: Vec<f32>,
}

impl Basins {
    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }
}

/// Counts catchment basins of `-dist` inside `mask` after suppressing maxima of
/// dynamic lower than `h`.
pub fn watershed_count(dist: &Field, mask: &BitMask, h: f32) -> Watershed {
    let (w, hgt) = (mask.width(), mask.height());
    assert_eq!((dist.width, dist.height), (w, hgt), "distance map and mask differ in size");

    let mut order: Vec<usize> = (0..w * hgt).filter(|&i| mask.bits()[i]).collect();
    // descending distance, ties in raster order
    order.sort_by(|&a, &b| dist.data[b].total_cmp(&dist.data[a]).then(a.cmp(&b)));

    // basin id per pixel (usize::MAX = unvisited); basins are indexed by their seed pixel
    let mut owner = vec![usize::MAX; w * hgt];
    let mut basins = Basins {
        parent: (0..w * hgt).collect(),
        peak: vec![0.0; w * hgt],
    };
    let mut roots: Vec<usize> = Vec::with_capacity(8);

    for &p in &order {
        let level = dist.data[p];
        let (x, y) = ((p % w) as isize, (p / w) as isize);
        roots.clear();
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= hgt as isize {
                    continue;
                }
                let q = ny as usize * w + nx as usize;
                if owner[q] != usize::MAX {
                    let r = basins.find(owner[q]);
                    if !roots.contains(&r) {
                        roots.push(r);
                    }
                }
            }
        }
        if roots.is_empty() {
            basins.peak[p] = level;
            owner[p] = p;
            continue;
        }
        // strongest neighbour basin first; lower seed index breaks ties
        roots.sort_by(|&a, &b| basins.peak[b].total_cmp(&basins.peak[a]).then(a.cmp(&b)));
        let winner = roots[0];
        for &r in &roots[1..] {
            if basins.peak[r] - level < h {
                basins.parent[r] = winner;
            }
        }
        owner[p] = winner;
    }

    // relabel surviving basins in raster order of first pixel
    let mut label_of = std::collections::HashMap::new();
    let mut labels = vec![0u32; w * hgt];
    for i in 0..w * hgt {
        if owner[i] == usize::MAX {
            continue;
        }
        let r = basins.find(owner[i]);
        let next = label_of.len() as u32 + 1;
        labels[i] = *label_of.entry(r).or_insert(next);
    }
    let count = label_of.len();
    Watershed {
        count,
        labels: LabelMap {
            width: w,
            height: hgt,
            labels,
            count: count as u32,
        },
    }
}

/// Default suppression depth: 15% of the map's maximum.
pub fn default_h(dist: &Field) -> f32 {
    0.15 * dist.max()
}
