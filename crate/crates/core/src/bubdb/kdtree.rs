//! Exact nearest-neighbour search over feature vectors.

use crate::features::{feature_distance, phi_distance, FeatureVector};

const LEAF: usize = 8;

#[derive(Clone, Debug)]
struct Node {
    lo: [f64; 4],
    hi: [f64; 4],
    /// Range into `order` covered by this node.
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

/// k-d tree over `[E, phi, psi, m]`.
///
/// Leaves are scored with [`feature_distance`] itself, and the bounds used for
/// pruning treat the angle as periodic, so a query returns exactly what a linear
/// scan would, including the lowest-index tie break.
#[derive(Clone, Debug, Default)]
pub struct KdTree {
    nodes: Vec<Node>,
    order: Vec<usize>,
    points: Vec<FeatureVector>,
}

impl KdTree {
    pub fn build(points: &[FeatureVector]) -> KdTree {
        let mut tree = KdTree {
            nodes: Vec::new(),
            order: (0..points.len()).collect(),
            points: points.to_vec(),
        };
        if !points.is_empty() {
            tree.split(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn split(&mut self, start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; 4];
        let mut hi = [f64::NEG_INFINITY; 4];
        for &i in &self.order[start..end] {
            let p = self.points[i].to_array();
            for d in 0..4 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            start,
            end,
            children: None,
        });
        if end - start > LEAF {
            let axis = (0..4)
                .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
                .unwrap_or(0);
            let mid = start + (end - start) / 2;
            let points = &self.points;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                points[a].to_array()[axis].total_cmp(&points[b].to_array()[axis])
            });
            let left = self.split(start, mid);
            let right = self.split(mid, end);
            self.nodes[id].children = Some((left, right));
        }
        id
    }

    /// Lower bound of the weighted distance from `t` to anything inside node `n`.
    fn bound(&self, n: usize, t: &[f64; 4], w: &[f64; 4]) -> f64 {
        let node = &self.nodes[n];
        let mut sum = 0.0;
        for d in 0..4 {
            let gap = if (node.lo[d]..=node.hi[d]).contains(&t[d]) {
                0.0
            } else if d == 1 {
                phi_distance(t[d], node.lo[d]).min(phi_distance(t[d], node.hi[d]))
            } else if t[d] < node.lo[d] {
                node.lo[d] - t[d]
            } else {
                t[d] - node.hi[d]
            };
            sum += w[d] * gap * gap;
        }
        sum.sqrt()
    }

    /// Index of the point closest to `target`, lowest index on ties.
    pub fn nearest(&self, target: &FeatureVector, w: &[f64; 4]) -> Option<usize> {
        if self.is_empty() {
            return None;
        }
        let t = target.to_array();
        let mut best = (f64::INFINITY, usize::MAX);
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            // small slack so rounding in the bound can never prune a true winner
            if self.bound(n, &t, w) > best.0 * (1.0 + 1e-9) + 1e-12 {
                continue;
            }
            let node = &self.nodes[n];
            match node.children {
                None => {
                    for &i in &self.order[node.start..node.end] {
                        let d = feature_distance(target, &self.points[i], w);
                        if d < best.0 || (d == best.0 && i < best.1) {
                            best = (d, i);
                        }
                    }
                }
                Some((l, r)) => {
                    let (bl, br) = (self.bound(l, &t, w), self.bound(r, &t, w));
                    // nearer child last so it is searched first
                    if bl <= br {
                        stack.extend([r, l]);
                    } else {
                        stack.extend([l, r]);
                    }
                }
            }
        }
        Some(best.1)
    }
}
