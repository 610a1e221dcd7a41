//! Outer boundary tracing and perimeter estimation.

use super::components::{connected_components, Connectivity};
use super::raster::BitMask;
use crate::error::{Error, Result};

/// Moore neighbourhood, clockwise on screen (y grows downward), starting west.
const MOORE: [(isize, isize); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

/// Maximum deviation (px) of chain points from a polygon edge that replaces them.
const POLYGON_TOLERANCE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct Perimeter {
    /// Length of the boundary polygon through pixel centres, with collinear runs of
    /// the chain merged into single edges.
    pub length: f64,
    /// Raw chain length (axial steps 1, diagonal steps sqrt 2).
    pub chain_length: f64,
    /// Number of chain steps.
    pub steps: usize,
}

/// Traces the outer boundary of a single 8-connected component, clockwise from the
/// first set pixel in raster order. The start point is not repeated at the end.
pub fn trace_boundary(mask: &BitMask) -> Vec<(isize, isize)> {
    let Some((sx, sy)) = mask.iter_set().next() else {
        return Vec::new();
    };
    let start = (sx as isize, sy as isize);
    // scan clockwise from the backtrack neighbour `from`; returns the first set pixel
    // and the (background) neighbour examined just before it
    let step = |cur: (isize, isize), from: usize| -> Option<((isize, isize), (isize, isize))> {
        (1..=8).map(|i| (from + i) % 8).find_map(|d| {
            let n = (cur.0 + MOORE[d].0, cur.1 + MOORE[d].1);
            let prev = MOORE[(d + 7) % 8];
            mask.get_signed(n.0, n.1)
                .then_some((n, (cur.0 + prev.0, cur.1 + prev.1)))
        })
    };
    let ring_index = |centre: (isize, isize), p: (isize, isize)| -> usize {
        let rel = (p.0 - centre.0, p.1 - centre.1);
        MOORE.iter().position(|&o| o == rel).expect("backtrack is adjacent")
    };
    // the start is entered from its west neighbour, which is background
    let Some((first, back0)) = step(start, 0) else {
        return vec![start];
    };
    let mut chain = vec![start];
    let mut cur = first;
    let mut back = back0;
    let limit = 4 * mask.width() * mask.height() + 8;
    while chain.len() < limit {
        let (next, b) = step(cur, ring_index(cur, back)).expect("traced pixel has a neighbour");
        if cur == start && next == first {
            break;
        }
        chain.push(cur);
        back = b;
        cur = next;
    }
    chain
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0)
    };
    let (dx, dy) = (wx - t * vx, wy - t * vy);
    (dx * dx + dy * dy).sqrt()
}

fn polygon_length(chain: &[(isize, isize)]) -> f64 {
    let n = chain.len();
    if n < 2 {
        return 0.0;
    }
    let pt = |i: usize| {
        let (x, y) = chain[i % n];
        (x as f64, y as f64)
    };
    let mut total = 0.0;
    let mut i = 0usize;
    while i < n {
        let mut j = i + 1;
        while j < n {
            let cand = j + 1;
            let (a, b) = (pt(i), pt(cand));
            if (i + 1..cand).all(|k| segment_distance(pt(k), a, b) <= POLYGON_TOLERANCE) {
                j = cand;
            } else {
                break;
            }
        }
        let (a, b) = (pt(i), pt(j));
        total += ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        i = j;
    }
    total
}

/// Perimeter of a mask with exactly one 8-connected component.
pub fn contour_perimeter(mask: &BitMask) -> Result<Perimeter> {
    let n = connected_components(mask, Connectivity::Eight).count as usize;
    if n != 1 {
        return Err(Error::ComponentCount(n));
    }
    let chain = trace_boundary(mask);
    let steps = if chain.len() > 1 { chain.len() } else { 0 };
    let chain_length = if steps == 0 {
        0.0
    } else {
        (0..chain.len())
            .map(|i| {
                let a = chain[i];
                let b = chain[(i + 1) % chain.len()];
                if a.0 != b.0 && a.1 != b.1 {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                }
            })
            .sum()
    };
    Ok(Perimeter {
        length: polygon_length(&chain),
        chain_length,
        steps,
    })
}
