//! Zhang-Suen two-subiteration thinning.
//!
//! Two changes to the textbook rule: a candidate needs at least three neighbours
//! rather than two (Lu and Wang), which keeps bar ends from eroding, and the
//! candidates of each subiteration are confirmed one at a time with a simple-point
//! test so that a 2x2 block can never vanish.

use super::raster::BitMask;

/// Neighbours P2..P9, clockwise starting north.
const RING: [(isize, isize); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

/// Thins `mask` to a one-pixel-wide 8-connected skeleton.
pub fn skeletonize(mask: &BitMask) -> BitMask {
    let mut m = mask.clone();
    let mut doomed = Vec::new();
    loop {
        let mut changed = false;
        for first in [true, false] {
            doomed.clear();
            for (x, y) in m.iter_set() {
                let (x, y) = (x as isize, y as isize);
                let p: [bool; 8] = std::array::from_fn(|i| m.get_signed(x + RING[i].0, y + RING[i].1));
                let b = p.iter().filter(|&&v| v).count();
                if !(3..=6).contains(&b) {
                    continue;
                }
                let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
                if a != 1 {
                    continue;
                }
                // p[0]=P2 (N), p[2]=P4 (E), p[4]=P6 (S), p[6]=P8 (W)
                let ok = if first {
                    !(p[0] && p[2] && p[4]) && !(p[2] && p[4] && p[6])
                } else {
                    !(p[0] && p[2] && p[6]) && !(p[0] && p[4] && p[6])
                };
                if ok {
                    doomed.push((x as usize, y as usize));
                }
            }
            // parallel candidates are re-checked one by one so that deleting a whole
            // 2x2 block (the classic Zhang-Suen failure) cannot change topology
            for &(x, y) in &doomed {
                let (sx, sy) = (x as isize, y as isize);
                let p: [bool; 8] =
                    std::array::from_fn(|i| m.get_signed(sx + RING[i].0, sy + RING[i].1));
                // the parallel test already demanded b >= 3; here the pixel only has
                // to keep a neighbour and be simple in the current state
                if p.iter().any(|&v| v) && yokoi8(&p) == 1 {
                    m.set(x, y, false);
                    changed = true;
                }
            }
        }
        if !changed {
            return m;
        }
    }
}

/// Yokoi connectivity number for 8-connected foreground; 1 means the centre is simple.
fn yokoi8(p: &[bool; 8]) -> usize {
    let c = |i: usize| !p[i % 8] as usize;
    [0usize, 2, 4, 6]
        .iter()
        .map(|&i| c(i) - c(i) * c(i + 1) * c(i + 2))
        .sum()
}

/// Number of set 8-neighbours of a set pixel.
pub fn neighbour_count(mask: &BitMask, x: usize, y: usize) -> usize {
    RING.iter()
        .filter(|&&(dx, dy)| mask.get_signed(x as isize + dx, y as isize + dy))
        .count()
}

/// Skeleton pixels with exactly one 8-neighbour.
pub fn endpoints(skel: &BitMask) -> Vec<(usize, usize)> {
    skel.iter_set()
        .filter(|&(x, y)| neighbour_count(skel, x, y) == 1)
        .collect()
}

/// Removes terminal branches shorter than `min_len` pixels.
///
/// A branch is walked from an endpoint until the next pixel would be a junction
/// (two or more neighbours off the walked path). If the walk stops at a junction
/// before reaching `min_len` pixels, the walked pixels are deleted. Repeats until
/// stable. Segments that end without meeting a junction are kept.
pub fn prune_spurs(skel: &BitMask, min_len: usize) -> BitMask {
    let mut m = skel.clone();
    let off_path = |m: &BitMask, p: (usize, usize), path: &[(usize, usize)]| -> Vec<(usize, usize)> {
        RING.iter()
            .map(|&(dx, dy)| (p.0 as isize + dx, p.1 as isize + dy))
            .filter(|&(nx, ny)| m.get_signed(nx, ny))
            .map(|(nx, ny)| (nx as usize, ny as usize))
            .filter(|q| !path.contains(q))
            .collect()
    };
    loop {
        let mut removed = false;
        for e in endpoints(&m) {
            if !m.get(e.0, e.1) || neighbour_count(&m, e.0, e.1) != 1 {
                continue;
            }
            let mut path = vec![e];
            let mut at_junction = false;
            while path.len() < min_len {
                let cur = *path.last().expect("non-empty path");
                let cands = off_path(&m, cur, &path);
                match cands.len() {
                    0 => break,
                    1 => {
                        let n = cands[0];
                        if off_path(&m, n, &path).len() >= 2 {
                            at_junction = true;
                            break;
                        }
                        path.push(n);
                    }
                    _ => {
                        path.pop();
                        at_junction = true;
                        break;
                    }
                }
            }
            if at_junction && !path.is_empty() && path.len() < min_len {
                for &(x, y) in &path {
                    m.set(x, y, false);
                }
                removed = true;
            }
        }
        if !removed {
            return m;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgproc::components::{connected_components, Connectivity};
    use proptest::prelude::*;

    #[test]
    fn thin_line_unchanged() {
        let m = BitMask::from_fn(9, 3, |x, y| y == 1 && (1..8).contains(&x));
        assert_eq!(skeletonize(&m), m);
    }

    #[test]
    fn bar_becomes_horizontal_line() {
        let m = BitMask::from_fn(15, 7, |x, y| (2..13).contains(&x) && (2..5).contains(&y));
        let s = skeletonize(&m);
        assert!(s.iter_set().all(|(_, y)| y == 3), "{:?}", s.iter_set().collect::<Vec<_>>());
        assert!(s.count() >= 9, "{:?}", s.iter_set().collect::<Vec<_>>());
    }

    #[test]
    fn disk_collapses_to_small_blob() {
        let m = BitMask::from_fn(31, 31, |x, y| {
            let (dx, dy) = (x as f64 - 15.0, y as f64 - 15.0);
            dx * dx + dy * dy <= 100.0
        });
        let s = skeletonize(&m);
        assert!(s.count() >= 1 && s.count() <= 4, "disk skeleton has {} px", s.count());
    }

    #[test]
    fn prune_removes_short_spur() {
        // horizontal line with a 2-px vertical spur in the middle
        let mut m = BitMask::from_fn(21, 6, |x, y| y == 4 && (1..20).contains(&x));
        m.set(10, 3, true);
        m.set(10, 2, true);
        let p = prune_spurs(&m, 4);
        assert!(!p.get(10, 2));
        assert!(p.get(10, 4));
        assert_eq!(endpoints(&p).len(), 2);
    }

    proptest! {
        #[test]
        fn skeleton_subset_and_topology(bits in proptest::collection::vec(prop::bool::weighted(0.6), 144)) {
            let m = BitMask::from_vec(12, 12, bits).unwrap();
            let s = skeletonize(&m);
            prop_assert!(s.iter_set().all(|(x, y)| m.get(x, y)));
            prop_assert_eq!(
                connected_components(&s, Connectivity::Eight).count,
                connected_components(&m, Connectivity::Eight).count
            );
        }
    }
}
