//! Exact Euclidean distance transform (separable lower-envelope-of-parabolas method).

use super::raster::{BitMask, Field};

const INF: f64 = 1e20;

/// Distance from every set pixel to the nearest unset pixel; unset pixels are 0.
///
/// If the mask has no unset pixel at all, distances are taken to the ring of
/// pixels just outside the image instead.
pub fn distance_transform(mask: &BitMask) -> Field {
    let (w, h) = (mask.width(), mask.height());
    if w == 0 || h == 0 {
        return Field::zeros(w, h);
    }
    if mask.count() == w * h {
        let padded = BitMask::from_fn(w + 2, h + 2, |x, y| {
            x > 0 && y > 0 && x <= w && y <= h
        });
        let d = distance_transform(&padded);
        let mut out = Field::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                out.data[y * w + x] = d.get(x + 1, y + 1);
            }
        }
        return out;
    }

    let mut grid: Vec<f64> = mask.bits().iter().map(|&b| if b { INF } else { 0.0 }).collect();
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        edt_1d(&f[..h], &mut d[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = d[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        edt_1d(&f[..w], &mut d[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&d[..w]);
    }

    Field {
        width: w,
        height: h,
        data: grid.into_iter().map(|s| s.sqrt() as f32).collect(),
    }
}

/// Squared distance transform of a sampled function along one line.
fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let intersect = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = INF;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(mask: &BitMask) -> Vec<f32> {
        let unset: Vec<(usize, usize)> = (0..mask.height())
            .flat_map(|y| (0..mask.width()).map(move |x| (x, y)))
            .filter(|&(x, y)| !mask.get(x, y))
            .collect();
        let mut out = vec![0.0; mask.width() * mask.height()];
        for (x, y) in mask.iter_set() {
            let best = unset
                .iter()
                .map(|&(ux, uy)| {
                    let dx = ux as f64 - x as f64;
                    let dy = uy as f64 - y as f64;
                    (dx * dx + dy * dy).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            out[y * mask.width() + x] = best as f32;
        }
        out
    }

    #[test]
    fn row_with_cleared_ends() {
        let m = BitMask::from_fn(5, 1, |x, _| x != 0 && x != 4);
        let d = distance_transform(&m);
        assert_eq!(d.data, vec![0.0, 1.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn empty_mask_is_zero() {
        let d = distance_transform(&BitMask::new(6, 4));
        assert!(d.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn disk_peak_near_radius() {
        let r = 12.0;
        let m = BitMask::from_fn(31, 31, |x, y| {
            let (dx, dy) = (x as f64 - 15.0, y as f64 - 15.0);
            dx * dx + dy * dy <= r * r
        });
        let d = distance_transform(&m);
        let oracle = brute(&m);
        assert_eq!(d.data, oracle);
        assert!((d.max() as f64 - r).abs() <= 1.0);
    }

    #[test]
    fn full_mask_measures_to_outside() {
        let m = BitMask::from_fn(3, 3, |_, _| true);
        let d = distance_transform(&m);
        assert_eq!(d.get(1, 1), 2.0);
        assert_eq!(d.get(0, 0), 1.0);
    }

    proptest! {
        #[test]
        fn matches_brute_force(bits in proptest::collection::vec(prop::bool::weighted(0.7), 90)) {
            let m = BitMask::from_vec(10, 9, bits).unwrap();
            prop_assume!(m.count() < 90);
            let d = distance_transform(&m);
            let b = brute(&m);
            for (x, y) in d.data.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-5);
            }
            // grid triangle inequality
            for y in 0..9isize {
                for x in 0..10isize {
                    for (dx, dy) in [(1isize, 0isize), (0, 1), (1, 1), (1, -1)] {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= 10 || ny >= 9 { continue; }
                        let a = d.get(x as usize, y as usize);
                        let b = d.get(nx as usize, ny as usize);
                        let step = ((dx * dx + dy * dy) as f32).sqrt();
                        prop_assert!(a <= b + step + 1e-5);
                        prop_assert!(b <= a + step + 1e-5);
                    }
                }
            }
        }
    }
}
