use crate::imgproc::BitMask;

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Area of the convex hull of all set pixels, each pixel taken as a unit square.
pub fn convex_hull_area(mask: &BitMask) -> f64 {
    // only the extreme pixels of each row can contribute hull corners
    let mut pts = Vec::new();
    for y in 0..mask.height() {
        let row: Vec<usize> = (0..mask.width()).filter(|&x| mask.get(x, y)).collect();
        if let (Some(&lo), Some(&hi)) = (row.first(), row.last()) {
            for x in [lo as i64, hi as i64 + 1] {
                pts.push((x, y as i64));
                pts.push((x, y as i64 + 1));
            }
        }
    }
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return 0.0;
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(i64, i64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    let twice: i64 = (0..hull.len())
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    twice.abs() as f64 / 2.0
}

/// Area over convex-hull area, in `(0, 1]`; 0 for an empty mask.
pub fn solidity(mask: &BitMask) -> f64 {
    let hull = convex_hull_area(mask);
    if hull == 0.0 {
        return 0.0;
    }
    (mask.count() as f64 / hull).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_hull_is_its_area() {
        let m = BitMask::from_fn(10, 8, |x, y| (2..7).contains(&x) && (1..4).contains(&y));
        assert_eq!(convex_hull_area(&m), 15.0);
        assert_eq!(solidity(&m), 1.0);
    }

    #[test]
    fn single_pixel() {
        let mut m = BitMask::new(3, 3);
        m.set(1, 1, true);
        assert_eq!(convex_hull_area(&m), 1.0);
    }

    #[test]
    fn l_shape_is_not_solid() {
        // 3x3 L: hull is the square minus the far corner triangle
        let m = BitMask::from_fn(3, 3, |x, y| x == 0 || y == 2);
        assert_eq!(convex_hull_area(&m), 9.0 - 2.0);
        assert!((solidity(&m) - 5.0 / 7.0).abs() < 1e-12);
    }
}
