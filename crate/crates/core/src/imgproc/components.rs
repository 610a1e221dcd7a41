use super::raster::{BitMask, LabelMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub(crate) fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
        const EIGHT: [(isize, isize); 8] = [
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

/// Labels maximal connected regions `1..=n` in raster order of their first pixel.
pub fn connected_components(mask: &BitMask, connectivity: Connectivity) -> LabelMap {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if mask.get_signed(nx, ny) {
                    let j = ny as usize * w + nx as usize;
                    if labels[j] == 0 {
                        labels[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
    }
    LabelMap {
        width: w,
        height: h,
        labels,
        count: next,
    }
}

/// Keeps only the largest 8-connected component (lowest label on ties).
pub fn largest_component(mask: &BitMask) -> BitMask {
    let lm = connected_components(mask, Connectivity::Eight);
    match lm.largest() {
        Some(l) => lm.mask_of(l),
        None => BitMask::new(mask.width(), mask.height()),
    }
}

/// Drops 8-connected components smaller than `min_area` pixels.
pub fn remove_small(mask: &BitMask, min_area: usize) -> BitMask {
    let lm = connected_components(mask, Connectivity::Eight);
    let sizes = lm.sizes();
    BitMask::from_vec(
        mask.width(),
        mask.height(),
        lm.labels
            .iter()
            .map(|&l| l != 0 && sizes[l as usize] >= min_area)
            .collect(),
    )
    .expect("same dimensions")
}
