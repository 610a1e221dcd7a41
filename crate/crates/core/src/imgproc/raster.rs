use crate::error::{Error, Result};

/// Grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, fill: f32) -> Self {
        Self {
            width,
            height,
            data: vec![fill.clamp(0.0, 1.0); width * height],
        }
    }

    /// Wraps `data`, rejecting a length mismatch or any value outside `[0, 1]`.
    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "raster {}x{} needs {} values, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Like [`Raster::from_vec`] but clamps out-of-range values (NaN becomes 0).
    pub fn from_vec_clamped(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::from_vec(width, height, data)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                data.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Stores `v` clamped to `[0, 1]`.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v.clamp(0.0, 1.0);
    }

    pub fn same_size(&self, mask: &BitMask) -> bool {
        self.width == mask.width() && self.height == mask.height()
    }

    /// Copies the `w x h` window at `(x0, y0)`; pixels outside the source take `fill`.
    pub fn crop(&self, x0: isize, y0: isize, w: usize, h: usize, fill: f32) -> Raster {
        Raster::from_fn(w, h, |x, y| {
            let sx = x0 + x as isize;
            let sy = y0 + y as isize;
            if sx < 0 || sy < 0 || sx >= self.width as isize || sy >= self.height as isize {
                fill
            } else {
                self.get(sx as usize, sy as usize)
            }
        })
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Rounds every value to the nearest multiple of 1/255 (the 8-bit storage grid).
    pub fn quantized(&self) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&v| to_u8(v) as f32 / 255.0)
                .collect(),
        }
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_u8(v)).collect()
    }
}

#[inline]
pub(crate) fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary image, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BitMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Shape(format!(
                "mask {}x{} needs {} values, got {}",
                width,
                height,
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Out-of-bounds reads are `false`.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Set pixel coordinates in raster order.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)`, or `None` when empty.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut it = self.iter_set();
        let (fx, fy) = it.next()?;
        let init = (fx, fy, fx, fy);
        Some(it.fold(init, |(x0, y0, x1, y1), (x, y)| {
            (x0.min(x), y0.min(y), x1.max(x), y1.max(y))
        }))
    }

    pub fn and(&self, other: &BitMask) -> BitMask {
        assert_eq!((self.width, self.height), (other.width, other.height));
        BitMask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a && *b)
                .collect(),
        }
    }

    pub fn or(&self, other: &BitMask) -> BitMask {
        assert_eq!((self.width, self.height), (other.width, other.height));
        BitMask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a || *b)
                .collect(),
        }
    }

    pub fn not(&self) -> BitMask {
        BitMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn crop(&self, x0: isize, y0: isize, w: usize, h: usize) -> BitMask {
        BitMask::from_fn(w, h, |x, y| self.get_signed(x0 + x as isize, y0 + y as isize))
    }

    /// Clears every background region not 4-connected to the image border.
    pub fn fill_holes(&self) -> BitMask {
        let (w, h) = (self.width, self.height);
        let mut outside = vec![false; w * h];
        let mut stack = Vec::new();
        for x in 0..w {
            for y in [0, h.saturating_sub(1)] {
                if h > 0 && !self.get(x, y) {
                    stack.push((x, y));
                }
            }
        }
        for y in 0..h {
            for x in [0, w.saturating_sub(1)] {
                if w > 0 && !self.get(x, y) {
                    stack.push((x, y));
                }
            }
        }
        while let Some((x, y)) = stack.pop() {
            let i = y * w + x;
            if outside[i] || self.bits[i] {
                continue;
            }
            outside[i] = true;
            if x > 0 {
                stack.push((x - 1, y));
            }
            if x + 1 < w {
                stack.push((x + 1, y));
            }
            if y > 0 {
                stack.push((x, y - 1));
            }
            if y + 1 < h {
                stack.push((x, y + 1));
            }
        }
        BitMask {
            width: w,
            height: h,
            bits: outside.into_iter().map(|o| !o).collect(),
        }
    }

    /// Rotates by 180 degrees.
    pub fn rotated_180(&self) -> BitMask {
        BitMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().rev().copied().collect(),
        }
    }
}

/// Connected-component labels; 0 is background, regions are `1..=count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub count: u32,
}

impl LabelMap {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Pixel count per label; index 0 holds the background count.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0usize; self.count as usize + 1];
        for &l in &self.labels {
            s[l as usize] += 1;
        }
        s
    }

    pub fn mask_of(&self, label: u32) -> BitMask {
        BitMask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|&l| l == label).collect(),
        }
    }

    /// Label with the most pixels (lowest label wins ties), or `None` if there are none.
    pub fn largest(&self) -> Option<u32> {
        let sizes = self.sizes();
        (1..=self.count)
            .max_by(|&a, &b| sizes[a as usize].cmp(&sizes[b as usize]).then(b.cmp(&a)))
    }
}

/// Real-valued grid without a range restriction (distance maps, density maps).
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Field {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(0.0, f32::max)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_rejects_out_of_range() {
        assert!(Raster::from_vec(2, 1, vec![0.0, 1.5]).is_err());
        assert!(Raster::from_vec(2, 1, vec![0.0]).is_err());
        assert!(Raster::from_vec(2, 1, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn fill_holes_closes_ring() {
        let ring = BitMask::from_fn(5, 5, |x, y| {
            (1..=3).contains(&x) && (1..=3).contains(&y) && !(x == 2 && y == 2)
        });
        let filled = ring.fill_holes();
        assert!(filled.get(2, 2));
        assert_eq!(filled.count(), 9);
    }

    #[test]
    fn bbox_of_empty_is_none() {
        assert!(BitMask::new(3, 3).bbox().is_none());
    }
}
