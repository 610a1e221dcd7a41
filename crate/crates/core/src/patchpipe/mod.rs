//! Patch extraction from bubbly-flow images: segmentation, single/cluster voting,
//! and normalization of single-bubble patches into training records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{
    central_moments, connected_components, distance_transform, endpoints, largest_component,
    prune_spurs, resize_bilinear, skeletonize, threshold_adaptive, threshold_otsu,
    watershed_count, BitMask, Connectivity, Raster,
};
use crate::record::BubbleRecord;

mod hull;

pub use hull::{convex_hull_area, solidity};

/// Tunables of the pipeline. None of them come with a canonical value; the defaults
/// were calibrated on rendered fixtures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Smallest object area, px.
    pub a_min: usize,
    /// Padding around each segmented object, px.
    pub padding: usize,
    /// Side of the blocks used to estimate the background level, px.
    pub background_block: usize,
    /// Percentile of each block taken as its background level.
    pub background_percentile: f64,
    /// A pixel is foreground when it is this much darker than the local background.
    pub foreground_offset: f32,
    /// Watershed suppression depth as a fraction of the distance-map maximum.
    pub watershed_h: f32,
    /// Spurs shorter than this multiple of `sqrt(A)` are pruned before counting endpoints.
    pub spur_fraction: f64,
    /// Offset of the adaptive threshold used by the core counter.
    pub adaptive_offset: f32,
    pub min_solidity: f64,
    /// Largest accepted object area as a fraction of the padded patch area.
    pub max_area_fraction: f64,
    /// Side of normalized records, px.
    pub record_side: usize,
    /// Crop margin on each side as a fraction of the larger bounding-box side.
    pub margin: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            a_min: 30,
            padding: 4,
            background_block: 96,
            background_percentile: 0.9,
            foreground_offset: 0.08,
            watershed_h: 0.15,
            spur_fraction: 0.3,
            adaptive_offset: 0.05,
            min_solidity: 0.85,
            max_area_fraction: 0.8,
            record_side: 64,
            margin: 0.1,
        }
    }
}

/// A cut-out around one segmented object.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub image: Raster,
    pub mask: BitMask,
    /// Top-left corner of the cut-out in the source image.
    pub origin: (usize, usize),
}

/// Combined count of the three counters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Count {
    Bubbles(usize),
    /// The three counters disagree pairwise.
    Cluster,
    /// The vote said one bubble but the quality filters did not.
    Rejected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchVerdict {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub n: Count,
}

impl PatchVerdict {
    pub fn is_single(&self) -> bool {
        self.n == Count::Bubbles(1)
    }
}

/// Per-block background level, bilinearly interpolated between block centres.
fn background_map(img: &Raster, block: usize, pct: f64) -> Vec<f32> {
    let (w, h) = (img.width(), img.height());
    let block = block.max(8);
    let (bw, bh) = (w.div_ceil(block), h.div_ceil(block));
    let mut levels = vec![0f32; bw * bh];
    let mut buf = Vec::with_capacity(block * block);
    for by in 0..bh {
        for bx in 0..bw {
            buf.clear();
            for y in by * block..((by + 1) * block).min(h) {
                for x in bx * block..((bx + 1) * block).min(w) {
                    buf.push(img.get(x, y));
                }
            }
            buf.sort_by(f32::total_cmp);
            let k = ((buf.len() - 1) as f64 * pct).round() as usize;
            levels[by * bw + bx] = buf[k];
        }
    }
    let axis = |i: usize, n: usize| -> (usize, usize, f32) {
        // block centres sit at (j + 0.5) * block, clipped to the image
        let c = ((i as f64 + 0.5) / block as f64 - 0.5).clamp(0.0, (n - 1) as f64);
        let j0 = c.floor() as usize;
        let j1 = (j0 + 1).min(n - 1);
        (j0, j1, (c - j0 as f64) as f32)
    };
    let mut out = vec![0f32; w * h];
    for y in 0..h {
        let (y0, y1, fy) = axis(y, bh);
        for x in 0..w {
            let (x0, x1, fx) = axis(x, bw);
            let top = levels[y0 * bw + x0] * (1.0 - fx) + levels[y0 * bw + x1] * fx;
            let bot = levels[y1 * bw + x0] * (1.0 - fx) + levels[y1 * bw + x1] * fx;
            out[y * w + x] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}

/// Background-subtracted foreground of a whole image, holes filled.
pub fn foreground(img: &Raster, cfg: &PipelineConfig) -> BitMask {
    let bg = background_map(img, cfg.background_block, cfg.background_percentile);
    let w = img.width();
    BitMask::from_fn(w, img.height(), |x, y| {
        img.get(x, y) < bg[y * w + x] - cfg.foreground_offset
    })
    .fill_holes()
}

/// Cuts every sufficiently large foreground object out of `img`.
pub fn segment_patches(img: &Raster, cfg: &PipelineConfig) -> Vec<Patch> {
    if img.width() == 0 || img.height() == 0 {
        return Vec::new();
    }
    let fg = foreground(img, cfg);
    let labels = connected_components(&fg, Connectivity::Eight);
    let sizes = labels.sizes();
    let mut patches = Vec::new();
    for label in 1..=labels.count {
        if sizes[label as usize] < cfg.a_min {
            continue;
        }
        let obj = labels.mask_of(label);
        let (bx0, by0, bx1, by1) = obj.bbox().expect("non-empty component");
        let pad = cfg.padding;
        let x0 = bx0.saturating_sub(pad);
        let y0 = by0.saturating_sub(pad);
        let x1 = (bx1 + pad + 1).min(img.width());
        let y1 = (by1 + pad + 1).min(img.height());
        let (w, h) = (x1 - x0, y1 - y0);
        patches.push(Patch {
            image: img.crop(x0 as isize, y0 as isize, w, h, 0.0),
            mask: obj.crop(x0 as isize, y0 as isize, w, h),
            origin: (x0, y0),
        });
    }
    patches
}

/// Watershed basin count of the patch mask; basins smaller than `a_min` do not count.
pub fn count_watershed(p: &Patch, cfg: &PipelineConfig) -> usize {
    let dist = distance_transform(&p.mask);
    let ws = watershed_count(&dist, &p.mask, cfg.watershed_h * dist.max());
    let n = ws.labels.sizes()[1..]
        .iter()
        .filter(|&&s| s >= cfg.a_min)
        .count();
    n.max(1)
}

/// Skeleton count: the larger of `ceil(e / 2)` for `e` endpoints of the pruned mask
/// skeleton and the number of loops in the skeleton of the dark rim. Endpoints catch
/// elongated unions; rim loops catch a neighbour whose rim crosses the core.
pub fn count_skeleton(p: &Patch, cfg: &PipelineConfig) -> usize {
    let area = p.mask.count() as f64;
    let skel = skeletonize(&p.mask);
    let min_len = (cfg.spur_fraction * area.sqrt()).ceil() as usize;
    let pruned = prune_spurs(&skel, min_len.max(1));
    let by_ends = endpoints(&pruned).len().div_ceil(2);
    by_ends.max(rim_loops(p, cfg.a_min)).max(1)
}

fn rim_loops(p: &Patch, min_area: usize) -> usize {
    let Ok(otsu) = threshold_otsu(&p.image, Some(&p.mask)) else {
        return 0;
    };
    if otsu.degenerate {
        return 0;
    }
    let rim = BitMask::from_fn(p.mask.width(), p.mask.height(), |x, y| {
        p.mask.get(x, y) && p.image.get(x, y) < otsu.threshold
    });
    let rim_skel = skeletonize(&largest_component(&rim));
    enclosed_regions(&p.mask, &p.mask.and(&rim_skel.not()), min_area)
}

/// Number of bright cores: foreground pixels that are not locally dark and do not
/// reach the mask edge. Each backlit bubble contributes one core ringed by its dark
/// rim; a rim crossing a neighbour's core splits the union into several.
pub fn count_adaptive(p: &Patch, cfg: &PipelineConfig) -> usize {
    let (w, h) = (p.image.width(), p.image.height());
    let mut window = w.min(h).div_ceil(2).max(3);
    if window % 2 == 0 {
        window += 1;
    }
    let Ok(dark) = threshold_adaptive(&p.image, window, cfg.adaptive_offset) else {
        return 1;
    };
    enclosed_regions(&p.mask, &p.mask.and(&dark.not()), cfg.a_min).max(1)
}

/// 4-connected pieces of `region` with at least `min_area` pixels and no pixel
/// 8-adjacent to the outside of `mask`.
fn enclosed_regions(mask: &BitMask, region: &BitMask, min_area: usize) -> usize {
    let labels = connected_components(region, Connectivity::Four);
    let sizes = labels.sizes();
    let mut open = vec![false; sizes.len()];
    for (x, y) in region.iter_set() {
        let (xi, yi) = (x as isize, y as isize);
        let edge = (-1..=1).any(|dy| (-1..=1).any(|dx| !mask.get_signed(xi + dx, yi + dy)));
        if edge {
            open[labels.get(x, y) as usize] = true;
        }
    }
    (1..sizes.len())
        .filter(|&i| !open[i] && sizes[i] >= min_area)
        .count()
}

/// The value shared by at least two of the counts, if any.
pub fn modal_vote(n1: usize, n2: usize, n3: usize) -> Option<usize> {
    if n1 == n2 || n1 == n3 {
        Some(n1)
    } else if n2 == n3 {
        Some(n2)
    } else {
        None
    }
}

/// Side of the square crop around an object whose larger bounding-box side is `span`.
pub fn crop_side(span: usize, margin: f64) -> usize {
    let span = span as f64;
    (span + 2.0 * (margin * span).round()).round() as usize
}

/// Modal vote of the three counters followed by the quality filters.
pub fn classify(p: &Patch, cfg: &PipelineConfig) -> PatchVerdict {
    let (n1, n2, n3) = (
        count_watershed(p, cfg),
        count_skeleton(p, cfg),
        count_adaptive(p, cfg),
    );
    let mode = modal_vote(n1, n2, n3);
    let n = match mode {
        None => Count::Cluster,
        Some(1) if !passes_filters(p, cfg) => Count::Rejected,
        Some(k) => Count::Bubbles(k),
    };
    PatchVerdict { n1, n2, n3, n }
}

fn passes_filters(p: &Patch, cfg: &PipelineConfig) -> bool {
    let main = crate::imgproc::largest_component(&p.mask);
    let area = main.count();
    let patch_area = (p.mask.width() * p.mask.height()) as f64;
    area >= cfg.a_min
        && area as f64 <= cfg.max_area_fraction * patch_area
        && solidity(&main) >= cfg.min_solidity
}

fn median(mut v: Vec<f32>) -> f32 {
    v.sort_by(f32::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn border_median(img: &Raster) -> f32 {
    let (w, h) = (img.width(), img.height());
    let mut v = Vec::with_capacity(2 * (w + h));
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                v.push(img.get(x, y));
            }
        }
    }
    median(v)
}

/// Square, centred, background-cleaned crop of the patch's main object, resized to
/// `side x side`, with the background brought to 0.9 and features recomputed.
pub fn normalize_patch(p: &Patch, side: usize) -> Result<BubbleRecord> {
    normalize_patch_with(p, side, PipelineConfig::default().margin)
}

pub fn normalize_patch_with(p: &Patch, side: usize, margin: f64) -> Result<BubbleRecord> {
    if p.mask.is_empty() {
        return Err(Error::DegenerateMask("patch mask is empty".into()));
    }
    if !p.image.same_size(&p.mask) {
        return Err(Error::Shape("patch image and mask differ in size".into()));
    }
    if side < 8 {
        return Err(Error::invalid(format!("record side must be at least 8, got {side}")));
    }
    let main = crate::imgproc::largest_component(&p.mask);
    let bg = border_median(&p.image);

    // everything dark that is not connected to the main object is painted over
    let seg_t = crate::features::segment_bubble(&p.image)
        .map(|s| s.threshold)
        .unwrap_or(bg);
    let dark = BitMask::from_fn(p.image.width(), p.image.height(), |x, y| {
        p.image.get(x, y) < seg_t
    })
    .or(&p.mask);
    let labels = connected_components(&dark, Connectivity::Eight);
    let keep: Vec<bool> = {
        let mut k = vec![false; labels.count as usize + 1];
        for (x, y) in main.iter_set() {
            k[labels.get(x, y) as usize] = true;
        }
        k
    };
    let mut clean = p.image.clone();
    for y in 0..clean.height() {
        for x in 0..clean.width() {
            let l = labels.get(x, y) as usize;
            if l != 0 && !keep[l] {
                clean.set(x, y, bg);
            }
        }
    }

    let mom = central_moments(&main)?;
    let (bx0, by0, bx1, by1) = main.bbox().expect("non-empty");
    let crop = crop_side((bx1 - bx0 + 1).max(by1 - by0 + 1), margin);
    let x0 = (mom.cx + 0.5 - crop as f64 / 2.0).round() as isize;
    let y0 = (mom.cy + 0.5 - crop as f64 / 2.0).round() as isize;
    let square = clean.crop(x0, y0, crop, crop, bg);
    let resized = resize_bilinear(&square, side, side)?;
    let level = border_median(&resized);
    if level <= 0.0 {
        return Err(Error::DegenerateMask("patch background is black".into()));
    }
    let gain = 0.9 / level;
    let mapped = Raster::from_fn(side, side, |x, y| resized.get(x, y) * gain);
    BubbleRecord::from_patch(&mapped, false)
}

/// Segments, classifies and normalizes every single-bubble patch of every image, in
/// input order.
pub fn build_training_set(images: &[Raster], cfg: &PipelineConfig) -> Vec<BubbleRecord> {
    let mut out = Vec::new();
    for (i, img) in images.iter().enumerate() {
        for p in segment_patches(img, cfg) {
            if !classify(&p, cfg).is_single() {
                continue;
            }
            match normalize_patch_with(&p, cfg.record_side, cfg.margin) {
                Ok(rec) => out.push(rec),
                Err(e) => log::debug!("image {i}: patch at {:?} dropped: {e}", p.origin),
            }
        }
    }
    out
}
