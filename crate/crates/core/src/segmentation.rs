//! Lesion segmentation: K-means color clustering combined with Otsu
//! thresholding, followed by morphological cleanup.
//!
//! The pipeline in [`lesion_mask`] keeps a pixel as lesion when the darker
//! K-means cluster and the Otsu threshold agree (or either, with the `union`
//! rule), then removes speckle with an open/close pass, keeps the largest
//! 4-connected component, and fills interior holes.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{self, GrayRaster, RgbRaster};

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("segmentation failed for image {image_id}: no lesion region found")]
    Failure { image_id: String },
    #[error(transparent)]
    Imaging(#[from] imaging::ImagingError),
}

/// Binary raster marking lesion pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LesionMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    component_count: usize,
}

impl LesionMask {
    /// Build a mask from row-major booleans; counts 4-connected components.
    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, SegmentationError> {
        if width == 0 || height == 0 {
            return Err(SegmentationError::InvalidArgument(
                "mask dimensions must be at least 1x1".into(),
            ));
        }
        if bits.len() != width * height {
            return Err(SegmentationError::InvalidArgument(format!(
                "bit count {} does not match {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        let component_count = label_components(&bits, width, height).1;
        Ok(Self { width, height, bits, component_count })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn component_count(&self) -> usize {
        self.component_count
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.bits[y * self.width + x]
    }

    /// Number of lesion pixels.
    pub fn area(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Coordinates of all lesion pixels in row-major order.
    pub fn true_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Export as an 8-bit PNG with lesion pixels at 255.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), SegmentationError> {
        let data: Vec<u8> = self.bits.iter().map(|b| if *b { 255 } else { 0 }).collect();
        imaging::save_luma_png(path, self.width, self.height, &data)?;
        Ok(())
    }
}

/// How the K-means dark cluster and the Otsu dark region combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CombineRule {
    /// Pixel is lesion only if both tests agree (conservative).
    #[default]
    Intersect,
    /// Pixel is lesion if either test fires.
    Union,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    pub kmeans_seed: u64,
    pub combine: CombineRule,
    /// Side of the square structuring element for open/close (odd).
    pub morph_element: usize,
    /// Identifier included in failure errors; set per image by callers.
    #[serde(skip)]
    pub image_id: Option<String>,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            kmeans_seed: 7,
            combine: CombineRule::Intersect,
            morph_element: 3,
            image_id: None,
        }
    }
}

/// Result of Lloyd's algorithm.
#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    /// Per-sample index of the assigned (nearest) centroid.
    pub assignments: Vec<usize>,
    /// Sum of squared sample-to-assigned-centroid distances.
    pub inertia: f64,
    /// Inertia after initialization and after every Lloyd iteration;
    /// non-increasing by construction.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_centroid(sample: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(sample, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

/// K-means over `samples` (row-major, `dim` values per sample) with
/// k-means++ seeding and deterministic behavior for a given `seed`.
///
/// Empty clusters are reseeded to the sample farthest from the cluster's
/// former centroid. Iteration stops when assignments stabilize or after
/// `max_iter` passes.
pub fn kmeans(
    samples: &[f64],
    dim: usize,
    k: usize,
    max_iter: usize,
    seed: u64,
) -> Result<KMeansResult, SegmentationError> {
    if dim == 0 {
        return Err(SegmentationError::InvalidArgument("sample dimension must be >= 1".into()));
    }
    if samples.len() % dim != 0 {
        return Err(SegmentationError::InvalidArgument(format!(
            "sample buffer length {} is not a multiple of dim {dim}",
            samples.len()
        )));
    }
    let n = samples.len() / dim;
    if k == 0 {
        return Err(SegmentationError::InvalidArgument("k must be >= 1".into()));
    }
    if n < k {
        return Err(SegmentationError::InvalidArgument(format!(
            "need at least k={k} samples, got {n}"
        )));
    }
    let row = |i: usize| &samples[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(row(rng.gen_range(0..n)).to_vec());
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // all samples coincide with chosen centroids; any index works
            rng.gen_range(0..n)
        };
        centroids.push(row(next).to_vec());
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(row(i), centroids.last().expect("just pushed")));
        }
    }

    let mut assignments = vec![0usize; n];
    let mut inertia_history = Vec::new();

    let assign = |centroids: &[Vec<f64>], assignments: &mut [usize]| -> f64 {
        let mut inertia = 0.0;
        for i in 0..n {
            let (a, d) = nearest_centroid(row(i), centroids);
            assignments[i] = a;
            inertia += d;
        }
        inertia
    };

    // Reseed each empty cluster to the sample farthest from its former
    // centroid, and hand that sample to it. This cannot increase inertia:
    // the reassigned sample's distance drops to zero.
    let fix_empty = |centroids: &mut [Vec<f64>], assignments: &mut [usize]| {
        let mut counts = vec![0usize; k];
        for a in assignments.iter() {
            counts[*a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut far = 0;
            let mut far_d = -1.0;
            for i in 0..n {
                if counts[assignments[i]] <= 1 {
                    continue; // donor cluster must keep at least one sample
                }
                let d = sq_dist(row(i), &centroids[c]);
                if d > far_d {
                    far_d = d;
                    far = i;
                }
            }
            counts[assignments[far]] -= 1;
            counts[c] += 1;
            centroids[c] = row(far).to_vec();
            assignments[far] = c;
        }
    };

    let recompute_inertia = |centroids: &[Vec<f64>], assignments: &[usize]| -> f64 {
        (0..n).map(|i| sq_dist(row(i), &centroids[assignments[i]])).sum()
    };

    assign(&centroids, &mut assignments);
    fix_empty(&mut centroids, &mut assignments);
    inertia_history.push(recompute_inertia(&centroids, &assignments));

    for _ in 0..max_iter {
        // update step: centroid = mean of its samples
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let a = assignments[i];
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in sums[c].iter_mut() {
                    *s /= counts[c] as f64;
                }
                centroids[c] = std::mem::take(&mut sums[c]);
            }
        }

        let mut new_assignments = vec![0usize; n];
        assign(&centroids, &mut new_assignments);
        fix_empty(&mut centroids, &mut new_assignments);
        let inertia = recompute_inertia(&centroids, &new_assignments);
        debug_assert!(
            inertia <= inertia_history.last().expect("non-empty") + 1e-9,
            "inertia increased during Lloyd iteration"
        );
        inertia_history.push(inertia);
        let stable = new_assignments == assignments;
        assignments = new_assignments;
        if stable {
            break;
        }
    }

    let inertia = *inertia_history.last().expect("at least one entry");
    Ok(KMeansResult { centroids, assignments, inertia, inertia_history })
}

/// Otsu threshold over a 256-bin histogram of the gray raster.
///
/// Returns the bin boundary (in `(0, 1)`) that maximizes between-class
/// variance; ties break toward the lower threshold. Rasters whose values all
/// fall in a single bin cannot be split and yield a degenerate-input error.
pub fn threshold_otsu(img: &GrayRaster) -> Result<f64, SegmentationError> {
    let values = img.values();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if lo == hi {
        return Err(SegmentationError::DegenerateInput(
            "constant raster has no threshold".into(),
        ));
    }
    let mut hist = [0u64; 256];
    for v in values {
        let bin = ((v * 256.0) as usize).min(255);
        hist[bin] += 1;
    }
    let total: u64 = values.len() as u64;
    let total_sum: f64 = hist.iter().enumerate().map(|(i, h)| (i as f64) * (*h as f64)).sum();

    let mut best_t: Option<usize> = None;
    let mut best_var = f64::NEG_INFINITY;
    let mut w0: u64 = 0;
    let mut sum0: f64 = 0.0;
    for t in 0..255 {
        w0 += hist[t];
        sum0 += (t as f64) * hist[t] as f64;
        if w0 == 0 {
            continue;
        }
        let w1 = total - w0;
        if w1 == 0 {
            break;
        }
        let mean0 = sum0 / w0 as f64;
        let mean1 = (total_sum - sum0) / w1 as f64;
        let var = (w0 as f64) * (w1 as f64) * (mean0 - mean1) * (mean0 - mean1);
        if var > best_var {
            best_var = var;
            best_t = Some(t);
        }
    }
    match best_t {
        Some(t) => Ok((t as f64 + 1.0) / 256.0),
        None => Err(SegmentationError::DegenerateInput(
            "all values fall into one histogram bin".into(),
        )),
    }
}

/// 4-connected component labeling. Returns per-pixel labels
/// (`usize::MAX` = background) and the component count; labels are assigned
/// in row-major discovery order.
fn label_components(bits: &[bool], width: usize, height: usize) -> (Vec<usize>, usize) {
    let mut labels = vec![usize::MAX; bits.len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..bits.len() {
        if !bits[start] || labels[start] != usize::MAX {
            continue;
        }
        labels[start] = count;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % width, i / width);
            let mut push = |nx: usize, ny: usize| {
                let j = ny * width + nx;
                if bits[j] && labels[j] == usize::MAX {
                    labels[j] = count;
                    stack.push(j);
                }
            };
            if x > 0 {
                push(x - 1, y);
            }
            if x + 1 < width {
                push(x + 1, y);
            }
            if y > 0 {
                push(x, y - 1);
            }
            if y + 1 < height {
                push(x, y + 1);
            }
        }
        count += 1;
    }
    (labels, count)
}

/// Keep only the largest 4-connected component. Ties break toward the
/// component discovered first in row-major order.
pub fn largest_component(mask: &LesionMask) -> Result<LesionMask, SegmentationError> {
    let (labels, count) = label_components(&mask.bits, mask.width, mask.height);
    if count == 0 {
        return Err(SegmentationError::Failure {
            image_id: "<unnamed>".into(),
        });
    }
    let mut areas = vec![0usize; count];
    for l in labels.iter().filter(|l| **l != usize::MAX) {
        areas[*l] += 1;
    }
    // max_by_key keeps the last maximum, so scan manually for the first
    let mut best = 0;
    for (i, a) in areas.iter().enumerate() {
        if *a > areas[best] {
            best = i;
        }
    }
    let bits: Vec<bool> = labels.iter().map(|l| *l == best).collect();
    Ok(LesionMask { width: mask.width, height: mask.height, bits, component_count: 1 })
}

fn check_element(element: usize) -> Result<(), SegmentationError> {
    if element == 0 || element % 2 == 0 {
        return Err(SegmentationError::InvalidArgument(format!(
            "structuring element must be odd and >= 1, got {element}"
        )));
    }
    Ok(())
}

fn morph(mask: &LesionMask, element: usize, require_all: bool) -> Vec<bool> {
    let half = (element / 2) as isize;
    let (w, h) = (mask.width as isize, mask.height as isize);
    let mut out = vec![false; mask.bits.len()];
    for y in 0..h {
        for x in 0..w {
            let mut all = true;
            let mut any = false;
            for dy in -half..=half {
                let sy = y + dy;
                if sy < 0 || sy >= h {
                    continue; // window clipped at the border
                }
                for dx in -half..=half {
                    let sx = x + dx;
                    if sx < 0 || sx >= w {
                        continue;
                    }
                    if mask.bits[(sy * w + sx) as usize] {
                        any = true;
                    } else {
                        all = false;
                    }
                }
            }
            out[(y * w + x) as usize] = if require_all { all } else { any };
        }
    }
    out
}

/// Erosion with a square element; the window is clipped at raster borders.
pub fn erode(mask: &LesionMask, element: usize) -> Result<LesionMask, SegmentationError> {
    check_element(element)?;
    let bits = morph(mask, element, true);
    LesionMask::from_bits(mask.width, mask.height, bits)
}

/// Dilation with a square element; the window is clipped at raster borders.
pub fn dilate(mask: &LesionMask, element: usize) -> Result<LesionMask, SegmentationError> {
    check_element(element)?;
    let bits = morph(mask, element, false);
    LesionMask::from_bits(mask.width, mask.height, bits)
}

/// Morphological opening (erode, then dilate). Idempotent.
pub fn open(mask: &LesionMask, element: usize) -> Result<LesionMask, SegmentationError> {
    dilate(&erode(mask, element)?, element)
}

/// Morphological closing (dilate, then erode). Idempotent.
pub fn close(mask: &LesionMask, element: usize) -> Result<LesionMask, SegmentationError> {
    erode(&dilate(mask, element)?, element)
}

/// Fill holes: background regions not 4-connected to the raster border
/// become lesion.
pub fn fill_holes(mask: &LesionMask) -> LesionMask {
    let (w, h) = (mask.width, mask.height);
    let mut outside = vec![false; mask.bits.len()];
    let mut stack = Vec::new();
    let seed = |i: usize, outside: &mut Vec<bool>, stack: &mut Vec<usize>| {
        if !mask.bits[i] && !outside[i] {
            outside[i] = true;
            stack.push(i);
        }
    };
    for x in 0..w {
        seed(x, &mut outside, &mut stack);
        seed((h - 1) * w + x, &mut outside, &mut stack);
    }
    for y in 0..h {
        seed(y * w, &mut outside, &mut stack);
        seed(y * w + w - 1, &mut outside, &mut stack);
    }
    while let Some(i) = stack.pop() {
        let (x, y) = (i % w, i / w);
        let mut push = |nx: usize, ny: usize| {
            let j = ny * w + nx;
            if !mask.bits[j] && !outside[j] {
                outside[j] = true;
                stack.push(j);
            }
        };
        if x > 0 {
            push(x - 1, y);
        }
        if x + 1 < w {
            push(x + 1, y);
        }
        if y > 0 {
            push(x, y - 1);
        }
        if y + 1 < h {
            push(x, y + 1);
        }
    }
    let bits: Vec<bool> = mask
        .bits
        .iter()
        .zip(&outside)
        .map(|(b, o)| *b || !o)
        .collect();
    let component_count = label_components(&bits, w, h).1;
    LesionMask { width: w, height: h, bits, component_count }
}

fn centroid_luminance(c: &[f64]) -> f64 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

/// Segment the lesion from a preprocessed (resized, median-filtered) image.
///
/// Pipeline: K-means (k=2) on RGB picks the darker cluster; the Otsu
/// threshold on luminance marks dark pixels; the two combine per
/// [`CombineRule`]; open/close removes speckle; the largest 4-connected
/// component is kept and its holes filled. The result has exactly one
/// non-empty connected component.
pub fn lesion_mask(img: &RgbRaster, cfg: &SegmentationConfig) -> Result<LesionMask, SegmentationError> {
    check_element(cfg.morph_element)?;
    let image_id = || cfg.image_id.clone().unwrap_or_else(|| "<unnamed>".into());
    let fail = |_: SegmentationError| SegmentationError::Failure { image_id: image_id() };

    let samples: Vec<f64> = img
        .pixels()
        .iter()
        .flat_map(|p| p.iter().map(|c| *c as f64))
        .collect();
    let km = kmeans(&samples, 3, 2, 50, cfg.kmeans_seed)?;
    let dark_cluster = if centroid_luminance(&km.centroids[0]) <= centroid_luminance(&km.centroids[1]) {
        0
    } else {
        1
    };

    let gray = imaging::to_gray(img);
    let threshold = threshold_otsu(&gray).map_err(fail)?;

    let bits: Vec<bool> = km
        .assignments
        .iter()
        .zip(gray.values())
        .map(|(a, v)| {
            let from_kmeans = *a == dark_cluster;
            let from_threshold = *v < threshold;
            match cfg.combine {
                CombineRule::Intersect => from_kmeans && from_threshold,
                CombineRule::Union => from_kmeans || from_threshold,
            }
        })
        .collect();
    let candidate = LesionMask::from_bits(img.width(), img.height(), bits)?;

    let cleaned = close(&open(&candidate, cfg.morph_element)?, cfg.morph_element)?;
    let largest = largest_component(&cleaned).map_err(fail)?;
    Ok(fill_holes(&largest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from_str(rows: &[&str]) -> LesionMask {
        let height = rows.len();
        let width = rows[0].len();
        let bits = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c == '#'))
            .collect();
        LesionMask::from_bits(width, height, bits).unwrap()
    }

    #[test]
    fn kmeans_two_point_masses() {
        let samples = [0.0, 0.0, 0.0, 10.0, 10.0, 10.0];
        let r = kmeans(&samples, 1, 2, 50, 3).unwrap();
        let mut cs: Vec<f64> = r.centroids.iter().map(|c| c[0]).collect();
        cs.sort_by(f64::total_cmp);
        assert_eq!(cs, vec![0.0, 10.0]);
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn kmeans_k1_gives_mean() {
        let samples = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 3 samples, dim 2
        let r = kmeans(&samples, 2, 1, 50, 9).unwrap();
        assert!((r.centroids[0][0] - 3.0).abs() < 1e-12);
        assert!((r.centroids[0][1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn kmeans_rejects_too_few_samples() {
        let samples = [1.0, 2.0];
        assert!(matches!(
            kmeans(&samples, 1, 3, 10, 0),
            Err(SegmentationError::InvalidArgument(_))
        ));
    }

    #[test]
    fn kmeans_separated_blobs_recovers_means() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(42);
        let mut samples = Vec::new();
        for _ in 0..20 {
            samples.push(rand::Rng::gen::<f64>(&mut rng) * 0.5);
            samples.push(rand::Rng::gen::<f64>(&mut rng) * 0.5);
        }
        for _ in 0..20 {
            samples.push(10.0 + rand::Rng::gen::<f64>(&mut rng) * 0.5);
            samples.push(10.0 + rand::Rng::gen::<f64>(&mut rng) * 0.5);
        }
        let r = kmeans(&samples, 2, 2, 100, 1).unwrap();
        let mut found_low = false;
        let mut found_high = false;
        for c in &r.centroids {
            if (c[0] - 0.25).abs() < 0.5 && (c[1] - 0.25).abs() < 0.5 {
                found_low = true;
            }
            if (c[0] - 10.25).abs() < 0.5 && (c[1] - 10.25).abs() < 0.5 {
                found_high = true;
            }
        }
        assert!(found_low && found_high, "centroids {:?}", r.centroids);
        // nearest-centroid consistency at termination
        for i in 0..40 {
            let s = [samples[2 * i], samples[2 * i + 1]];
            let (a, _) = nearest_centroid(&s, &r.centroids);
            assert_eq!(a, r.assignments[i]);
        }
    }

    #[test]
    fn kmeans_inertia_history_non_increasing() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        let samples: Vec<f64> = (0..600).map(|_| rand::Rng::gen::<f64>(&mut rng)).collect();
        for seed in 0..10 {
            let r = kmeans(&samples, 3, 4, 60, seed).unwrap();
            for w in r.inertia_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "history {:?}", r.inertia_history);
            }
        }
    }

    #[test]
    fn kmeans_deterministic_for_seed() {
        let samples: Vec<f64> = (0..90).map(|i| (i * 37 % 17) as f64).collect();
        let a = kmeans(&samples, 3, 3, 50, 77).unwrap();
        let b = kmeans(&samples, 3, 3, 50, 77).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.centroids, b.centroids);
        assert_eq!(a.inertia.to_bits(), b.inertia.to_bits());
    }

    #[test]
    fn otsu_separates_two_levels() {
        let mut values = vec![0.1; 50];
        values.extend(vec![0.9; 50]);
        let img = GrayRaster::new(10, 10, values).unwrap();
        let t = threshold_otsu(&img).unwrap();
        assert!(t > 0.1 && t < 0.9, "threshold {t}");
    }

    #[test]
    fn otsu_rejects_constant_raster() {
        let img = GrayRaster::new(4, 4, vec![0.5; 16]).unwrap();
        assert!(matches!(
            threshold_otsu(&img),
            Err(SegmentationError::DegenerateInput(_))
        ));
    }

    /// Exhaustive scan over all 256 split points as an independent oracle.
    fn otsu_oracle(values: &[f64]) -> usize {
        let mut hist = [0u64; 256];
        for v in values {
            hist[((v * 256.0) as usize).min(255)] += 1;
        }
        let n = values.len() as f64;
        let mut best_t = 0;
        let mut best = f64::NEG_INFINITY;
        for t in 0..255usize {
            let w0: u64 = hist[..=t].iter().sum();
            let w1: u64 = hist[t + 1..].iter().sum();
            if w0 == 0 || w1 == 0 {
                continue;
            }
            let m0: f64 = hist[..=t].iter().enumerate().map(|(i, h)| i as f64 * *h as f64).sum::<f64>() / w0 as f64;
            let m1: f64 = hist[t + 1..]
                .iter()
                .enumerate()
                .map(|(i, h)| (i + t + 1) as f64 * *h as f64)
                .sum::<f64>()
                / w1 as f64;
            let var = (w0 as f64 / n) * (w1 as f64 / n) * (m0 - m1) * (m0 - m1);
            if var > best {
                best = var;
                best_t = t;
            }
        }
        best_t
    }

    #[test]
    fn otsu_matches_exhaustive_oracle_on_bimodal_data() {
        use rand::Rng;
        use rand_distr::Normal;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(31);
        let lo = Normal::new(0.2, 0.05).unwrap();
        let hi = Normal::new(0.8, 0.05).unwrap();
        let values: Vec<f64> = (0..10_000)
            .map(|i| {
                let d = if i % 2 == 0 { lo } else { hi };
                rng.sample::<f64, _>(d).clamp(0.0, 1.0)
            })
            .collect();
        let img = GrayRaster::new(100, 100, values.clone()).unwrap();
        let t = threshold_otsu(&img).unwrap();
        assert!((t - 0.5).abs() < 0.1, "threshold {t}");
        let oracle_bin = otsu_oracle(&values);
        assert_eq!(t, (oracle_bin as f64 + 1.0) / 256.0);
    }

    #[test]
    fn largest_component_keeps_bigger_blob() {
        let mask = mask_from_str(&[
            "##....####",
            "##....####",
            "......##..",
            "..........",
        ]);
        let out = largest_component(&mask).unwrap();
        assert_eq!(out.area(), 10);
        assert!(!out.get(0, 0));
        assert!(out.get(6, 0));
        assert_eq!(out.component_count(), 1);
    }

    #[test]
    fn largest_component_single_blob_unchanged() {
        let mask = mask_from_str(&["..##", "..##"]);
        let out = largest_component(&mask).unwrap();
        assert_eq!(out.bits(), mask.bits());
    }

    #[test]
    fn largest_component_tie_breaks_row_major() {
        let mask = mask_from_str(&["##..##", "......"]);
        let out = largest_component(&mask).unwrap();
        assert!(out.get(0, 0) && out.get(1, 0));
        assert!(!out.get(4, 0));
    }

    #[test]
    fn largest_component_rejects_empty_mask() {
        let mask = mask_from_str(&["....", "...."]);
        assert!(matches!(
            largest_component(&mask),
            Err(SegmentationError::Failure { .. })
        ));
    }

    /// Independent flood-fill labeling used as an oracle for the max-area
    /// component choice.
    fn flood_fill_max_area(mask: &LesionMask) -> usize {
        let mut seen = vec![false; mask.bits().len()];
        let mut best = 0;
        for i in 0..mask.bits().len() {
            if !mask.bits()[i] || seen[i] {
                continue;
            }
            let mut area = 0;
            let mut queue = std::collections::VecDeque::from([i]);
            seen[i] = true;
            while let Some(j) = queue.pop_front() {
                area += 1;
                let (x, y) = (j % mask.width(), j / mask.width());
                for (nx, ny) in [
                    (x.wrapping_sub(1), y),
                    (x + 1, y),
                    (x, y.wrapping_sub(1)),
                    (x, y + 1),
                ] {
                    if nx < mask.width() && ny < mask.height() {
                        let idx = ny * mask.width() + nx;
                        if mask.bits()[idx] && !seen[idx] {
                            seen[idx] = true;
                            queue.push_back(idx);
                        }
                    }
                }
            }
            best = best.max(area);
        }
        best
    }

    #[test]
    fn largest_component_matches_flood_fill_oracle() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(99);
        for _ in 0..20 {
            let bits: Vec<bool> = (0..24 * 24).map(|_| rand::Rng::gen_bool(&mut rng, 0.45)).collect();
            if !bits.iter().any(|b| *b) {
                continue;
            }
            let mask = LesionMask::from_bits(24, 24, bits).unwrap();
            let out = largest_component(&mask).unwrap();
            assert_eq!(out.area(), flood_fill_max_area(&mask));
        }
    }

    #[test]
    fn open_close_are_idempotent() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(17);
        for _ in 0..10 {
            let bits: Vec<bool> = (0..20 * 20).map(|_| rand::Rng::gen_bool(&mut rng, 0.5)).collect();
            let mask = LesionMask::from_bits(20, 20, bits).unwrap();
            let o1 = open(&mask, 3).unwrap();
            let o2 = open(&o1, 3).unwrap();
            assert_eq!(o1.bits(), o2.bits(), "opening not idempotent");
            let c1 = close(&mask, 3).unwrap();
            let c2 = close(&c1, 3).unwrap();
            assert_eq!(c1.bits(), c2.bits(), "closing not idempotent");
        }
    }

    #[test]
    fn fill_holes_fills_interior_only() {
        let mask = mask_from_str(&[
            "#####",
            "#...#",
            "#.#.#",
            "#...#",
            "#####",
        ]);
        let filled = fill_holes(&mask);
        assert_eq!(filled.area(), 25);
        // a bay open to the border is not a hole
        let bay = mask_from_str(&[
            "###.#",
            "#...#",
            "#####",
        ]);
        let filled = fill_holes(&bay);
        assert!(!filled.get(3, 0), "open bay must stay background");
    }

    fn disk_image(size: usize, r: f64, lesion: [u8; 3], background: [u8; 3]) -> RgbRaster {
        let c = size as f64 / 2.0;
        RgbRaster::from_fn(size, size, |x, y| {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            if dx * dx + dy * dy <= r * r {
                lesion
            } else {
                background
            }
        })
    }

    #[test]
    fn lesion_mask_recovers_dark_disk() {
        let size = 240;
        let img = disk_image(size, 100.0, [60, 40, 30], [200, 170, 150]);
        let mask = lesion_mask(&img, &SegmentationConfig::default()).unwrap();
        let mut disagree = 0;
        let c = size as f64 / 2.0;
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = (x as f64 - c, y as f64 - c);
                let inside = dx * dx + dy * dy <= 100.0 * 100.0;
                if inside != mask.get(x, y) {
                    disagree += 1;
                }
            }
        }
        assert!(
            (disagree as f64) < 0.02 * (size * size) as f64,
            "{disagree} pixels disagree"
        );
        assert_eq!(mask.component_count(), 1);
    }

    #[test]
    fn lesion_mask_fails_on_uniform_raster() {
        let img = RgbRaster::filled(64, 64, [120, 120, 120]);
        let cfg = SegmentationConfig {
            image_id: Some("uniform.ppm".into()),
            ..SegmentationConfig::default()
        };
        match lesion_mask(&img, &cfg) {
            Err(SegmentationError::Failure { image_id }) => assert_eq!(image_id, "uniform.ppm"),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn lesion_mask_removes_speckle() {
        let size = 200;
        let mut img = disk_image(size, 70.0, [60, 40, 30], [200, 170, 150]);
        // scatter isolated dark pixels away from the disk
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(8);
        let mut placed = 0;
        while placed < 50 {
            let x = rand::Rng::gen_range(&mut rng, 0..size);
            let y = rand::Rng::gen_range(&mut rng, 0..size);
            let c = size as f64 / 2.0;
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            if dx * dx + dy * dy > 95.0 * 95.0 {
                img.set(x, y, [50, 35, 25]);
                placed += 1;
            }
        }
        let mask = lesion_mask(&img, &SegmentationConfig::default()).unwrap();
        assert_eq!(mask.component_count(), 1);
        // every mask pixel should be inside (or hugging) the disk
        let c = size as f64 / 2.0;
        for (x, y) in mask.true_pixels() {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            assert!(
                (dx * dx + dy * dy).sqrt() <= 74.0,
                "speckle survived at ({x},{y})"
            );
        }
    }

    #[test]
    fn lesion_mask_invariant_under_cluster_relabeling() {
        // different k-means seeds can swap cluster indices; the darker-cluster
        // rule must keep the output stable
        let img = disk_image(160, 55.0, [70, 45, 35], [195, 165, 150]);
        let base = lesion_mask(&img, &SegmentationConfig::default()).unwrap();
        for seed in [1u64, 2, 3, 4] {
            let cfg = SegmentationConfig { kmeans_seed: seed, ..Default::default() };
            let other = lesion_mask(&img, &cfg).unwrap();
            assert_eq!(base.bits(), other.bits(), "seed {seed} changed the mask");
        }
    }
}
