//! ABCD-derived lesion features.
//!
//! Thirteen real-valued features are computed per segmented lesion, in the
//! fixed order of [`FEATURE_NAMES`]: equivalent-circle diameter, sphericity,
//! irregularity index, asymmetry, edge uniformity, per-channel color
//! variances and ratios, brightness difference, and a count of the classic
//! reference colors present.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{self, GrayRaster, RgbRaster};
use crate::segmentation::LesionMask;

pub const FEATURE_COUNT: usize = 13;

/// Canonical feature order; also the feature CSV column order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "diameter",
    "sphericity",
    "irregularity",
    "asymmetry",
    "edge_uniformity",
    "var_r",
    "var_g",
    "var_b",
    "ratio_r",
    "ratio_g",
    "ratio_b",
    "brightness_diff",
    "color_count",
];

/// Reference colors for the color-count feature.
pub const REFERENCE_COLORS: [(&str, [u8; 3]); 6] = [
    ("white", [255, 255, 255]),
    ("red", [204, 51, 51]),
    ("light_brown", [181, 134, 84]),
    ("dark_brown", [91, 60, 17]),
    ("blue_gray", [90, 110, 140]),
    ("black", [30, 30, 30]),
];
/// Fraction of lesion pixels a reference color must cover to count.
pub const COLOR_COVERAGE: f64 = 0.05;
/// Euclidean RGB distance within which a pixel matches a reference color.
pub const COLOR_DISTANCE: f64 = 60.0;

/// Weight of a diagonal step when measuring traced boundary length.
///
/// Calibrated so the traced chain of a digitized circle converges to the
/// true circumference: per octant a digital circle uses sqrt(2)-1 axial and
/// 1-1/sqrt(2) diagonal steps per radius unit, so this weight makes the
/// total come out at pi/4 per octant. The naive sqrt(2) weight overshoots
/// circle perimeters by ~5%, which would bias sphericity down to ~0.90 for
/// ideal disks.
pub fn diagonal_step_weight() -> f64 {
    use std::f64::consts::{FRAC_PI_4, SQRT_2};
    (FRAC_PI_4 - (SQRT_2 - 1.0)) / (1.0 - 1.0 / SQRT_2)
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid class code {0} (expected 1 or 2)")]
    InvalidClassCode(u8),
}

/// Diagnosis label: code 1 = normal mole, code 2 = melanoma.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    NormalMole,
    Melanoma,
}

impl ClassLabel {
    pub fn code(self) -> u8 {
        match self {
            ClassLabel::NormalMole => 1,
            ClassLabel::Melanoma => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, FeatureError> {
        match code {
            1 => Ok(ClassLabel::NormalMole),
            2 => Ok(ClassLabel::Melanoma),
            other => Err(FeatureError::InvalidClassCode(other)),
        }
    }

    /// Regression target used by the classifier: 0 for normal, 1 for melanoma.
    pub fn target(self) -> f64 {
        match self {
            ClassLabel::NormalMole => 0.0,
            ClassLabel::Melanoma => 1.0,
        }
    }
}

/// One row of the feature table: 13 values plus an optional class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_COUNT],
    pub label: Option<ClassLabel>,
}

impl FeatureVector {
    pub fn new(values: [f64; FEATURE_COUNT], label: Option<ClassLabel>) -> Result<Self, FeatureError> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(FeatureError::InvalidArgument(format!("non-finite feature value {v}")));
        }
        Ok(Self { values, label })
    }
}

/// Shared geometric measurements of a lesion mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskGeometry {
    /// Lesion pixel count.
    pub area: usize,
    /// Traced boundary length (axial steps 1, diagonal steps weighted).
    pub perimeter: f64,
    /// Mean of lesion pixel coordinates, (x, y).
    pub centroid: (f64, f64),
    /// Orientation of the principal axis, in [-pi/2, pi/2).
    pub principal_axis_angle: f64,
}

/// Trace the outer boundary of the component containing the first lesion
/// pixel (Moore neighborhood walk). Returns the closed pixel chain.
fn trace_boundary(mask: &LesionMask) -> Vec<(isize, isize)> {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let at = |x: isize, y: isize| x >= 0 && x < w && y >= 0 && y < h && mask.get(x as usize, y as usize);
    let start = match mask.true_pixels().next() {
        Some((x, y)) => (x as isize, y as isize),
        None => return Vec::new(),
    };
    // clockwise Moore neighborhood, starting west (y grows downward)
    const DIRS: [(isize, isize); 8] = [
        (-1, 0),
        (-1, -1),
        (0, -1),
        (1, -1),
        (1, 0),
        (1, 1),
        (0, 1),
        (-1, 1),
    ];
    let mut chain = vec![start];
    let mut cur = start;
    let mut backtrack = (start.0 - 1, start.1);
    let cap = 4 * (w * h) as usize + 8;
    loop {
        let bd = (backtrack.0 - cur.0, backtrack.1 - cur.1);
        let bi = DIRS.iter().position(|d| *d == bd).expect("backtrack is a neighbor");
        let mut found = None;
        for k in 1..=8 {
            let d = DIRS[(bi + k) % 8];
            let cand = (cur.0 + d.0, cur.1 + d.1);
            if at(cand.0, cand.1) {
                let prev = DIRS[(bi + k - 1) % 8];
                found = Some((cand, (cur.0 + prev.0, cur.1 + prev.1)));
                break;
            }
        }
        let Some((next, new_backtrack)) = found else {
            return chain; // isolated pixel
        };
        if chain.len() > 1 && cur == start && next == chain[1] {
            chain.pop(); // the walk has closed; drop the duplicated start
            return chain;
        }
        chain.push(next);
        backtrack = new_backtrack;
        cur = next;
        if chain.len() > cap {
            debug_assert!(false, "boundary trace failed to close");
            return chain;
        }
    }
}

fn chain_length(chain: &[(isize, isize)]) -> f64 {
    if chain.len() < 2 {
        // a single pixel has four exposed unit edges
        return 4.0;
    }
    let diag = diagonal_step_weight();
    let mut len = 0.0;
    for i in 0..chain.len() {
        let a = chain[i];
        let b = chain[(i + 1) % chain.len()];
        let (dx, dy) = ((a.0 - b.0).abs(), (a.1 - b.1).abs());
        len += match (dx, dy) {
            (0, 0) => 0.0,
            (1, 0) | (0, 1) => 1.0,
            (1, 1) => diag,
            _ => unreachable!("chain pixels are 8-adjacent"),
        };
    }
    len
}

/// Boundary pixels: lesion pixels with a background (or out-of-raster)
/// 4-neighbor.
fn boundary_pixels(mask: &LesionMask) -> Vec<(usize, usize)> {
    let (w, h) = (mask.width(), mask.height());
    let mut out = Vec::new();
    for (x, y) in mask.true_pixels() {
        let edge = x == 0
            || y == 0
            || x == w - 1
            || y == h - 1
            || !mask.get(x - 1, y)
            || !mask.get(x + 1, y)
            || !mask.get(x, y - 1)
            || !mask.get(x, y + 1);
        if edge {
            out.push((x, y));
        }
    }
    out
}

/// Compute area, traced perimeter, centroid, and principal-axis angle.
///
/// Assumes a single-component mask (the [`lesion_mask`] contract); on
/// multi-component input the perimeter covers only the first component in
/// row-major order.
///
/// [`lesion_mask`]: crate::segmentation::lesion_mask
pub fn mask_geometry(mask: &LesionMask) -> Result<MaskGeometry, FeatureError> {
    let area = mask.area();
    if area == 0 {
        return Err(FeatureError::InvalidArgument("mask has no lesion pixels".into()));
    }
    let chain = trace_boundary(mask);
    let perimeter = chain_length(&chain);

    let (mut sx, mut sy) = (0.0, 0.0);
    for (x, y) in mask.true_pixels() {
        sx += x as f64;
        sy += y as f64;
    }
    let n = area as f64;
    let centroid = (sx / n, sy / n);

    let (mut mu20, mut mu02, mut mu11) = (0.0, 0.0, 0.0);
    for (x, y) in mask.true_pixels() {
        let dx = x as f64 - centroid.0;
        let dy = y as f64 - centroid.1;
        mu20 += dx * dx;
        mu02 += dy * dy;
        mu11 += dx * dy;
    }
    let mut angle = 0.5 * (2.0 * mu11).atan2(mu20 - mu02);
    if angle >= std::f64::consts::FRAC_PI_2 {
        angle -= std::f64::consts::PI;
    }
    Ok(MaskGeometry { area, perimeter, centroid, principal_axis_angle: angle })
}

/// Equivalent-circle diameter, `2 * sqrt(area / pi)`.
pub fn diameter(geom: &MaskGeometry) -> f64 {
    2.0 * (geom.area as f64 / std::f64::consts::PI).sqrt()
}

/// Shape compactness `4*pi*area / perimeter^2`, clamped to `(0, 1]`;
/// 1 for an ideal disk.
pub fn sphericity(geom: &MaskGeometry) -> f64 {
    let raw = 4.0 * std::f64::consts::PI * geom.area as f64 / (geom.perimeter * geom.perimeter);
    raw.clamp(f64::MIN_POSITIVE, 1.0)
}

/// Border irregularity, the exact reciprocal of [`sphericity`]; >= 1.
pub fn irregularity_index(geom: &MaskGeometry) -> f64 {
    1.0 / sphericity(geom)
}

/// Mean reflection mismatch over the principal axis and its perpendicular.
///
/// Each lesion pixel is reflected about the axis through the centroid; the
/// symmetric-difference area over the mask area gives one axis score, and
/// the result is the mean of the two, clamped to `[0, 1]`.
pub fn asymmetry(mask: &LesionMask, geom: &MaskGeometry) -> f64 {
    let area = geom.area as f64;
    if geom.area == 0 {
        return 0.0;
    }
    let (cx, cy) = geom.centroid;
    let theta = geom.principal_axis_angle;
    let axes = [(theta.cos(), theta.sin()), (-theta.sin(), theta.cos())];
    let pixels: Vec<(i64, i64)> = mask.true_pixels().map(|(x, y)| (x as i64, y as i64)).collect();
    let mask_set: HashSet<(i64, i64)> = pixels.iter().copied().collect();

    let mut total = 0.0;
    for (ux, uy) in axes {
        let mut reflected = HashSet::with_capacity(pixels.len());
        for &(x, y) in &pixels {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let dot = dx * ux + dy * uy;
            let rx = cx + 2.0 * dot * ux - dx;
            let ry = cy + 2.0 * dot * uy - dy;
            reflected.insert((rx.round() as i64, ry.round() as i64));
        }
        let missing_in_reflection = mask_set.difference(&reflected).count();
        let extra_in_reflection = reflected.difference(&mask_set).count();
        total += (missing_in_reflection + extra_in_reflection) as f64 / area;
    }
    (total / 2.0).clamp(0.0, 1.0)
}

/// Squared coefficient of variation of the boundary's radial distance from
/// the centroid. Zero for a circle; large for scalloped borders. The gray
/// raster is only dimension-checked here (radial spread is purely geometric).
pub fn edge_uniformity(mask: &LesionMask, gray: &GrayRaster) -> Result<f64, FeatureError> {
    if gray.width() != mask.width() || gray.height() != mask.height() {
        return Err(FeatureError::DimensionMismatch(format!(
            "gray {}x{} vs mask {}x{}",
            gray.width(),
            gray.height(),
            mask.width(),
            mask.height()
        )));
    }
    let geom = mask_geometry(mask)?;
    let boundary = boundary_pixels(mask);
    if boundary.is_empty() {
        return Ok(0.0);
    }
    let radii: Vec<f64> = boundary
        .iter()
        .map(|(x, y)| {
            let dx = *x as f64 - geom.centroid.0;
            let dy = *y as f64 - geom.centroid.1;
            (dx * dx + dy * dy).sqrt()
        })
        .collect();
    let mean = radii.iter().sum::<f64>() / radii.len() as f64;
    if mean == 0.0 {
        return Ok(0.0);
    }
    let var = radii.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / radii.len() as f64;
    Ok(var / (mean * mean))
}

/// Per-channel color statistics over the lesion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorStats {
    pub var_r: f64,
    pub var_g: f64,
    pub var_b: f64,
    pub ratio_r: f64,
    pub ratio_g: f64,
    pub ratio_b: f64,
    /// Number of reference colors covering at least 5% of the lesion.
    pub color_count: usize,
}

/// Channel variances (0-255 scale), channel ratios (summing to exactly 1),
/// and the reference-color count over lesion pixels.
pub fn color_stats(img: &RgbRaster, mask: &LesionMask) -> Result<ColorStats, FeatureError> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(FeatureError::DimensionMismatch(format!(
            "image {}x{} vs mask {}x{}",
            img.width(),
            img.height(),
            mask.width(),
            mask.height()
        )));
    }
    let mut n = 0usize;
    let mut sum = [0.0f64; 3];
    let mut sumsq = [0.0f64; 3];
    let mut color_hits = [0usize; REFERENCE_COLORS.len()];
    for (x, y) in mask.true_pixels() {
        let p = img.get(x, y);
        n += 1;
        for c in 0..3 {
            let v = p[c] as f64;
            sum[c] += v;
            sumsq[c] += v * v;
        }
        for (i, (_, reference)) in REFERENCE_COLORS.iter().enumerate() {
            let d2: f64 = (0..3)
                .map(|c| {
                    let d = p[c] as f64 - reference[c] as f64;
                    d * d
                })
                .sum();
            if d2 <= COLOR_DISTANCE * COLOR_DISTANCE {
                color_hits[i] += 1;
            }
        }
    }
    if n == 0 {
        return Err(FeatureError::InvalidArgument("mask has no lesion pixels".into()));
    }
    let nf = n as f64;
    let mean = [sum[0] / nf, sum[1] / nf, sum[2] / nf];
    let var = [
        sumsq[0] / nf - mean[0] * mean[0],
        sumsq[1] / nf - mean[1] * mean[1],
        sumsq[2] / nf - mean[2] * mean[2],
    ];
    let channel_total = mean[0] + mean[1] + mean[2];
    // ratio_b is defined as the complement so the three always sum to 1
    let (ratio_r, ratio_g) = if channel_total == 0.0 {
        (1.0 / 3.0, 1.0 / 3.0)
    } else {
        (mean[0] / channel_total, mean[1] / channel_total)
    };
    let ratio_b = 1.0 - (ratio_r + ratio_g);
    let color_count = color_hits
        .iter()
        .filter(|hits| **hits as f64 >= COLOR_COVERAGE * nf)
        .count();
    Ok(ColorStats {
        var_r: var[0].max(0.0),
        var_g: var[1].max(0.0),
        var_b: var[2].max(0.0),
        ratio_r,
        ratio_g,
        ratio_b,
        color_count,
    })
}

/// Mean background intensity minus mean lesion intensity; positive for the
/// typical dark lesion on light skin.
pub fn brightness_difference(gray: &GrayRaster, mask: &LesionMask) -> Result<f64, FeatureError> {
    if gray.width() != mask.width() || gray.height() != mask.height() {
        return Err(FeatureError::DimensionMismatch(format!(
            "gray {}x{} vs mask {}x{}",
            gray.width(),
            gray.height(),
            mask.width(),
            mask.height()
        )));
    }
    let mut lesion_sum = 0.0;
    let mut lesion_n = 0usize;
    let mut back_sum = 0.0;
    let mut back_n = 0usize;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let v = gray.get(x, y);
            if mask.get(x, y) {
                lesion_sum += v;
                lesion_n += 1;
            } else {
                back_sum += v;
                back_n += 1;
            }
        }
    }
    if lesion_n == 0 {
        return Err(FeatureError::InvalidArgument("mask has no lesion pixels".into()));
    }
    if back_n == 0 {
        return Err(FeatureError::InvalidArgument(
            "mask covers the whole raster; no background to compare".into(),
        ));
    }
    Ok(back_sum / back_n as f64 - lesion_sum / lesion_n as f64)
}

/// Assemble the 13 features in canonical order. The label is left unset.
pub fn extract_features(img: &RgbRaster, mask: &LesionMask) -> Result<FeatureVector, FeatureError> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(FeatureError::DimensionMismatch(format!(
            "image {}x{} vs mask {}x{}",
            img.width(),
            img.height(),
            mask.width(),
            mask.height()
        )));
    }
    let gray = imaging::to_gray(img);
    let geom = mask_geometry(mask)?;
    let stats = color_stats(img, mask)?;
    let values = [
        diameter(&geom),
        sphericity(&geom),
        irregularity_index(&geom),
        asymmetry(mask, &geom),
        edge_uniformity(mask, &gray)?,
        stats.var_r,
        stats.var_g,
        stats.var_b,
        stats.ratio_r,
        stats.ratio_g,
        stats.ratio_b,
        brightness_difference(&gray, mask)?,
        stats.color_count as f64,
    ];
    FeatureVector::new(values, None)
}

/// Per-feature z-scoring statistics, fitted on training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    /// Fit means and population standard deviations; zero-variance features
    /// record a std of 1 so training columns standardize to 0.
    pub fn fit(train: &[FeatureVector]) -> Result<Self, FeatureError> {
        if train.len() < 2 {
            return Err(FeatureError::InvalidArgument(format!(
                "need at least 2 training vectors, got {}",
                train.len()
            )));
        }
        let n = train.len() as f64;
        let mut means = vec![0.0; FEATURE_COUNT];
        let mut stds = vec![0.0; FEATURE_COUNT];
        for fv in train {
            for (m, v) in means.iter_mut().zip(&fv.values) {
                *m += v;
            }
        }
        for m in means.iter_mut() {
            *m /= n;
        }
        for fv in train {
            for j in 0..FEATURE_COUNT {
                let d = fv.values[j] - means[j];
                stds[j] += d * d;
            }
        }
        for s in stds.iter_mut() {
            *s = (*s / n).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Ok(Self { means, stds })
    }

    pub fn apply_one(&self, fv: &FeatureVector) -> FeatureVector {
        let mut values = fv.values;
        for j in 0..FEATURE_COUNT {
            values[j] = (values[j] - self.means[j]) / self.stds[j];
        }
        FeatureVector { values, label: fv.label }
    }

    pub fn apply(&self, data: &[FeatureVector]) -> Vec<FeatureVector> {
        data.iter().map(|fv| self.apply_one(fv)).collect()
    }
}

/// Z-score both lists using statistics from `train` only.
pub fn standardize(
    train: &[FeatureVector],
    apply_to: &[FeatureVector],
) -> Result<(Vec<FeatureVector>, Vec<FeatureVector>, Standardizer), FeatureError> {
    let stdzr = Standardizer::fit(train)?;
    Ok((stdzr.apply(train), stdzr.apply(apply_to), stdzr))
}

/// Header row of the feature CSV.
pub fn csv_header() -> String {
    format!("{},label", FEATURE_NAMES.join(","))
}

/// One CSV row; floats use the shortest round-trip decimal form.
pub fn to_csv_row(fv: &FeatureVector) -> Result<String, FeatureError> {
    let label = fv
        .label
        .ok_or_else(|| FeatureError::InvalidArgument("feature CSV rows require a label".into()))?;
    let mut fields: Vec<String> = fv.values.iter().map(|v| format!("{v}")).collect();
    fields.push(label.code().to_string());
    Ok(fields.join(","))
}

/// Parse one data row of the feature CSV (13 values + label).
pub fn parse_csv_row(line: &str) -> Result<FeatureVector, FeatureError> {
    let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
    if fields.len() != FEATURE_COUNT + 1 {
        return Err(FeatureError::InvalidArgument(format!(
            "expected {} fields, got {}",
            FEATURE_COUNT + 1,
            fields.len()
        )));
    }
    let mut values = [0.0; FEATURE_COUNT];
    for (j, field) in fields[..FEATURE_COUNT].iter().enumerate() {
        values[j] = field.parse::<f64>().map_err(|_| {
            FeatureError::InvalidArgument(format!("bad number {field:?} in column {}", FEATURE_NAMES[j]))
        })?;
    }
    let code: u8 = fields[FEATURE_COUNT]
        .parse()
        .map_err(|_| FeatureError::InvalidArgument(format!("bad label {:?}", fields[FEATURE_COUNT])))?;
    let label = ClassLabel::from_code(code)?;
    FeatureVector::new(values, Some(label))
}
