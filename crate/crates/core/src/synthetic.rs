//! Synthetic dermoscopy-style benchmark images.
//!
//! Two classes: "normal mole" rasters carry a smooth, near-circular,
//! evenly colored dark disk on light skin; "melanoma" rasters carry a
//! jagged, off-center, multi-tone blob. Generation is deterministic per
//! (seed, image index), with one RNG stream per image, so datasets are
//! reproducible and images can be produced in parallel.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::ClassLabel;
use crate::imaging::{self, RgbRaster};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    /// Images per class; the default gives a 560-image dataset.
    pub per_class: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { per_class: 280, image_size: 192, seed: 7 }
    }
}

struct Patch {
    center: (f64, f64),
    radii: (f64, f64),
    rotation: f64,
    color: [f64; 3],
}

fn jitter(rng: &mut ChaCha8Rng, base: [f64; 3], spread: f64) -> [f64; 3] {
    [
        base[0] + rng.gen_range(-spread..spread),
        base[1] + rng.gen_range(-spread..spread),
        base[2] + rng.gen_range(-spread..spread),
    ]
}

fn clamp_px(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Radial boundary with sine harmonics: `R * (1 + sum a_k sin(k t + p_k))`.
struct Boundary {
    base_radius: f64,
    harmonics: Vec<(f64, f64, f64)>, // (k, amplitude, phase)
}

impl Boundary {
    fn radius(&self, theta: f64) -> f64 {
        let wobble: f64 = self
            .harmonics
            .iter()
            .map(|(k, a, p)| a * (k * theta + p).sin())
            .sum();
        self.base_radius * (1.0 + wobble)
    }
}

fn in_patch(patch: &Patch, x: f64, y: f64) -> bool {
    let (dx, dy) = (x - patch.center.0, y - patch.center.1);
    let (c, s) = (patch.rotation.cos(), patch.rotation.sin());
    let u = c * dx + s * dy;
    let v = -s * dx + c * dy;
    (u / patch.radii.0).powi(2) + (v / patch.radii.1).powi(2) <= 1.0
}

fn generate_normal_mole(size: usize, rng: &mut ChaCha8Rng) -> RgbRaster {
    let s = size as f64;
    let background = jitter(rng, [205.0, 170.0, 148.0], 8.0);
    let lesion = jitter(rng, [124.0, 84.0, 62.0], 10.0);
    let center = (
        s / 2.0 + rng.gen_range(-0.04..0.04) * s,
        s / 2.0 + rng.gen_range(-0.04..0.04) * s,
    );
    let axis_ratio: f64 = rng.gen_range(0.88..1.0);
    let rotation: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    // an occasional slightly wavier border keeps the classes overlapping
    let rough = rng.gen_bool(0.15);
    let amp_scale = if rough { 2.2 } else { 1.0 };
    let boundary = Boundary {
        base_radius: rng.gen_range(0.18..0.30) * s,
        harmonics: vec![
            (3.0, amp_scale * rng.gen_range(0.008..0.020), rng.gen_range(0.0..std::f64::consts::TAU)),
            (5.0, amp_scale * rng.gen_range(0.005..0.015), rng.gen_range(0.0..std::f64::consts::TAU)),
        ],
    };
    let darkening: f64 = rng.gen_range(0.05..0.16);
    let lighting = (rng.gen_range(-0.04..0.04), rng.gen_range(-0.04..0.04));
    let noise = Normal::new(0.0, 5.0).expect("finite std");
    let (rc, rs) = (rotation.cos(), rotation.sin());

    let mut img = RgbRaster::from_fn(size, size, |x, y| {
        let (dx, dy) = (x as f64 - center.0, y as f64 - center.1);
        // squeeze one axis to get a gentle ellipse
        let u = rc * dx + rs * dy;
        let v = (-rs * dx + rc * dy) / axis_ratio;
        let dist = (u * u + v * v).sqrt();
        let theta = v.atan2(u);
        let mut color = if dist <= boundary.radius(theta) {
            let rel = (dist / boundary.base_radius).min(1.0);
            let shade = 1.0 - darkening * (1.0 - rel);
            [lesion[0] * shade, lesion[1] * shade, lesion[2] * shade]
        } else {
            let grade = 1.0 + lighting.0 * (x as f64 / s - 0.5) + lighting.1 * (y as f64 / s - 0.5);
            [background[0] * grade, background[1] * grade, background[2] * grade]
        };
        for c in color.iter_mut() {
            *c += noise.sample(rng);
        }
        [clamp_px(color[0]), clamp_px(color[1]), clamp_px(color[2])]
    });
    scatter_speckles(&mut img, rng, &boundary, center);
    img
}

fn generate_melanoma(size: usize, rng: &mut ChaCha8Rng) -> RgbRaster {
    let s = size as f64;
    let background = jitter(rng, [203.0, 168.0, 146.0], 8.0);
    let lesion = jitter(rng, [96.0, 62.0, 40.0], 10.0);
    let center = (
        s / 2.0 + rng.gen_range(-0.08..0.08) * s,
        s / 2.0 + rng.gen_range(-0.08..0.08) * s,
    );
    // an occasional rounder, plainer melanoma keeps the task honest
    let mild = rng.gen_bool(0.15);
    let amp_scale = if mild { 0.35 } else { 1.0 };
    let harmonics = (2..=6)
        .map(|k| {
            (
                k as f64,
                amp_scale * rng.gen_range(0.03..0.11),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let boundary = Boundary { base_radius: rng.gen_range(0.20..0.33) * s, harmonics };

    let palette: [[f64; 3]; 4] = [
        [28.0, 24.0, 22.0],    // black
        [95.0, 112.0, 138.0],  // blue-gray
        [152.0, 64.0, 56.0],   // red-brown
        [182.0, 138.0, 92.0],  // light brown
    ];
    let n_patches = if mild { rng.gen_range(1..=2) } else { rng.gen_range(2..=4) };
    let patches: Vec<Patch> = (0..n_patches)
        .map(|_| {
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let offset = rng.gen_range(0.15..0.60) * boundary.base_radius;
            let color_idx = rng.gen_range(0..palette.len());
            Patch {
                center: (center.0 + offset * angle.cos(), center.1 + offset * angle.sin()),
                radii: (
                    rng.gen_range(0.18..0.45) * boundary.base_radius,
                    rng.gen_range(0.18..0.45) * boundary.base_radius,
                ),
                rotation: rng.gen_range(0.0..std::f64::consts::PI),
                color: jitter(rng, palette[color_idx], 8.0),
            }
        })
        .collect();
    let lighting = (rng.gen_range(-0.04..0.04), rng.gen_range(-0.04..0.04));
    let noise = Normal::new(0.0, 6.0).expect("finite std");

    let mut img = RgbRaster::from_fn(size, size, |x, y| {
        let (dx, dy) = (x as f64 - center.0, y as f64 - center.1);
        let dist = (dx * dx + dy * dy).sqrt();
        let theta = dy.atan2(dx);
        let mut color = if dist <= boundary.radius(theta) {
            let fx = x as f64;
            let fy = y as f64;
            patches
                .iter()
                .find(|p| in_patch(p, fx, fy))
                .map(|p| p.color)
                .unwrap_or(lesion)
        } else {
            let grade = 1.0 + lighting.0 * (x as f64 / s - 0.5) + lighting.1 * (y as f64 / s - 0.5);
            [background[0] * grade, background[1] * grade, background[2] * grade]
        };
        for c in color.iter_mut() {
            *c += noise.sample(rng);
        }
        [clamp_px(color[0]), clamp_px(color[1]), clamp_px(color[2])]
    });
    scatter_speckles(&mut img, rng, &boundary, center);
    img
}

/// Sprinkle a few isolated dark pixels on the background so the median
/// filter and speckle removal earn their keep.
fn scatter_speckles(img: &mut RgbRaster, rng: &mut ChaCha8Rng, boundary: &Boundary, center: (f64, f64)) {
    let n = rng.gen_range(10..25);
    let max_radius = boundary.base_radius * 1.6;
    for _ in 0..n {
        let x = rng.gen_range(0..img.width());
        let y = rng.gen_range(0..img.height());
        let (dx, dy) = (x as f64 - center.0, y as f64 - center.1);
        if (dx * dx + dy * dy).sqrt() > max_radius {
            img.set(x, y, [55 + rng.gen_range(0..20), 40 + rng.gen_range(0..15), 30 + rng.gen_range(0..10)]);
        }
    }
}

/// Generate one image; index `i` selects the class (first half normal) and
/// the RNG stream.
pub fn generate_image(cfg: &SyntheticConfig, index: usize) -> (RgbRaster, ClassLabel) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    if index < cfg.per_class {
        (generate_normal_mole(cfg.image_size, &mut rng), ClassLabel::NormalMole)
    } else {
        (generate_melanoma(cfg.image_size, &mut rng), ClassLabel::Melanoma)
    }
}

/// Generate the full labeled dataset in parallel.
pub fn generate_dataset(cfg: &SyntheticConfig) -> Vec<(RgbRaster, ClassLabel)> {
    (0..2 * cfg.per_class)
        .into_par_iter()
        .map(|i| generate_image(cfg, i))
        .collect()
}

/// Write the dataset as PPM files plus a `manifest.csv` (header
/// `path,label`, image paths relative to the manifest). Returns the
/// manifest path.
pub fn write_dataset(cfg: &SyntheticConfig, dir: &Path) -> std::io::Result<PathBuf> {
    let image_dir = dir.join("images");
    std::fs::create_dir_all(&image_dir)?;
    let images = generate_dataset(cfg);
    let mut manifest = String::from("path,label\n");
    for (i, (img, label)) in images.iter().enumerate() {
        let name = match label {
            ClassLabel::NormalMole => format!("images/mole_{i:04}.ppm"),
            ClassLabel::Melanoma => format!("images/melanoma_{:04}.ppm", i - cfg.per_class),
        };
        imaging::save_ppm(img, dir.join(&name))
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))?;
        manifest.push_str(&format!("{name},{}\n", label.code()));
    }
    let manifest_path = dir.join("manifest.csv");
    let mut f = std::fs::File::create(&manifest_path)?;
    f.write_all(manifest.as_bytes())?;
    Ok(manifest_path)
}
