//! Image loading, standardization, and denoising.
//!
//! Images enter the pipeline as [`RgbRaster`]s (8-bit RGB), are resized to a
//! common working size, median-filtered, and converted to [`GrayRaster`]s
//! where single-channel intensities are needed. Binary PPM (P6) is decoded
//! and encoded natively so test fixtures are bit-exact; PNG and JPEG are
//! delegated to the `image` crate.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

/// Luminance weights for RGB-to-gray conversion (ITU-R BT.601).
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot decode {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Rectangular grid of 8-bit RGB pixels, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbRaster {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbRaster {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidArgument(
                "raster dimensions must be at least 1x1".into(),
            ));
        }
        if pixels.len() != width * height {
            return Err(ImagingError::InvalidArgument(format!(
                "pixel count {} does not match {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, pixels })
    }

    /// Raster filled with a single color.
    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        Self { width, height, pixels: vec![color; width * height] }
    }

    /// Build a raster by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, px: [u8; 3]) {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x] = px;
    }
}

/// Rectangular grid of scalar intensities in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayRaster {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl GrayRaster {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidArgument(
                "raster dimensions must be at least 1x1".into(),
            ));
        }
        if values.len() != width * height {
            return Err(ImagingError::InvalidArgument(format!(
                "value count {} does not match {}x{}",
                values.len(),
                width,
                height
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ImagingError::InvalidArgument(format!(
                "gray value {v} outside [0, 1]"
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.values[y * self.width + x]
    }
}

/// Decode an image file into an [`RgbRaster`].
///
/// Binary PPM (P6, maxval 255) is parsed natively; PNG and JPEG go through
/// the `image` crate. Other formats the `image` crate can sniff will also
/// decode, but only the three named formats are supported interfaces.
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbRaster, ImagingError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    decode_image(&bytes).map_err(|reason| ImagingError::Format {
        path: path.display().to_string(),
        reason,
    })
}

/// Decode from an in-memory byte buffer (same formats as [`load_image`]).
pub fn decode_image(bytes: &[u8]) -> Result<RgbRaster, String> {
    if bytes.starts_with(b"P6") {
        return decode_ppm(bytes);
    }
    let img = image::load_from_memory(bytes).map_err(|e| e.to_string())?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let pixels = rgb.pixels().map(|p| [p[0], p[1], p[2]]).collect();
    RgbRaster::new(w as usize, h as usize, pixels).map_err(|e| e.to_string())
}

fn decode_ppm(bytes: &[u8]) -> Result<RgbRaster, String> {
    let mut pos = 2; // past "P6"
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and '#' comments between header fields
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(b) = bytes.get(pos) {
                        pos += 1;
                        if *b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err("truncated PPM header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if pos == start {
            return Err("malformed PPM header".into());
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("digits are ascii");
        *field = text.parse().map_err(|_| "PPM header field overflow".to_string())?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(format!("unsupported PPM maxval {maxval} (expected 255)"));
    }
    if width == 0 || height == 0 {
        return Err("PPM dimensions must be at least 1x1".into());
    }
    // exactly one whitespace byte separates the header from pixel data
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err("missing PPM header terminator".into()),
    }
    let need = width * height * 3;
    let data = &bytes[pos..];
    if data.len() < need {
        return Err(format!(
            "truncated PPM pixel data: need {need} bytes, have {}",
            data.len()
        ));
    }
    let pixels = data[..need]
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    RgbRaster::new(width, height, pixels).map_err(|e| e.to_string())
}

/// Encode as binary PPM (P6, maxval 255). Bit-exact round trip with the
/// native decoder.
pub fn encode_ppm(img: &RgbRaster) -> Vec<u8> {
    let mut header = String::new();
    write!(header, "P6\n{} {}\n255\n", img.width, img.height).expect("string write");
    let mut out = header.into_bytes();
    out.reserve(img.pixels.len() * 3);
    for px in &img.pixels {
        out.extend_from_slice(px);
    }
    out
}

pub fn save_ppm(img: &RgbRaster, path: impl AsRef<Path>) -> Result<(), ImagingError> {
    std::fs::write(path, encode_ppm(img))?;
    Ok(())
}

/// Write an 8-bit single-channel PNG (used for mask export).
pub fn save_luma_png(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    data: &[u8],
) -> Result<(), ImagingError> {
    let path = path.as_ref();
    image::save_buffer(
        path,
        data,
        width as u32,
        height as u32,
        image::ColorType::L8,
    )
    .map_err(|e| ImagingError::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Resize with bilinear interpolation to exactly `w` x `h`.
///
/// Sample positions use the half-pixel-center convention, so resizing to the
/// source's own dimensions reproduces it exactly. Each output channel is the
/// bilinear blend of the four surrounding source samples, rounded to the
/// nearest integer.
pub fn resize(img: &RgbRaster, w: usize, h: usize) -> Result<RgbRaster, ImagingError> {
    if w == 0 || h == 0 {
        return Err(ImagingError::InvalidArgument(
            "resize target must be at least 1x1".into(),
        ));
    }
    let sw = img.width;
    let sh = img.height;
    let x_scale = sw as f64 / w as f64;
    let y_scale = sh as f64 / h as f64;
    let mut pixels = Vec::with_capacity(w * h);
    for oy in 0..h {
        let sy = ((oy as f64 + 0.5) * y_scale - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let fy = sy - y0 as f64;
        for ox in 0..w {
            let sx = ((ox as f64 + 0.5) * x_scale - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let fx = sx - x0 as f64;
            let p00 = img.get(x0, y0);
            let p10 = img.get(x1, y0);
            let p01 = img.get(x0, y1);
            let p11 = img.get(x1, y1);
            let mut px = [0u8; 3];
            for c in 0..3 {
                let top = (1.0 - fx) * p00[c] as f64 + fx * p10[c] as f64;
                let bottom = (1.0 - fx) * p01[c] as f64 + fx * p11[c] as f64;
                let v = (1.0 - fy) * top + fy * bottom;
                px[c] = v.round().clamp(0.0, 255.0) as u8;
            }
            pixels.push(px);
        }
    }
    Ok(RgbRaster { width: w, height: h, pixels })
}

/// Convert to grayscale with the BT.601 luminance weights, scaled to `[0, 1]`.
pub fn to_gray(img: &RgbRaster) -> GrayRaster {
    let values = img
        .pixels
        .iter()
        .map(|p| {
            let v = (LUMA_WEIGHTS[0] * p[0] as f64
                + LUMA_WEIGHTS[1] * p[1] as f64
                + LUMA_WEIGHTS[2] * p[2] as f64)
                / 255.0;
            v.clamp(0.0, 1.0)
        })
        .collect();
    GrayRaster { width: img.width, height: img.height, values }
}

fn check_window(window: usize, width: usize, height: usize) -> Result<(), ImagingError> {
    if window == 0 || window % 2 == 0 {
        return Err(ImagingError::InvalidArgument(format!(
            "median window must be odd and >= 1, got {window}"
        )));
    }
    if window > width.min(height) {
        return Err(ImagingError::InvalidArgument(format!(
            "median window {window} exceeds min dimension {}",
            width.min(height)
        )));
    }
    Ok(())
}

/// Median filter per RGB channel. Borders replicate the nearest edge sample;
/// `window = 1` is the identity.
pub fn median_filter_rgb(img: &RgbRaster, window: usize) -> Result<RgbRaster, ImagingError> {
    check_window(window, img.width, img.height)?;
    if window == 1 {
        return Ok(img.clone());
    }
    let half = (window / 2) as isize;
    let mut pixels = Vec::with_capacity(img.pixels.len());
    let mut buf: [Vec<u8>; 3] = [
        Vec::with_capacity(window * window),
        Vec::with_capacity(window * window),
        Vec::with_capacity(window * window),
    ];
    for y in 0..img.height as isize {
        for x in 0..img.width as isize {
            for b in buf.iter_mut() {
                b.clear();
            }
            for dy in -half..=half {
                let sy = (y + dy).clamp(0, img.height as isize - 1) as usize;
                for dx in -half..=half {
                    let sx = (x + dx).clamp(0, img.width as isize - 1) as usize;
                    let px = img.get(sx, sy);
                    for c in 0..3 {
                        buf[c].push(px[c]);
                    }
                }
            }
            let mut out = [0u8; 3];
            for c in 0..3 {
                buf[c].sort_unstable();
                out[c] = buf[c][buf[c].len() / 2];
            }
            pixels.push(out);
        }
    }
    Ok(RgbRaster { width: img.width, height: img.height, pixels })
}

/// Median filter on a gray raster; same window and border semantics as
/// [`median_filter_rgb`].
pub fn median_filter_gray(img: &GrayRaster, window: usize) -> Result<GrayRaster, ImagingError> {
    check_window(window, img.width, img.height)?;
    if window == 1 {
        return Ok(img.clone());
    }
    let half = (window / 2) as isize;
    let mut values = Vec::with_capacity(img.values.len());
    let mut buf: Vec<f64> = Vec::with_capacity(window * window);
    for y in 0..img.height as isize {
        for x in 0..img.width as isize {
            buf.clear();
            for dy in -half..=half {
                let sy = (y + dy).clamp(0, img.height as isize - 1) as usize;
                for dx in -half..=half {
                    let sx = (x + dx).clamp(0, img.width as isize - 1) as usize;
                    buf.push(img.get(sx, sy));
                }
            }
            buf.sort_unstable_by(f64::total_cmp);
            values.push(buf[buf.len() / 2]);
        }
    }
    Ok(GrayRaster { width: img.width, height: img.height, values })
}
