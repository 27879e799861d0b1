//! Raster primitives shared by every pipeline stage: grayscale conversion,
//! percentile standardization, exact Euclidean distance transform and
//! bilinear sampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer pixel location in (row, col) order.
///
/// The derived `Ord` is (row, col) lexicographic, which is the tie-break
/// order used throughout the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Point {
    pub row: usize,
    pub col: usize,
}

impl Point {
    pub fn new(row: usize, col: usize) -> Self {
        Point { row, col }
    }

    pub fn distance_to(&self, other: Point) -> f64 {
        let dr = self.row as f64 - other.row as f64;
        let dc = self.col as f64 - other.col as f64;
        (dr * dr + dc * dc).sqrt()
    }
}

/// Subpixel location in (row, col) order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointF {
    pub row: f64,
    pub col: f64,
}

impl PointF {
    pub fn new(row: f64, col: f64) -> Self {
        PointF { row, col }
    }

    pub fn distance_to(&self, other: PointF) -> f64 {
        ((self.row - other.row).powi(2) + (self.col - other.col).powi(2)).sqrt()
    }
}

impl From<Point> for PointF {
    fn from(p: Point) -> Self {
        PointF {
            row: p.row as f64,
            col: p.col as f64,
        }
    }
}

/// Grayscale raster with intensities in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::InvalidInput(
                "intensities must be finite and within [0, 1]".into(),
            ));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::from_vec(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::from_vec(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col]
    }

    /// Bilinear sample at a subpixel location; coordinates are clamped to
    /// the image domain.
    pub fn bilinear(&self, row: f64, col: f64) -> f64 {
        bilinear(&self.data, self.width, self.height, row, col)
    }
}

/// Dense real-valued map over the raster (distance fields, score maps).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(width: usize, height: usize) -> Self {
        ScalarField {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn bilinear(&self, row: f64, col: f64) -> f64 {
        bilinear(&self.data, self.width, self.height, row, col)
    }
}

/// Separable Gaussian smoothing of a scalar field with replicated borders.
pub(crate) fn gaussian_smooth_field(f: &ScalarField, sigma: f64) -> ScalarField {
    let (w, h) = (f.width, f.height);
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let mut sum = 0.0;
    for i in -radius..=radius {
        let v = (-(i * i) as f64 / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        sum += v;
    }
    for v in &mut kernel {
        *v /= sum;
    }
    let clamp = |v: i64, hi: usize| v.clamp(0, hi as i64 - 1) as usize;
    let mut tmp = vec![0.0f64; w * h];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                acc += kv * f.data[r * w + clamp(c as i64 + ki as i64 - radius, w)];
            }
            tmp[r * w + c] = acc;
        }
    }
    let mut out = ScalarField::zeros(w, h);
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                acc += kv * tmp[clamp(r as i64 + ki as i64 - radius, h) * w + c];
            }
            out.set(r, c, acc);
        }
    }
    out
}

pub(crate) fn bilinear(data: &[f64], width: usize, height: usize, row: f64, col: f64) -> f64 {
    let r = row.clamp(0.0, (height - 1) as f64);
    let c = col.clamp(0.0, (width - 1) as f64);
    let r0 = r.floor() as usize;
    let c0 = c.floor() as usize;
    let r1 = (r0 + 1).min(height - 1);
    let c1 = (c0 + 1).min(width - 1);
    let fr = r - r0 as f64;
    let fc = c - c0 as f64;
    let top = data[r0 * width + c0] * (1.0 - fc) + data[r0 * width + c1] * fc;
    let bot = data[r1 * width + c0] * (1.0 - fc) + data[r1 * width + c1] * fc;
    top * (1.0 - fr) + bot * fr
}

/// Binary vessel mask, row-major, true = vessel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "mask dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "mask data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(BinaryMask {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn count_foreground(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn foreground_points(&self) -> Vec<Point> {
        let mut pts = Vec::new();
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    pts.push(Point::new(r, c));
                }
            }
        }
        pts
    }
}

/// Physical calibration: spatial scale and video frame rate.
///
/// When `microns_per_pixel` is absent, micron-denominated outputs are
/// reported in pixels only and micron-range diagnoses are suppressed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScaleConfig {
    pub microns_per_pixel: Option<f64>,
    pub fps: f64,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        ScaleConfig {
            microns_per_pixel: None,
            fps: 20.0,
        }
    }
}

impl ScaleConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(mpp) = self.microns_per_pixel {
            if !(mpp > 0.0) || !mpp.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "microns_per_pixel must be positive, got {mpp}"
                )));
            }
        }
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "fps must be positive, got {}",
                self.fps
            )));
        }
        Ok(())
    }

    pub fn px_to_um(&self, px: f64) -> Option<f64> {
        self.microns_per_pixel.map(|m| px * m)
    }
}

/// ITU-R 601 luma conversion of an 8-bit RGB raster.
///
/// `rgb` is row-major interleaved R,G,B with `3 * width * height` bytes.
pub fn to_grayscale(width: usize, height: usize, rgb: &[u8]) -> Result<GrayImage> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput(format!(
            "raster dimensions must be at least 1x1, got {width}x{height}"
        )));
    }
    if rgb.len() != 3 * width * height {
        return Err(Error::InvalidInput(format!(
            "rgb data length {} does not match 3x{width}x{height}",
            rgb.len()
        )));
    }
    let mut data = Vec::with_capacity(width * height);
    for px in rgb.chunks_exact(3) {
        let (r, g, b) = (px[0] as f64, px[1] as f64, px[2] as f64);
        // The weights sum to 1 exactly; clamp away float dust.
        data.push(((0.299 * r + 0.587 * g + 0.114 * b) / 255.0).clamp(0.0, 1.0));
    }
    GrayImage::from_vec(width, height, data)
}

/// Result of percentile standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub image: GrayImage,
    /// True when the percentile window collapsed (constant input); the
    /// output is then all 0.5.
    pub degenerate: bool,
}

/// Linearly interpolated percentile of a value slice (p in [0, 100]).
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let idx = p / 100.0 * (n - 1) as f64;
    let lo = idx.floor() as usize;
    let hi = idx.ceil() as usize;
    let frac = idx - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Percentile-clipped min-max rescale: maps the `p_low` percentile to 0 and
/// the `p_high` percentile to 1, clipping to [0, 1].
pub fn standardize(img: &GrayImage, p_low: f64, p_high: f64) -> Result<Standardized> {
    if !(0.0..=100.0).contains(&p_low) || !(0.0..=100.0).contains(&p_high) || p_low >= p_high {
        return Err(Error::InvalidParameter(format!(
            "percentiles must satisfy 0 <= p_low < p_high <= 100, got ({p_low}, {p_high})"
        )));
    }
    let mut sorted = img.data().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = percentile(&sorted, p_low);
    let hi = percentile(&sorted, p_high);
    if hi - lo <= f64::EPSILON {
        return Ok(Standardized {
            image: GrayImage::filled(img.width(), img.height(), 0.5)?,
            degenerate: true,
        });
    }
    let scale = 1.0 / (hi - lo);
    let data = img
        .data()
        .iter()
        .map(|v| ((v - lo) * scale).clamp(0.0, 1.0))
        .collect();
    Ok(Standardized {
        image: GrayImage::from_vec(img.width(), img.height(), data)?,
        degenerate: false,
    })
}

const INF: f64 = 1e20;

/// 1D squared-distance transform by the lower envelope of parabolas.
fn dt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        let fq = f[q] + (q * q) as f64;
        loop {
            let p = v[k];
            let s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = INF;
                break;
            }
        }
    }
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        out[q] = d * d + f[p];
    }
}

/// Exact Euclidean distance transform.
///
/// Foreground pixels receive the exact distance to the nearest background
/// pixel center; background pixels hold 0. The image border is treated as
/// background, so an all-foreground mask still yields finite values.
pub fn distance_transform(mask: &BinaryMask) -> ScalarField {
    // Pad by one background pixel all around so the border-as-background
    // rule falls out of the transform itself.
    let pw = mask.width() + 2;
    let ph = mask.height() + 2;
    let mut grid = vec![0.0f64; pw * ph];
    for r in 0..ph {
        for c in 0..pw {
            let inside = r >= 1 && r <= mask.height() && c >= 1 && c <= mask.width();
            grid[r * pw + c] = if inside && mask.get(r - 1, c - 1) {
                INF
            } else {
                0.0
            };
        }
    }

    // Columns first, then rows.
    let mut col_buf = vec![0.0f64; ph];
    let mut col_out = vec![0.0f64; ph];
    for c in 0..pw {
        for r in 0..ph {
            col_buf[r] = grid[r * pw + c];
        }
        dt_1d(&col_buf, &mut col_out);
        for r in 0..ph {
            grid[r * pw + c] = col_out[r];
        }
    }
    let mut row_out = vec![0.0f64; pw];
    for r in 0..ph {
        dt_1d(&grid[r * pw..(r + 1) * pw].to_vec(), &mut row_out);
        grid[r * pw..(r + 1) * pw].copy_from_slice(&row_out);
    }

    let mut field = ScalarField::zeros(mask.width(), mask.height());
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            if mask.get(r, c) {
                field.set(r, c, grid[(r + 1) * pw + (c + 1)].sqrt());
            }
        }
    }
    field
}
