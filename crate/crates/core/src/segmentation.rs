//! Vessel segmentation and capillary instance extraction.
//!
//! The segmentation backend is either a native multiscale Hessian ridge
//! filter (dark tubes on a bright background) or an externally produced
//! mask file, so masks from any model can be slotted into the pipeline.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, GrayImage, Point, ScalarField};

/// Segmentation backend selection.
#[derive(Debug, Clone)]
pub enum SegmentationBackend {
    /// Thresholded mask file used verbatim (>= 128 means vessel).
    External(PathBuf),
    /// Native multiscale vesselness filter.
    Vesselness(VesselnessParams),
}

/// Parameters of the Hessian ridge filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VesselnessParams {
    /// Gaussian scales in pixels.
    pub scales: Vec<f64>,
    /// Ridge-ratio sensitivity (beta).
    pub beta: f64,
    /// Structureness sensitivity (c).
    pub c: f64,
    /// Binarization threshold on the score map, in (0, 1).
    pub threshold: f64,
}

impl Default for VesselnessParams {
    fn default() -> Self {
        VesselnessParams {
            scales: vec![2.0, 3.0, 4.0, 5.0],
            beta: 0.5,
            c: 0.1,
            threshold: 0.25,
        }
    }
}

impl VesselnessParams {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidParameter(
                "vesselness scales must be nonempty and strictly positive".into(),
            ));
        }
        if !(self.beta > 0.0) || !(self.c > 0.0) {
            return Err(Error::InvalidParameter(
                "vesselness beta and c must be positive".into(),
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "vesselness threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Why an instance was removed from measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExclusionReason {
    AreaOutOfRange,
    Blurred,
    OutsideCountingArea,
    Unmatched,
}

/// Inclusion status of a capillary instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason")]
pub enum InstanceStatus {
    Kept,
    Excluded(ExclusionReason),
}

impl InstanceStatus {
    pub fn is_kept(&self) -> bool {
        matches!(self, InstanceStatus::Kept)
    }
}

/// Inclusive rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub min_row: usize,
    pub min_col: usize,
    pub max_row: usize,
    pub max_col: usize,
}

impl Rect {
    pub fn contains(&self, p: Point) -> bool {
        p.row >= self.min_row && p.row <= self.max_row && p.col >= self.min_col && p.col <= self.max_col
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.min_row <= other.max_row
            && other.min_row <= self.max_row
            && self.min_col <= other.max_col
            && other.min_col <= self.max_col
    }

    /// Grow by `margin` on every side, clamped at zero.
    pub fn dilated(&self, margin: usize) -> Rect {
        Rect {
            min_row: self.min_row.saturating_sub(margin),
            min_col: self.min_col.saturating_sub(margin),
            max_row: self.max_row + margin,
            max_col: self.max_col + margin,
        }
    }

    pub fn width(&self) -> usize {
        self.max_col - self.min_col + 1
    }

    pub fn height(&self) -> usize {
        self.max_row - self.min_row + 1
    }
}

/// One connected capillary candidate.
#[derive(Debug, Clone)]
pub struct CapillaryInstance {
    pub id: usize,
    /// 8-connected pixel region, sorted in (row, col) order.
    pub pixels: Vec<Point>,
    pub bounding_box: Rect,
    pub clarity_score: f64,
    pub status: InstanceStatus,
}

impl CapillaryInstance {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    /// Region mask cropped to the full image dimensions.
    pub fn region_mask(&self, width: usize, height: usize) -> BinaryMask {
        let mut mask = BinaryMask::empty(width, height);
        for p in &self.pixels {
            mask.set(p.row, p.col, true);
        }
        mask
    }
}

/// Separable Gaussian smoothing of an intensity image.
pub(crate) fn gaussian_smooth(img: &GrayImage, sigma: f64) -> ScalarField {
    let field = ScalarField {
        width: img.width(),
        height: img.height(),
        data: img.data().to_vec(),
    };
    crate::imaging::gaussian_smooth_field(&field, sigma)
}

/// Hessian entries (scale-normalized by sigma^2) of a smoothed field at one
/// pixel, by central differences with replicated borders.
pub(crate) fn hessian_at(f: &ScalarField, r: usize, c: usize, sigma: f64) -> (f64, f64, f64) {
    let (w, h) = (f.width, f.height);
    let at = |r: i64, c: i64| f.get(r.clamp(0, h as i64 - 1) as usize, c.clamp(0, w as i64 - 1) as usize);
    let (ri, ci) = (r as i64, c as i64);
    let v = at(ri, ci);
    let hrr = at(ri - 1, ci) - 2.0 * v + at(ri + 1, ci);
    let hcc = at(ri, ci - 1) - 2.0 * v + at(ri, ci + 1);
    let hrc = (at(ri - 1, ci - 1) + at(ri + 1, ci + 1) - at(ri - 1, ci + 1) - at(ri + 1, ci - 1)) / 4.0;
    let s2 = sigma * sigma;
    (hrr * s2, hcc * s2, hrc * s2)
}

/// Ridge response from Hessian entries; zero unless the larger-magnitude
/// eigenvalue is positive (dark ridge on bright background).
pub(crate) fn ridge_response(hrr: f64, hcc: f64, hrc: f64, beta: f64, c: f64) -> f64 {
    let half_tr = (hrr + hcc) / 2.0;
    let disc = (((hrr - hcc) / 2.0).powi(2) + hrc * hrc).sqrt();
    let e1 = half_tr - disc;
    let e2 = half_tr + disc;
    // Order by magnitude: |l1| <= |l2|.
    let (l1, l2) = if e1.abs() <= e2.abs() { (e1, e2) } else { (e2, e1) };
    if l2 <= 0.0 {
        return 0.0;
    }
    let rb = l1 / l2;
    let s2 = l1 * l1 + l2 * l2;
    (-(rb * rb) / (2.0 * beta * beta)).exp() * (1.0 - (-s2 / (2.0 * c * c)).exp())
}

/// Multiscale vesselness score map in [0, 1]; per-pixel maximum over scales.
pub fn vesselness(img: &GrayImage, params: &VesselnessParams) -> Result<ScalarField> {
    params.validate()?;
    let (w, h) = (img.width(), img.height());
    let mut score = ScalarField::zeros(w, h);
    for &sigma in &params.scales {
        let smoothed = gaussian_smooth(img, sigma);
        for r in 0..h {
            for c in 0..w {
                let (hrr, hcc, hrc) = hessian_at(&smoothed, r, c, sigma);
                let v = ridge_response(hrr, hcc, hrc, params.beta, params.c);
                if v > score.get(r, c) {
                    score.set(r, c, v);
                }
            }
        }
    }
    Ok(score)
}

fn erode3x3(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut out = BinaryMask::empty(w, h);
    for r in 0..h {
        for c in 0..w {
            let mut all = true;
            'n: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    let inside = rr >= 0 && rr < h as i64 && cc >= 0 && cc < w as i64;
                    if !inside || !mask.get(rr as usize, cc as usize) {
                        all = false;
                        break 'n;
                    }
                }
            }
            out.set(r, c, all);
        }
    }
    out
}

fn dilate3x3(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut out = BinaryMask::empty(w, h);
    for r in 0..h {
        for c in 0..w {
            let mut any = false;
            'n: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if rr >= 0 && rr < h as i64 && cc >= 0 && cc < w as i64 && mask.get(rr as usize, cc as usize) {
                        any = true;
                        break 'n;
                    }
                }
            }
            out.set(r, c, any);
        }
    }
    out
}

pub(crate) fn open3x3(mask: &BinaryMask) -> BinaryMask {
    dilate3x3(&erode3x3(mask))
}

pub(crate) fn close3x3(mask: &BinaryMask) -> BinaryMask {
    erode3x3(&dilate3x3(mask))
}

/// Produce a vessel mask from the configured backend.
///
/// The vesselness route thresholds the score map and despeckles it with a
/// 3x3 morphological open followed by a close. The external route loads the
/// mask file verbatim and only checks dimensions.
pub fn segment(img: &GrayImage, backend: &SegmentationBackend) -> Result<BinaryMask> {
    match backend {
        SegmentationBackend::External(path) => {
            let mask = crate::io::load_mask(path)?;
            if mask.width() != img.width() || mask.height() != img.height() {
                return Err(Error::DimensionMismatch {
                    expected_width: img.width(),
                    expected_height: img.height(),
                    actual_width: mask.width(),
                    actual_height: mask.height(),
                });
            }
            Ok(mask)
        }
        SegmentationBackend::Vesselness(params) => {
            let score = vesselness(img, params)?;
            let mut mask = BinaryMask::empty(img.width(), img.height());
            for r in 0..img.height() {
                for c in 0..img.width() {
                    mask.set(r, c, score.get(r, c) >= params.threshold);
                }
            }
            Ok(close3x3(&open3x3(&mask)))
        }
    }
}

/// Extract 8-connected components as capillary instances.
///
/// Components with area outside `[min_area, max_area]` are excluded with
/// `AreaOutOfRange`. Ids are assigned in (min row, min col) order of the
/// bounding boxes.
pub fn extract_instances(
    mask: &BinaryMask,
    min_area: usize,
    max_area: usize,
) -> Result<Vec<CapillaryInstance>> {
    if min_area == 0 || min_area >= max_area {
        return Err(Error::InvalidParameter(format!(
            "area gate must satisfy 0 < min_area < max_area, got ({min_area}, {max_area})"
        )));
    }
    let (w, h) = (mask.width(), mask.height());
    let mut visited = vec![false; w * h];
    let mut components: Vec<(Rect, Vec<Point>)> = Vec::new();

    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) || visited[r * w + c] {
                continue;
            }
            let mut stack = vec![Point::new(r, c)];
            visited[r * w + c] = true;
            let mut pixels = Vec::new();
            let mut rect = Rect {
                min_row: r,
                min_col: c,
                max_row: r,
                max_col: c,
            };
            while let Some(p) = stack.pop() {
                pixels.push(p);
                rect.min_row = rect.min_row.min(p.row);
                rect.min_col = rect.min_col.min(p.col);
                rect.max_row = rect.max_row.max(p.row);
                rect.max_col = rect.max_col.max(p.col);
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (rr, cc) = (p.row as i64 + dr, p.col as i64 + dc);
                        if rr < 0 || rr >= h as i64 || cc < 0 || cc >= w as i64 {
                            continue;
                        }
                        let idx = rr as usize * w + cc as usize;
                        if mask.get(rr as usize, cc as usize) && !visited[idx] {
                            visited[idx] = true;
                            stack.push(Point::new(rr as usize, cc as usize));
                        }
                    }
                }
            }
            pixels.sort();
            components.push((rect, pixels));
        }
    }

    components.sort_by_key(|(rect, _)| (rect.min_row, rect.min_col));
    Ok(components
        .into_iter()
        .enumerate()
        .map(|(id, (rect, pixels))| {
            let status = if pixels.len() < min_area || pixels.len() > max_area {
                InstanceStatus::Excluded(ExclusionReason::AreaOutOfRange)
            } else {
                InstanceStatus::Kept
            };
            CapillaryInstance {
                id,
                pixels,
                bounding_box: rect,
                clarity_score: 0.0,
                status,
            }
        })
        .collect())
}

/// Root-mean-square gradient magnitude of `img` over a pixel region
/// (central differences with replicated borders).
fn rms_gradient(img: &GrayImage, pixels: &[Point]) -> f64 {
    let (w, h) = (img.width(), img.height());
    let at = |r: i64, c: i64| {
        img.get(
            r.clamp(0, h as i64 - 1) as usize,
            c.clamp(0, w as i64 - 1) as usize,
        )
    };
    let mut acc = 0.0;
    for p in pixels {
        let (r, c) = (p.row as i64, p.col as i64);
        let gr = (at(r + 1, c) - at(r - 1, c)) / 2.0;
        let gc = (at(r, c + 1) - at(r, c - 1)) / 2.0;
        acc += gr * gr + gc * gc;
    }
    (acc / pixels.len() as f64).sqrt()
}

/// Update instance statuses by image clarity and counting-area membership.
///
/// The clarity score (RMS gradient over the region) is recorded for every
/// instance; kept instances falling below `min_contrast` become
/// `Excluded(Blurred)`, and kept instances whose bounding box misses `roi`
/// entirely become `Excluded(OutsideCountingArea)`.
pub fn clarity_filter(
    instances: &mut [CapillaryInstance],
    img: &GrayImage,
    min_contrast: f64,
    roi: &Rect,
) {
    for inst in instances.iter_mut() {
        inst.clarity_score = rms_gradient(img, &inst.pixels);
        if !inst.status.is_kept() {
            continue;
        }
        if !inst.bounding_box.intersects(roi) {
            inst.status = InstanceStatus::Excluded(ExclusionReason::OutsideCountingArea);
        } else if inst.clarity_score < min_contrast {
            inst.status = InstanceStatus::Excluded(ExclusionReason::Blurred);
        }
    }
}
