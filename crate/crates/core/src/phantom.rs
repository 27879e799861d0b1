//! Synthetic ground-truth generator: capillary-loop images with known
//! geometry and videos with known WBC transits and jitter. This is the test
//! oracle for both pipelines.

use rand::SeedableRng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::analysis::MorphClass;
use crate::error::{Error, Result};
use crate::flow::FrameSequence;
use crate::imaging::{BinaryMask, GrayImage, PointF, ScalarField};

/// Parameters of one synthetic capillary loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopSpec {
    /// Center of the semicircular cap circle, (row, col).
    pub apex_center: [f64; 2],
    pub limb_length: f64,
    /// Length of the venous (right) limb; defaults to `limb_length`.
    /// Unequal limbs move the arc midpoint off the apex.
    pub venous_limb_length: Option<f64>,
    /// Distance between the two limb centerlines (twice the cap radius).
    pub limb_spacing: f64,
    pub arterial_width: f64,
    pub venous_width: f64,
    pub apex_width: f64,
    /// Sinusoidal limb perturbation amplitude in px (0 = straight limbs).
    pub tortuosity_amp: f64,
    /// Wavelength of the limb perturbation in px.
    pub tortuosity_wavelength: f64,
    /// Cross the limbs (each limb runs diagonally to the opposite side).
    pub crossing: bool,
    pub vessel_intensity: f64,
    pub background_intensity: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for LoopSpec {
    fn default() -> Self {
        LoopSpec {
            apex_center: [45.0, 60.0],
            limb_length: 60.0,
            venous_limb_length: None,
            limb_spacing: 28.0,
            arterial_width: 8.0,
            venous_width: 11.0,
            apex_width: 12.0,
            tortuosity_amp: 0.0,
            tortuosity_wavelength: 80.0,
            crossing: false,
            vessel_intensity: 0.35,
            background_intensity: 0.75,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl LoopSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("arterial_width", self.arterial_width),
            ("venous_width", self.venous_width),
            ("apex_width", self.apex_width),
        ] {
            if w < 2.0 {
                return Err(Error::InvalidParameter(format!("{name} must be >= 2 px, got {w}")));
            }
        }
        if self.vessel_intensity >= self.background_intensity {
            return Err(Error::InvalidParameter(
                "vessel intensity must be darker than the background".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.vessel_intensity) || !(0.0..=1.0).contains(&self.background_intensity) {
            return Err(Error::InvalidParameter("intensities must lie in [0, 1]".into()));
        }
        if self.limb_spacing <= (self.arterial_width + self.venous_width) / 2.0 {
            return Err(Error::InvalidParameter(
                "limb_spacing must exceed the mean limb width".into(),
            ));
        }
        if !(self.limb_length > 0.0) || !(self.tortuosity_wavelength > 0.0) {
            return Err(Error::InvalidParameter(
                "limb_length and tortuosity_wavelength must be positive".into(),
            ));
        }
        if let Some(v) = self.venous_limb_length {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(
                    "venous_limb_length must be positive".into(),
                ));
            }
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidParameter("noise_sigma must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Toward increasing arc position (arterial end to venous end).
    Forward,
    /// Toward decreasing arc position.
    Backward,
}

/// One WBC transit through the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitSpec {
    /// Transit speed along the centerline, px/frame (> 0).
    pub speed_px_per_frame: f64,
    pub start_frame: usize,
    pub blob_sigma: f64,
    pub blob_amplitude: f64,
    #[serde(default = "default_direction")]
    pub direction: Direction,
}

fn default_direction() -> Direction {
    Direction::Forward
}

/// Ground truth for one rendered loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoopTruth {
    pub class: MorphClass,
    pub apex: PointF,
    pub arterial_point: PointF,
    pub venous_point: PointF,
    pub arterial_width: f64,
    pub venous_width: f64,
    pub apex_width: f64,
    /// Analytic centerline arc length.
    pub length_px: f64,
    /// Analytic per-limb tortuosity (max over the two apex-split halves).
    pub limb_tortuosity: f64,
}

/// Ground truth for one rendered video.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VideoTruth {
    pub transits: Vec<TransitTruth>,
    pub jitter: Vec<(f64, f64)>,
    pub fps: f64,
    pub path_arc_length: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitTruth {
    /// Signed speed along the profile axis (positive = increasing s).
    pub speed_px_per_frame: f64,
    pub start_frame: usize,
    /// Frame at which the blob crosses the arc midpoint.
    pub mid_crossing_frame: f64,
}

/// A capillary-loop phantom image with its mask and per-loop ground truth.
#[derive(Debug, Clone)]
pub struct PhantomImage {
    pub image: GrayImage,
    pub mask: BinaryMask,
    pub truths: Vec<LoopTruth>,
}

/// A phantom video with its ground truth.
#[derive(Debug, Clone)]
pub struct PhantomVideo {
    pub sequence: FrameSequence,
    pub mask: BinaryMask,
    pub truth: VideoTruth,
}

/// Video phantom parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoSpec {
    pub loop_spec: LoopSpec,
    pub canvas: [usize; 2],
    pub transits: Vec<TransitSpec>,
    pub n_frames: usize,
    pub fps: f64,
    /// Per-frame content displacement (row, col); empty means no jitter.
    #[serde(default)]
    pub jitter: Vec<(f64, f64)>,
    /// Static speckle texture amplitude baked into the scene (gives the
    /// stabilizer corners to lock onto).
    #[serde(default)]
    pub texture_amp: f64,
}

struct Stroke {
    polyline: Vec<PointF>,
    width: f64,
}

struct LoopGeometry {
    strokes: Vec<Stroke>,
    /// Full centerline from arterial end to venous end.
    centerline: Vec<PointF>,
    cumulative: Vec<f64>,
    truth: LoopTruth,
}

const CURVE_STEP: f64 = 0.25;

fn polyline_arc(points: &[PointF]) -> f64 {
    points.windows(2).map(|w| w[0].distance_to(w[1])).sum()
}

fn build_geometry(spec: &LoopSpec) -> LoopGeometry {
    let radius = spec.limb_spacing / 2.0;
    let (r0, c0) = (spec.apex_center[0], spec.apex_center[1]);
    let left_len = spec.limb_length;
    let right_len = spec.venous_limb_length.unwrap_or(spec.limb_length);
    let lam = spec.tortuosity_wavelength;
    let amp = spec.tortuosity_amp;
    let wobble = |y: f64| amp * (std::f64::consts::TAU * y / lam).sin();
    let extra = radius; // extra horizontal spread for crossing anchors

    // Left limb from bottom to the cap join; right limb from the cap join
    // to the bottom. Crossing swaps the bottom anchors with extra spread.
    let limb = |length: f64, start_col: f64, cross_span: f64| -> Vec<PointF> {
        let n = (length / CURVE_STEP).ceil() as usize;
        (0..=n)
            .map(|i| {
                let frac = i as f64 / n as f64; // 0 at cap, 1 at bottom
                let y = r0 + frac * length;
                PointF::new(y, start_col + frac * cross_span + wobble(y - r0))
            })
            .collect()
    };
    let cross = if spec.crossing { 2.0 * radius + extra } else { 0.0 };
    let mut left = limb(left_len, c0 - radius, cross);
    let right = limb(right_len, c0 + radius, -cross);
    left.reverse(); // bottom -> cap join

    let n_cap = (std::f64::consts::PI * radius / CURVE_STEP).ceil() as usize;
    let mut cap: Vec<PointF> = Vec::with_capacity(n_cap + 1);
    for i in 0..=n_cap {
        let phi = std::f64::consts::PI * i as f64 / n_cap as f64;
        cap.push(PointF::new(r0 - radius * phi.sin(), c0 - radius * phi.cos()));
    }

    // Full centerline: bottom of left limb, over the cap, down the right.
    let mut centerline: Vec<PointF> = Vec::new();
    centerline.extend(left.iter().copied());
    centerline.extend(cap.iter().skip(1).copied());
    centerline.extend(right.iter().skip(1).copied());
    let mut cumulative = Vec::with_capacity(centerline.len());
    let mut acc = 0.0;
    cumulative.push(0.0);
    for w in centerline.windows(2) {
        acc += w[0].distance_to(w[1]);
        cumulative.push(acc);
    }

    let apex = PointF::new(r0 - radius, c0);
    let apex_idx = centerline
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.row.partial_cmp(&b.row).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let mut limb_tort = 1.0f64;
    for half in [&centerline[..=apex_idx], &centerline[apex_idx..]] {
        if half.len() < 2 {
            continue;
        }
        let arc = polyline_arc(half);
        let chord = half[0].distance_to(*half.last().unwrap());
        if chord > 0.0 {
            limb_tort = limb_tort.max(arc / chord);
        }
    }

    let class = if spec.crossing {
        MorphClass::Crossing
    } else if limb_tort > 1.7 {
        MorphClass::Tortuous
    } else {
        MorphClass::Normal
    };

    let left_bottom = centerline[0];
    let right_bottom = *centerline.last().unwrap();
    // Ground truth labels the narrower limb arterial; ties go left.
    let left_is_arterial = if spec.arterial_width != spec.venous_width {
        spec.arterial_width < spec.venous_width
    } else {
        left_bottom.col <= right_bottom.col
    };
    let (arterial_point, venous_point, arterial_width, venous_width) = if left_is_arterial {
        (left_bottom, right_bottom, spec.arterial_width, spec.venous_width)
    } else {
        (right_bottom, left_bottom, spec.venous_width, spec.arterial_width)
    };

    let truth = LoopTruth {
        class,
        apex,
        arterial_point,
        venous_point,
        arterial_width,
        venous_width,
        apex_width: spec.apex_width,
        length_px: acc,
        limb_tortuosity: limb_tort,
    };

    LoopGeometry {
        strokes: vec![
            Stroke { polyline: left, width: spec.arterial_width },
            Stroke { polyline: cap, width: spec.apex_width },
            Stroke { polyline: right, width: spec.venous_width },
        ],
        centerline,
        cumulative,
        truth,
    }
}

impl LoopGeometry {
    fn point_at_arc(&self, s: f64) -> PointF {
        let total = *self.cumulative.last().unwrap();
        let s = s.clamp(0.0, total);
        let idx = self.cumulative.partition_point(|c| *c < s).min(self.cumulative.len() - 1);
        if idx == 0 {
            return self.centerline[0];
        }
        let (s0, s1) = (self.cumulative[idx - 1], self.cumulative[idx]);
        let t = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        let (a, b) = (self.centerline[idx - 1], self.centerline[idx]);
        PointF::new(a.row + t * (b.row - a.row), a.col + t * (b.col - a.col))
    }
}

fn segment_distance(p: PointF, a: PointF, b: PointF) -> f64 {
    let (vr, vc) = (b.row - a.row, b.col - a.col);
    let len2 = vr * vr + vc * vc;
    if len2 == 0.0 {
        return p.distance_to(a);
    }
    let t = (((p.row - a.row) * vr + (p.col - a.col) * vc) / len2).clamp(0.0, 1.0);
    p.distance_to(PointF::new(a.row + t * vr, a.col + t * vc))
}

/// Distance map to a stroke centerline, computed only within a band around
/// each segment.
fn stroke_distance_map(stroke: &Stroke, width: usize, height: usize) -> ScalarField {
    let mut field = ScalarField {
        width,
        height,
        data: vec![f64::INFINITY; width * height],
    };
    let pad = stroke.width / 2.0 + 2.0;
    for seg in stroke.polyline.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let r_min = ((a.row.min(b.row) - pad).floor().max(0.0)) as usize;
        let r_max = ((a.row.max(b.row) + pad).ceil().min(height as f64 - 1.0)) as usize;
        let c_min = ((a.col.min(b.col) - pad).floor().max(0.0)) as usize;
        let c_max = ((a.col.max(b.col) + pad).ceil().min(width as f64 - 1.0)) as usize;
        for r in r_min..=r_max {
            for c in c_min..=c_max {
                let d = segment_distance(PointF::new(r as f64, c as f64), a, b);
                if d < field.get(r, c) {
                    field.set(r, c, d);
                }
            }
        }
    }
    field
}

struct Rendered {
    coverage: ScalarField,
    mask: BinaryMask,
}

fn render_strokes(strokes: &[&Stroke], width: usize, height: usize) -> Rendered {
    let mut coverage = ScalarField::zeros(width, height);
    let mut mask = BinaryMask::empty(width, height);
    for stroke in strokes {
        let dist = stroke_distance_map(stroke, width, height);
        let half = stroke.width / 2.0;
        for r in 0..height {
            for c in 0..width {
                let d = dist.get(r, c);
                if d == f64::INFINITY {
                    continue;
                }
                let cover = (0.5 + (half - d)).clamp(0.0, 1.0);
                if cover > coverage.get(r, c) {
                    coverage.set(r, c, cover);
                }
                // Strict interior: keeps the 2x-distance width estimate
                // unbiased at integer alignments.
                if d < half {
                    mask.set(r, c, true);
                }
            }
        }
    }
    Rendered { coverage, mask }
}

fn check_in_canvas(geom: &LoopGeometry, spec: &LoopSpec, width: usize, height: usize) -> Result<()> {
    let margin = spec.arterial_width.max(spec.venous_width).max(spec.apex_width) / 2.0 + 2.0;
    for p in &geom.centerline {
        if p.row < margin || p.col < margin || p.row > height as f64 - 1.0 - margin || p.col > width as f64 - 1.0 - margin {
            return Err(Error::InvalidParameter(format!(
                "loop centerline point ({:.1}, {:.1}) falls within {margin:.1} px of the {width}x{height} canvas edge",
                p.row, p.col
            )));
        }
    }
    Ok(())
}

fn loop_bbox(geom: &LoopGeometry, margin: f64) -> (f64, f64, f64, f64) {
    let mut bb = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &geom.centerline {
        bb.0 = bb.0.min(p.row);
        bb.1 = bb.1.min(p.col);
        bb.2 = bb.2.max(p.row);
        bb.3 = bb.3.max(p.col);
    }
    (bb.0 - margin, bb.1 - margin, bb.2 + margin, bb.3 + margin)
}

/// Render capillary-loop phantoms onto a canvas.
///
/// Loops are anti-aliased capsule strokes (two limbs joined by a
/// semicircular cap) over a brighter background, with seeded Gaussian
/// noise from the first spec. Ground truth carries analytic keypoints,
/// widths, length and class per loop, plus the exact vessel mask.
pub fn synth_image(
    specs: &[LoopSpec],
    canvas: (usize, usize),
    allow_overlap: bool,
) -> Result<PhantomImage> {
    if specs.is_empty() {
        return Err(Error::InvalidInput("at least one loop spec is required".into()));
    }
    let (width, height) = canvas;
    if width < 16 || height < 16 {
        return Err(Error::InvalidParameter(format!(
            "canvas {width}x{height} is too small"
        )));
    }
    let mut geoms = Vec::with_capacity(specs.len());
    for spec in specs {
        spec.validate()?;
        let geom = build_geometry(spec);
        check_in_canvas(&geom, spec, width, height)?;
        geoms.push(geom);
    }
    if !allow_overlap {
        for i in 0..geoms.len() {
            for j in i + 1..geoms.len() {
                let wi = specs[i].arterial_width.max(specs[i].venous_width).max(specs[i].apex_width) / 2.0 + 1.0;
                let wj = specs[j].arterial_width.max(specs[j].venous_width).max(specs[j].apex_width) / 2.0 + 1.0;
                let a = loop_bbox(&geoms[i], wi);
                let b = loop_bbox(&geoms[j], wj);
                if a.0 <= b.2 && b.0 <= a.2 && a.1 <= b.3 && b.1 <= a.3 {
                    return Err(Error::InvalidParameter(format!(
                        "loops {i} and {j} overlap; displace them or allow overlap"
                    )));
                }
            }
        }
    }

    let strokes: Vec<&Stroke> = geoms.iter().flat_map(|g| g.strokes.iter()).collect();
    let rendered = render_strokes(&strokes, width, height);

    let spec0 = &specs[0];
    let mut data = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let cover = rendered.coverage.get(r, c);
            data.push(spec0.background_intensity + (spec0.vessel_intensity - spec0.background_intensity) * cover);
        }
    }
    if spec0.noise_sigma > 0.0 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec0.seed);
        let normal = rand_distr::Normal::new(0.0, spec0.noise_sigma)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for v in &mut data {
            *v += normal.sample(&mut rng);
        }
    }
    for v in &mut data {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(PhantomImage {
        image: GrayImage::from_vec(width, height, data)?,
        mask: rendered.mask,
        truths: geoms.into_iter().map(|g| g.truth).collect(),
    })
}

/// Render a phantom video: a static loop, bright Gaussian blobs moving
/// along the centerline per transit, per-frame jitter shifts, per-frame
/// seeded noise and an optional static speckle texture.
pub fn synth_video(spec: &VideoSpec) -> Result<PhantomVideo> {
    spec.loop_spec.validate()?;
    if spec.n_frames < 2 {
        return Err(Error::InvalidParameter("a video needs at least 2 frames".into()));
    }
    if !(spec.fps > 0.0) {
        return Err(Error::InvalidParameter(format!("fps must be positive, got {}", spec.fps)));
    }
    if !spec.jitter.is_empty() && spec.jitter.len() != spec.n_frames {
        return Err(Error::InvalidParameter(format!(
            "jitter length {} does not match {} frames",
            spec.jitter.len(),
            spec.n_frames
        )));
    }
    let (width, height) = (spec.canvas[0], spec.canvas[1]);
    let geom = build_geometry(&spec.loop_spec);
    check_in_canvas(&geom, &spec.loop_spec, width, height)?;
    let total_arc = *geom.cumulative.last().unwrap();

    let mut transit_truths = Vec::with_capacity(spec.transits.len());
    for t in &spec.transits {
        if !(t.speed_px_per_frame > 0.0) {
            return Err(Error::InvalidParameter(
                "transit speed must be positive; use direction for sign".into(),
            ));
        }
        if !(t.blob_sigma > 0.0) || !(t.blob_amplitude > 0.0) {
            return Err(Error::InvalidParameter(
                "blob sigma and amplitude must be positive".into(),
            ));
        }
        let mid_crossing = t.start_frame as f64 + (total_arc / 2.0) / t.speed_px_per_frame;
        if t.start_frame >= spec.n_frames || mid_crossing > (spec.n_frames - 1) as f64 {
            return Err(Error::InvalidParameter(format!(
                "transit starting at frame {} does not reach the arc midpoint within {} frames",
                t.start_frame, spec.n_frames
            )));
        }
        let signed = match t.direction {
            Direction::Forward => t.speed_px_per_frame,
            Direction::Backward => -t.speed_px_per_frame,
        };
        transit_truths.push(TransitTruth {
            speed_px_per_frame: signed,
            start_frame: t.start_frame,
            mid_crossing_frame: mid_crossing,
        });
    }

    let strokes: Vec<&Stroke> = geom.strokes.iter().collect();
    let rendered = render_strokes(&strokes, width, height);
    let ls = &spec.loop_spec;
    let mut base = vec![0.0f64; width * height];
    for r in 0..height {
        for c in 0..width {
            base[r * width + c] = ls.background_intensity
                + (ls.vessel_intensity - ls.background_intensity) * rendered.coverage.get(r, c);
        }
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(ls.seed);
    if spec.texture_amp > 0.0 {
        use rand::Rng;
        let raw = ScalarField {
            width,
            height,
            data: (0..width * height).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let smooth = crate::imaging::gaussian_smooth_field(&raw, 1.0);
        for (b, t) in base.iter_mut().zip(&smooth.data) {
            *b += spec.texture_amp * t;
        }
    }

    let normal = if ls.noise_sigma > 0.0 {
        Some(rand_distr::Normal::new(0.0, ls.noise_sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?)
    } else {
        None
    };

    let mut frames = Vec::with_capacity(spec.n_frames);
    for f in 0..spec.n_frames {
        let mut field = ScalarField {
            width,
            height,
            data: base.clone(),
        };
        for (t, truth) in spec.transits.iter().zip(&transit_truths) {
            if f < t.start_frame {
                continue;
            }
            let travelled = (f - t.start_frame) as f64 * t.speed_px_per_frame;
            if travelled > total_arc {
                continue;
            }
            let arc_pos = match truth.speed_px_per_frame.is_sign_positive() {
                true => travelled,
                false => total_arc - travelled,
            };
            let center = geom.point_at_arc(arc_pos);
            let reach = (3.0 * t.blob_sigma).ceil();
            let r_min = (center.row - reach).floor().max(0.0) as usize;
            let r_max = (center.row + reach).ceil().min(height as f64 - 1.0) as usize;
            let c_min = (center.col - reach).floor().max(0.0) as usize;
            let c_max = (center.col + reach).ceil().min(width as f64 - 1.0) as usize;
            for r in r_min..=r_max {
                for c in c_min..=c_max {
                    let d2 = (r as f64 - center.row).powi(2) + (c as f64 - center.col).powi(2);
                    field.data[r * width + c] +=
                        t.blob_amplitude * (-d2 / (2.0 * t.blob_sigma * t.blob_sigma)).exp();
                }
            }
        }
        // Jitter: content moves by +jitter, so sample at x - jitter.
        let jit = spec.jitter.get(f).copied().unwrap_or((0.0, 0.0));
        let mut data = Vec::with_capacity(width * height);
        if jit == (0.0, 0.0) {
            data.extend_from_slice(&field.data);
        } else {
            for r in 0..height {
                for c in 0..width {
                    data.push(field.bilinear(r as f64 - jit.0, c as f64 - jit.1));
                }
            }
        }
        if let Some(normal) = &normal {
            for v in &mut data {
                *v += normal.sample(&mut rng);
            }
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        frames.push(GrayImage::from_vec(width, height, data)?);
    }

    let jitter = if spec.jitter.is_empty() {
        vec![(0.0, 0.0); spec.n_frames]
    } else {
        spec.jitter.clone()
    };
    Ok(PhantomVideo {
        sequence: FrameSequence::new(frames, spec.fps)?,
        mask: rendered.mask,
        truth: VideoTruth {
            transits: transit_truths,
            jitter,
            fps: spec.fps,
            path_arc_length: total_arc,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::distance_transform;
    use crate::skeleton::{graphify, main_path, prune, thin};

    fn default_canvas() -> (usize, usize) {
        (150, 160)
    }

    #[test]
    fn loop_thins_to_two_endpoints() {
        let spec = LoopSpec::default();
        let phantom = synth_image(&[spec], default_canvas(), false).unwrap();
        let skel = prune(&thin(&phantom.mask), 8.0);
        let graph = graphify(&skel, 8.0);
        assert_eq!(graph.endpoint_ids().len(), 2, "loop must have exactly two endpoints");
        assert!(!graph.has_crossing());
    }

    #[test]
    fn crossing_loop_truth_and_topology() {
        let spec = LoopSpec {
            crossing: true,
            apex_center: [40.0, 75.0],
            ..LoopSpec::default()
        };
        let phantom = synth_image(&[spec], (160, 140), false).unwrap();
        assert_eq!(phantom.truths[0].class, MorphClass::Crossing);
        let skel = prune(&thin(&phantom.mask), 8.0);
        let graph = graphify(&skel, 8.0);
        assert!(graph.has_crossing(), "crossed limbs must produce a crossing node");
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = LoopSpec {
            noise_sigma: 0.05,
            seed: 42,
            ..LoopSpec::default()
        };
        let a = synth_image(&[spec.clone()], default_canvas(), false).unwrap();
        let b = synth_image(&[spec], default_canvas(), false).unwrap();
        assert_eq!(a.image.data(), b.image.data());
        assert_eq!(a.mask, b.mask);
    }

    #[test]
    fn truth_length_matches_skeleton_length() {
        // Chain-step arc on a rasterized curve runs a few percent long
        // (staircase steps) while the skeleton stops short of the capsule
        // tips; the net deviation stays inside 5%.
        let spec = LoopSpec::default();
        let phantom = synth_image(&[spec], default_canvas(), false).unwrap();
        let truth_len = phantom.truths[0].length_px;
        let skel = prune(&thin(&phantom.mask), 8.0);
        let path = main_path(&graphify(&skel, 8.0)).unwrap();
        let rel = (path.arc_length - truth_len).abs() / truth_len;
        assert!(
            rel < 0.05,
            "skeleton arc {} vs analytic {truth_len} (rel {rel})",
            path.arc_length
        );
    }

    #[test]
    fn rendered_width_matches_spec_on_straight_limbs() {
        let spec = LoopSpec {
            arterial_width: 9.0,
            venous_width: 13.0,
            ..LoopSpec::default()
        };
        let phantom = synth_image(&[spec.clone()], default_canvas(), false).unwrap();
        let edt = distance_transform(&phantom.mask);
        let r0 = spec.apex_center[0];
        let c_left = spec.apex_center[1] - spec.limb_spacing / 2.0;
        let c_right = spec.apex_center[1] + spec.limb_spacing / 2.0;
        // Mid-limb samples on the analytic centerline.
        for dy in [20.0, 30.0, 40.0] {
            let w_left = 2.0 * edt.bilinear(r0 + dy, c_left);
            let w_right = 2.0 * edt.bilinear(r0 + dy, c_right);
            assert!(
                (w_left - 9.0).abs() <= 1.0,
                "left width {w_left} at dy {dy}"
            );
            assert!(
                (w_right - 13.0).abs() <= 1.0,
                "right width {w_right} at dy {dy}"
            );
        }
    }

    #[test]
    fn tortuous_spec_classifies_tortuous() {
        // Two full sine periods over the limbs; narrow tubes keep the
        // curvature radius above the capsule half-width so the rendering
        // does not self-touch.
        let spec = LoopSpec {
            limb_length: 160.0,
            apex_center: [26.0, 62.0],
            limb_spacing: 28.0,
            arterial_width: 6.0,
            venous_width: 6.0,
            apex_width: 8.0,
            tortuosity_amp: 38.0,
            tortuosity_wavelength: 80.0,
            ..LoopSpec::default()
        };
        let phantom = synth_image(&[spec], (128, 200), false).unwrap();
        assert!(
            phantom.truths[0].limb_tortuosity >= 2.0,
            "analytic limb tortuosity {} below 2.0",
            phantom.truths[0].limb_tortuosity
        );
        assert_eq!(phantom.truths[0].class, MorphClass::Tortuous);
    }

    #[test]
    fn overlapping_loops_rejected() {
        let a = LoopSpec::default();
        let b = LoopSpec {
            apex_center: [47.0, 66.0],
            ..LoopSpec::default()
        };
        assert!(synth_image(&[a.clone(), b.clone()], (200, 200), false).is_err());
        assert!(synth_image(&[a, b], (200, 200), true).is_ok());
    }

    #[test]
    fn video_static_without_transits_or_jitter() {
        let spec = VideoSpec {
            loop_spec: LoopSpec::default(),
            canvas: [150, 160],
            transits: vec![],
            n_frames: 4,
            fps: 20.0,
            jitter: vec![],
            texture_amp: 0.0,
        };
        let video = synth_video(&spec).unwrap();
        let first = video.sequence.frames()[0].data();
        for f in video.sequence.frames() {
            assert_eq!(f.data(), first);
        }
    }

    #[test]
    fn video_transit_truth_arithmetic() {
        let spec = VideoSpec {
            loop_spec: LoopSpec::default(),
            canvas: [150, 160],
            transits: vec![TransitSpec {
                speed_px_per_frame: 1.0,
                start_frame: 10,
                blob_sigma: 2.5,
                blob_amplitude: 0.3,
                direction: Direction::Forward,
            }],
            n_frames: 200,
            fps: 20.0,
            jitter: vec![],
            texture_amp: 0.0,
        };
        let video = synth_video(&spec).unwrap();
        let t = &video.truth.transits[0];
        let expected_mid = 10.0 + video.truth.path_arc_length / 2.0;
        assert!((t.mid_crossing_frame - expected_mid).abs() < 1e-9);
        assert_eq!(t.speed_px_per_frame, 1.0);
    }

    #[test]
    fn video_same_spec_bit_identical() {
        let spec = VideoSpec {
            loop_spec: LoopSpec {
                noise_sigma: 0.05,
                seed: 9,
                ..LoopSpec::default()
            },
            canvas: [150, 160],
            transits: vec![TransitSpec {
                speed_px_per_frame: 2.0,
                start_frame: 5,
                blob_sigma: 2.0,
                blob_amplitude: 0.25,
                direction: Direction::Forward,
            }],
            n_frames: 60,
            fps: 20.0,
            jitter: vec![(0.0, 0.0); 60],
            texture_amp: 0.04,
        };
        let a = synth_video(&spec).unwrap();
        let b = synth_video(&spec).unwrap();
        for (fa, fb) in a.sequence.frames().iter().zip(b.sequence.frames()) {
            assert_eq!(fa.data(), fb.data());
        }
    }

    #[test]
    fn video_rejects_unreachable_transit() {
        let spec = VideoSpec {
            loop_spec: LoopSpec::default(),
            canvas: [150, 160],
            transits: vec![TransitSpec {
                speed_px_per_frame: 0.5,
                start_frame: 90,
                blob_sigma: 2.0,
                blob_amplitude: 0.3,
                direction: Direction::Forward,
            }],
            n_frames: 100,
            fps: 20.0,
            jitter: vec![],
            texture_amp: 0.0,
        };
        assert!(synth_video(&spec).is_err());
    }
}
