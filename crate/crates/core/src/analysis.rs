//! Per-capillary analysis: keypoint detection and ingestion, keypoint to
//! instance matching, three-way morphology classification, diameter and
//! length measurement, density and per-image aggregation.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{Point, ScalarField, ScaleConfig};
use crate::report::{NullReason, Nullable};
use crate::segmentation::{CapillaryInstance, ExclusionReason, InstanceStatus, Rect};
use crate::skeleton::{resample_chain, CapillaryPath, SkeletonGraph};

/// Maximum keypoint-to-path distance before measurement refuses.
pub const KEYPOINT_PATH_LIMIT: f64 = 15.0;

/// Fraction of a limb's arc, measured from its end, over which limb widths
/// are averaged.
const LIMB_TERMINAL_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeypointSource {
    Native,
    Ingested,
}

/// External per-class scores accompanying ingested keypoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassScores {
    pub normal: f64,
    pub crossing: f64,
    pub tortuous: f64,
}

/// Apex plus arterial- and venous-limb keypoints of one capillary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeypointSet {
    pub apex: Point,
    pub arterial_limb: Point,
    pub venous_limb: Point,
    pub source: KeypointSource,
    /// Set when the path degenerates to a single limb (apex at a path end).
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<ClassScores>,
}

/// Three-way morphology class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MorphClass {
    Normal,
    Crossing,
    Tortuous,
}

impl MorphClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            MorphClass::Normal => "normal",
            MorphClass::Crossing => "crossing",
            MorphClass::Tortuous => "tortuous",
        }
    }
}

/// Index of the apex position in a path: smallest row, ties to smallest col.
pub fn apex_index(path: &CapillaryPath) -> usize {
    path.points
        .iter()
        .enumerate()
        .min_by_key(|(_, p)| **p)
        .map(|(i, _)| i)
        .unwrap()
}

/// Tortuosity index used for classification: the larger arc-to-chord ratio
/// of the two limbs obtained by splitting the path at its apex. A straight
/// hairpin has limbs near 1 even though the whole loop's arc-to-chord ratio
/// is large, so the per-limb ratio is the discriminative quantity.
pub fn limb_tortuosity_index(path: &CapillaryPath) -> f64 {
    if path.points.len() < 2 {
        return 1.0;
    }
    let apex = apex_index(path);
    let mut worst = f64::NEG_INFINITY;
    for half in [&path.points[..=apex], &path.points[apex..]] {
        if half.len() < 2 {
            continue;
        }
        let arc = crate::skeleton::chain_arc_length(half);
        let chord = half[0].distance_to(*half.last().unwrap());
        let t = if chord == 0.0 { f64::INFINITY } else { arc / chord };
        worst = worst.max(t);
    }
    if worst == f64::NEG_INFINITY {
        1.0
    } else {
        worst
    }
}

fn nearest_path_point(path: &CapillaryPath, target: Point) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (i, p) in path.points.iter().enumerate() {
        let d = p.distance_to(target);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Mean limb width (2x distance-field value) over the terminal fraction of
/// one limb of the path, resampled at unit arc steps.
///
/// The limb is the half of the path on `end`'s side of the apex; for
/// degenerate single-limb paths, the whole path stands in for both limbs.
fn limb_mean_width(path: &CapillaryPath, edt: &ScalarField, from_start: bool) -> f64 {
    let apex = apex_index(path);
    // Orient each limb to run from its path end toward the apex.
    let half: Vec<Point> = if from_start {
        if apex == 0 {
            path.points.clone()
        } else {
            path.points[..=apex].to_vec()
        }
    } else if apex == path.points.len() - 1 {
        path.points.iter().rev().copied().collect()
    } else {
        path.points[apex..].iter().rev().copied().collect()
    };
    let samples = resample_chain(&half, 1.0);
    let arc = crate::skeleton::chain_arc_length(&half);
    let keep = ((arc * LIMB_TERMINAL_FRACTION).floor() as usize + 1).min(samples.len()).max(1);
    let mut acc = 0.0;
    for s in samples.iter().take(keep) {
        acc += 2.0 * edt.bilinear(s.row, s.col);
    }
    acc / keep as f64
}

/// Detect apex and limb keypoints on a capillary path.
///
/// The apex is the topmost path point (ties to the smaller column); the two
/// path ends are the limb points, with the narrower limb labelled arterial
/// (ties to the smaller column).
pub fn detect_keypoints(path: &CapillaryPath, edt: &ScalarField) -> Result<KeypointSet> {
    if path.points.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let first = path.points[0];
    let last = *path.points.last().unwrap();
    if path.points.len() >= 3 {
        let interior_min_row = path.points[1..path.points.len() - 1]
            .iter()
            .map(|p| p.row)
            .min()
            .unwrap();
        if first.row < interior_min_row && last.row < interior_min_row {
            return Err(Error::InvalidLoopOrientation);
        }
    }
    let apex = path.points[apex_index(path)];
    let degenerate = apex == first || apex == last;

    let width_start = limb_mean_width(path, edt, true);
    let width_end = limb_mean_width(path, edt, false);
    let start_is_arterial = if width_start < width_end {
        true
    } else if width_end < width_start {
        false
    } else {
        (first.col, first.row) <= (last.col, last.row)
    };
    let (arterial_limb, venous_limb) = if start_is_arterial { (first, last) } else { (last, first) };
    Ok(KeypointSet {
        apex,
        arterial_limb,
        venous_limb,
        source: KeypointSource::Native,
        degenerate,
        scores: None,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KeypointEntry {
    apex: [i64; 2],
    arterial: [i64; 2],
    venous: [i64; 2],
    #[serde(default)]
    scores: Option<ClassScores>,
}

/// Parsed keypoint ingestion result: accepted sets plus per-entry warnings
/// for rejected records.
pub struct IngestedKeypoints {
    pub sets: Vec<KeypointSet>,
    pub warnings: Vec<String>,
}

/// Ingest externally produced keypoints (JSON array; see the repo README
/// for the schema). Out-of-bounds entries are dropped with a warning.
pub fn ingest_keypoints(path: &Path, width: usize, height: usize) -> Result<IngestedKeypoints> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries: Vec<KeypointEntry> = serde_json::from_str(&text)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let mut sets = Vec::new();
    let mut warnings = Vec::new();
    let in_bounds = |p: &[i64; 2]| p[0] >= 0 && p[1] >= 0 && (p[0] as usize) < height && (p[1] as usize) < width;
    for (i, e) in entries.iter().enumerate() {
        if !in_bounds(&e.apex) || !in_bounds(&e.arterial) || !in_bounds(&e.venous) {
            warnings.push(format!("keypoint entry {i}: point out of bounds; entry dropped"));
            continue;
        }
        if e.apex[0] > e.arterial[0] || e.apex[0] > e.venous[0] {
            warnings.push(format!(
                "keypoint entry {i}: apex below a limb point; entry dropped"
            ));
            continue;
        }
        sets.push(KeypointSet {
            apex: Point::new(e.apex[0] as usize, e.apex[1] as usize),
            arterial_limb: Point::new(e.arterial[0] as usize, e.arterial[1] as usize),
            venous_limb: Point::new(e.venous[0] as usize, e.venous[1] as usize),
            source: KeypointSource::Ingested,
            degenerate: false,
            scores: e.scores,
        });
    }
    Ok(IngestedKeypoints { sets, warnings })
}

/// Greedy one-to-one assignment of keypoint sets to kept instances.
///
/// A set is a candidate for an instance when its apex falls inside the
/// instance's bounding box dilated by `dilation` px; candidates are
/// assigned in increasing apex-to-region distance (ties to the lower
/// instance id). Kept instances left unmatched are excluded as `Unmatched`.
pub fn match_keypoints(
    sets: &[KeypointSet],
    instances: &mut [CapillaryInstance],
    dilation: usize,
) -> Vec<(usize, KeypointSet)> {
    struct Candidate {
        distance: f64,
        instance_idx: usize,
        set_idx: usize,
    }
    let mut candidates = Vec::new();
    for (ii, inst) in instances.iter().enumerate() {
        if !inst.status.is_kept() {
            continue;
        }
        let dilated = inst.bounding_box.dilated(dilation);
        for (si, set) in sets.iter().enumerate() {
            if !dilated.contains(set.apex) {
                continue;
            }
            let distance = inst
                .pixels
                .iter()
                .map(|p| p.distance_to(set.apex))
                .fold(f64::INFINITY, f64::min);
            candidates.push(Candidate {
                distance,
                instance_idx: ii,
                set_idx: si,
            });
        }
    }
    candidates.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .unwrap()
            .then(instances[a.instance_idx].id.cmp(&instances[b.instance_idx].id))
            .then(a.set_idx.cmp(&b.set_idx))
    });

    let mut instance_taken = vec![false; instances.len()];
    let mut set_taken = vec![false; sets.len()];
    let mut matches = Vec::new();
    for c in candidates {
        if instance_taken[c.instance_idx] || set_taken[c.set_idx] {
            continue;
        }
        instance_taken[c.instance_idx] = true;
        set_taken[c.set_idx] = true;
        matches.push((instances[c.instance_idx].id, sets[c.set_idx].clone()));
    }
    for (ii, inst) in instances.iter_mut().enumerate() {
        if inst.status.is_kept() && !instance_taken[ii] {
            inst.status = InstanceStatus::Excluded(ExclusionReason::Unmatched);
        }
    }
    matches.sort_by_key(|(id, _)| *id);
    matches
}

/// Classify one capillary.
///
/// External scores, when present, decide by argmax (ties resolved in the
/// order normal, crossing, tortuous). The native rule is: crossing when the
/// skeleton graph holds a crossing node, else tortuous when the limb
/// tortuosity index exceeds `tau_tortuous`, else normal.
pub fn classify(
    graph: &SkeletonGraph,
    path: &CapillaryPath,
    tau_tortuous: f64,
    external: Option<&ClassScores>,
) -> MorphClass {
    if let Some(scores) = external {
        let ordered = [
            (MorphClass::Normal, scores.normal),
            (MorphClass::Crossing, scores.crossing),
            (MorphClass::Tortuous, scores.tortuous),
        ];
        let mut best = ordered[0];
        for cand in &ordered[1..] {
            if cand.1 > best.1 {
                best = *cand;
            }
        }
        return best.0;
    }
    if graph.has_crossing() {
        MorphClass::Crossing
    } else if limb_tortuosity_index(path) > tau_tortuous {
        MorphClass::Tortuous
    } else {
        MorphClass::Normal
    }
}

/// Apical, arterial and venous widths in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diameters {
    pub apical_px: f64,
    pub arterial_px: f64,
    pub venous_px: f64,
}

/// Measure the three diameters from keypoints, the mask's distance field
/// and the skeleton path.
pub fn measure_diameters(
    keypoints: &KeypointSet,
    edt: &ScalarField,
    path: &CapillaryPath,
) -> Result<Diameters> {
    for kp in [keypoints.apex, keypoints.arterial_limb, keypoints.venous_limb] {
        let (_, d) = nearest_path_point(path, kp);
        if d > KEYPOINT_PATH_LIMIT {
            return Err(Error::KeypointOffPath {
                row: kp.row as i64,
                col: kp.col as i64,
                distance: d,
                limit: KEYPOINT_PATH_LIMIT,
            });
        }
    }
    let (apex_idx, _) = nearest_path_point(path, keypoints.apex);
    let apex_pt = path.points[apex_idx];
    let apical_px = 2.0 * edt.bilinear(apex_pt.row as f64, apex_pt.col as f64);

    let first = path.points[0];
    let last = *path.points.last().unwrap();
    let arterial_at_start =
        keypoints.arterial_limb.distance_to(first) <= keypoints.arterial_limb.distance_to(last);
    let arterial_px = limb_mean_width(path, edt, arterial_at_start);
    let venous_px = limb_mean_width(path, edt, !arterial_at_start);
    Ok(Diameters {
        apical_px,
        arterial_px,
        venous_px,
    })
}

/// Capillaries per millimetre across the counting region: apexes inside the
/// region divided by the region width in mm.
pub fn density(apexes: &[Point], counting_region: &Rect, scale: &ScaleConfig) -> Nullable<f64> {
    match scale.microns_per_pixel {
        None => Nullable::null(NullReason::MissingScale),
        Some(mpp) => {
            let count = apexes.iter().filter(|p| counting_region.contains(**p)).count();
            let width_mm = counting_region.width() as f64 * mpp / 1000.0;
            Nullable::value(count as f64 / width_mm)
        }
    }
}

/// Everything measured for one kept capillary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapillaryMeasurement {
    pub instance_id: usize,
    pub keypoints: KeypointSet,
    pub morph: MorphClass,
    pub tortuosity_index: f64,
    pub apical_px: f64,
    pub arterial_px: f64,
    pub venous_px: f64,
    pub length_px: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub apical_um: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arterial_um: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub venous_um: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length_um: Option<f64>,
}

impl CapillaryMeasurement {
    pub fn new(
        instance_id: usize,
        keypoints: KeypointSet,
        morph: MorphClass,
        tortuosity_index: f64,
        diameters: Diameters,
        length_px: f64,
        scale: &ScaleConfig,
    ) -> Self {
        CapillaryMeasurement {
            instance_id,
            keypoints,
            morph,
            tortuosity_index,
            apical_px: diameters.apical_px,
            arterial_px: diameters.arterial_px,
            venous_px: diameters.venous_px,
            length_px,
            apical_um: scale.px_to_um(diameters.apical_px),
            arterial_um: scale.px_to_um(diameters.arterial_px),
            venous_um: scale.px_to_um(diameters.venous_px),
            length_um: scale.px_to_um(length_px),
        }
    }
}

/// Image-level features aggregated over kept capillaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageFeatures {
    pub n_total: usize,
    pub n_kept: usize,
    pub n_excluded: usize,
    pub crossing_portion: Nullable<f64>,
    pub tortuous_portion: Nullable<f64>,
    pub normal_portion: Nullable<f64>,
    pub density_per_mm: Nullable<f64>,
    pub mean_apical_px: Nullable<f64>,
    pub mean_arterial_px: Nullable<f64>,
    pub mean_venous_px: Nullable<f64>,
    pub mean_length_px: Nullable<f64>,
    pub mean_apical_um: Nullable<f64>,
    pub mean_arterial_um: Nullable<f64>,
    pub mean_venous_um: Nullable<f64>,
    pub mean_length_um: Nullable<f64>,
}

/// Aggregate per-capillary measurements into image-level features.
///
/// With fewer than `min_clear` kept capillaries every feature is null with
/// `InsufficientClearCapillaries`.
pub fn aggregate(
    measurements: &[CapillaryMeasurement],
    n_total: usize,
    density_per_mm: Nullable<f64>,
    min_clear: usize,
    scale: &ScaleConfig,
) -> Result<ImageFeatures> {
    if min_clear == 0 {
        return Err(Error::InvalidParameter("min_clear must be at least 1".into()));
    }
    let n_kept = measurements.len();
    let n_excluded = n_total.saturating_sub(n_kept);

    if n_kept < min_clear {
        let null = || Nullable::null(NullReason::InsufficientClearCapillaries);
        return Ok(ImageFeatures {
            n_total,
            n_kept,
            n_excluded,
            crossing_portion: null(),
            tortuous_portion: null(),
            normal_portion: null(),
            density_per_mm: null(),
            mean_apical_px: null(),
            mean_arterial_px: null(),
            mean_venous_px: null(),
            mean_length_px: null(),
            mean_apical_um: null(),
            mean_arterial_um: null(),
            mean_venous_um: null(),
            mean_length_um: null(),
        });
    }

    let count_class = |class: MorphClass| measurements.iter().filter(|m| m.morph == class).count();
    let mean = |f: fn(&CapillaryMeasurement) -> f64| {
        measurements.iter().map(f).sum::<f64>() / n_kept as f64
    };
    let n = n_kept as f64;
    let to_um = |v: Nullable<f64>| match (scale.microns_per_pixel, v) {
        (Some(mpp), Nullable::Value(px)) => Nullable::value(px * mpp),
        (None, _) => Nullable::null(NullReason::MissingScale),
        (_, other) => other,
    };
    let mean_apical_px = Nullable::value(mean(|m| m.apical_px));
    let mean_arterial_px = Nullable::value(mean(|m| m.arterial_px));
    let mean_venous_px = Nullable::value(mean(|m| m.venous_px));
    let mean_length_px = Nullable::value(mean(|m| m.length_px));
    Ok(ImageFeatures {
        n_total,
        n_kept,
        n_excluded,
        crossing_portion: Nullable::value(count_class(MorphClass::Crossing) as f64 / n),
        tortuous_portion: Nullable::value(count_class(MorphClass::Tortuous) as f64 / n),
        normal_portion: Nullable::value(count_class(MorphClass::Normal) as f64 / n),
        density_per_mm,
        mean_apical_um: to_um(mean_apical_px),
        mean_arterial_um: to_um(mean_arterial_px),
        mean_venous_um: to_um(mean_venous_px),
        mean_length_um: to_um(mean_length_px),
        mean_apical_px,
        mean_arterial_px,
        mean_venous_px,
        mean_length_px,
    })
}
