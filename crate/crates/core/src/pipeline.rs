//! End-to-end pipeline composition shared by the CLI, the bindings and the
//! acceptance suite: image morphometry and video velocimetry as single
//! calls producing report structures.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    aggregate, classify, density, detect_keypoints, limb_tortuosity_index, match_keypoints,
    measure_diameters, CapillaryMeasurement, ImageFeatures, KeypointSet,
};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::flow::{analyze_video as flow_analyze_video, FrameSequence, FrameShift, WbcEvent};
use crate::imaging::{distance_transform, standardize, BinaryMask, GrayImage, Point};
use crate::report::{diagnose, DiagnosisFlags};
use crate::segmentation::{
    extract_instances, segment, CapillaryInstance, InstanceStatus, SegmentationBackend,
};
use crate::skeleton::{graphify, main_path, prune, thin, CapillaryPath, Skeleton};

pub const IMAGE_REPORT_SCHEMA: &str = "anfc-image/1";
pub const VIDEO_REPORT_SCHEMA: &str = "anfc-video/1";

/// Per-capillary entry of an image report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapillaryRecord {
    pub id: usize,
    pub status: InstanceStatus,
    pub area_px: usize,
    pub clarity: f64,
    /// [min_row, min_col, max_row, max_col]
    pub bounding_box: [usize; 4],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measurement: Option<CapillaryMeasurement>,
}

/// Image-level analysis report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageReport {
    pub schema: String,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub degenerate_standardization: bool,
    pub capillaries: Vec<CapillaryRecord>,
    pub features: ImageFeatures,
    pub flags: DiagnosisFlags,
    pub warnings: Vec<String>,
}

/// Video-level analysis report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VideoReport {
    pub schema: String,
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub fps: f64,
    pub instance_id: usize,
    pub wbc_count: usize,
    pub events: Vec<WbcEvent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_speed_px_per_frame: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_speed_um_per_s: Option<f64>,
    pub translations: Vec<FrameShift>,
    pub profile_frames: usize,
    pub profile_samples: usize,
    pub warnings: Vec<String>,
}

/// Skeleton, graph and main path of one instance, extracted from the
/// full-mask skeleton.
fn instance_path(
    skeleton: &Skeleton,
    instance: &CapillaryInstance,
    junction_merge: f64,
) -> Result<CapillaryPath> {
    let pixels: Vec<Point> = instance
        .pixels
        .iter()
        .copied()
        .filter(|p| skeleton.get(p.row, p.col))
        .collect();
    if pixels.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let sub = Skeleton::from_points(skeleton.width(), skeleton.height(), &pixels);
    main_path(&graphify(&sub, junction_merge))
}

/// Run the image morphometry pipeline.
///
/// `ingested` keypoints (when given) replace native detection and are
/// matched to instances; otherwise keypoints are detected on each kept
/// instance's skeleton path.
pub fn analyze_image(
    img: &GrayImage,
    backend: &SegmentationBackend,
    ingested: Option<&[KeypointSet]>,
    config: &PipelineConfig,
) -> Result<ImageReport> {
    config.validate()?;
    let mut warnings: Vec<String> = Vec::new();

    let [p_low, p_high] = config.standardize_percentiles;
    let standardized = standardize(img, p_low, p_high)?;
    if standardized.degenerate {
        warnings.push("standardization degenerate: constant input image".into());
    }
    let work = &standardized.image;

    let mask = segment(work, backend)?;
    let (min_area, max_area) = config.area_gates(img.width(), img.height());
    let mut instances = extract_instances(&mask, min_area, max_area)?;
    let counting = config.counting_rect(img.width(), img.height())?;
    crate::segmentation::clarity_filter(&mut instances, work, config.min_contrast, &counting);

    let edt = distance_transform(&mask);
    let skeleton = prune(&thin(&mask), config.min_spur);

    // Paths for kept instances.
    let mut paths: Vec<Option<CapillaryPath>> = vec![None; instances.len()];
    for (i, inst) in instances.iter_mut().enumerate() {
        if !inst.status.is_kept() {
            continue;
        }
        match instance_path(&skeleton, inst, config.junction_merge) {
            Ok(path) => paths[i] = Some(path),
            Err(e) => {
                warnings.push(format!("instance {}: skeleton path failed: {e}", inst.id));
                inst.status = InstanceStatus::Excluded(crate::segmentation::ExclusionReason::Unmatched);
            }
        }
    }

    // Assign keypoints: ingested sets are matched; native sets are
    // detected on each kept instance.
    let mut assigned: Vec<Option<KeypointSet>> = vec![None; instances.len()];
    match ingested {
        Some(sets) => {
            let matches = match_keypoints(sets, &mut instances, config.match_dilation);
            for (instance_id, set) in matches {
                let idx = instances.iter().position(|i| i.id == instance_id).unwrap();
                assigned[idx] = Some(set);
            }
        }
        None => {
            for (i, inst) in instances.iter_mut().enumerate() {
                if !inst.status.is_kept() {
                    continue;
                }
                let path = paths[i].as_ref().unwrap();
                match detect_keypoints(path, &edt) {
                    Ok(set) => assigned[i] = Some(set),
                    Err(e) => {
                        warnings.push(format!("instance {}: keypoint detection failed: {e}", inst.id));
                        inst.status =
                            InstanceStatus::Excluded(crate::segmentation::ExclusionReason::Unmatched);
                    }
                }
            }
        }
    }

    // Classify and measure kept, matched instances.
    let mut measurements: Vec<CapillaryMeasurement> = Vec::new();
    let mut apexes: Vec<Point> = Vec::new();
    for (i, inst) in instances.iter_mut().enumerate() {
        if !inst.status.is_kept() {
            continue;
        }
        let (Some(path), Some(keypoints)) = (paths[i].as_ref(), assigned[i].clone()) else {
            continue;
        };
        let graph = {
            let pixels: Vec<Point> = inst
                .pixels
                .iter()
                .copied()
                .filter(|p| skeleton.get(p.row, p.col))
                .collect();
            let sub = Skeleton::from_points(skeleton.width(), skeleton.height(), &pixels);
            graphify(&sub, config.junction_merge)
        };
        let morph = classify(&graph, path, config.tau_tortuous, keypoints.scores.as_ref());
        match measure_diameters(&keypoints, &edt, path) {
            Ok(diameters) => {
                apexes.push(keypoints.apex);
                measurements.push(CapillaryMeasurement::new(
                    inst.id,
                    keypoints,
                    morph,
                    limb_tortuosity_index(path),
                    diameters,
                    path.arc_length,
                    &config.scale,
                ));
            }
            Err(e) => {
                warnings.push(format!("instance {}: measurement failed: {e}", inst.id));
                inst.status = InstanceStatus::Excluded(crate::segmentation::ExclusionReason::Unmatched);
            }
        }
    }

    let n_total = instances.len();
    let density_value = density(&apexes, &counting, &config.scale);
    let features = aggregate(&measurements, n_total, density_value, config.min_clear, &config.scale)?;
    let flags = diagnose(&features, &config.normal_ranges);

    let capillaries = instances
        .iter()
        .map(|inst| {
            let measurement = measurements.iter().find(|m| m.instance_id == inst.id).cloned();
            CapillaryRecord {
                id: inst.id,
                status: inst.status,
                area_px: inst.area(),
                clarity: inst.clarity_score,
                bounding_box: [
                    inst.bounding_box.min_row,
                    inst.bounding_box.min_col,
                    inst.bounding_box.max_row,
                    inst.bounding_box.max_col,
                ],
                measurement,
            }
        })
        .collect();

    Ok(ImageReport {
        schema: IMAGE_REPORT_SCHEMA.to_string(),
        width: img.width(),
        height: img.height(),
        seed: config.seed,
        degenerate_standardization: standardized.degenerate,
        capillaries,
        features,
        flags,
        warnings,
    })
}

/// Run the video velocimetry pipeline on the main path of the largest kept
/// instance of `mask` (or of `instance_override` when given).
pub fn analyze_video(
    seq: &FrameSequence,
    mask: &BinaryMask,
    instance_override: Option<usize>,
    config: &PipelineConfig,
) -> Result<VideoReport> {
    config.validate()?;
    let mut warnings = Vec::new();
    let (min_area, max_area) = config.area_gates(mask.width(), mask.height());
    let instances = extract_instances(mask, min_area, max_area)?;
    let kept: Vec<&CapillaryInstance> = instances.iter().filter(|i| i.status.is_kept()).collect();
    if kept.is_empty() {
        return Err(Error::InvalidInput(
            "mask holds no capillary instance within the area gates".into(),
        ));
    }
    let chosen = match instance_override {
        Some(id) => *kept.iter().find(|i| i.id == id).ok_or_else(|| {
            Error::InvalidInput(format!("instance {id} is not a kept instance of the mask"))
        })?,
        None => *kept
            .iter()
            .max_by_key(|i| (i.area(), std::cmp::Reverse(i.id)))
            .unwrap(),
    };

    let skeleton = prune(&thin(mask), config.min_spur);
    let path = instance_path(&skeleton, chosen, config.junction_merge)?;
    let analysis = flow_analyze_video(seq, mask, &path, &config.video, &config.scale)?;
    if analysis.translations.iter().any(|t| t.low_confidence) {
        warnings.push("stabilization had low-confidence frames".into());
    }
    Ok(VideoReport {
        schema: VIDEO_REPORT_SCHEMA.to_string(),
        width: seq.width(),
        height: seq.height(),
        n_frames: seq.len(),
        fps: seq.fps(),
        instance_id: chosen.id,
        wbc_count: analysis.wbc_count,
        events: analysis.events,
        mean_speed_px_per_frame: analysis.mean_speed_px_per_frame,
        mean_speed_um_per_s: analysis.mean_speed_um_per_s,
        translations: analysis.translations,
        profile_frames: analysis.profile_frames,
        profile_samples: analysis.profile_samples,
        warnings,
    })
}
