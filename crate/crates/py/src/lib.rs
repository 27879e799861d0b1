//! Python bindings: the image and video pipelines, phantom generation and
//! the low-level kernels (distance transform, thinning, Radon) exposed as
//! plain functions over paths, JSON strings and flat buffers.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use anfc::config::PipelineConfig;
use anfc::error::Error;
use anfc::flow::{FrameSequence, SpatioTemporalProfile};
use anfc::imaging::BinaryMask;
use anfc::segmentation::SegmentationBackend;

fn to_py_err(e: Error) -> PyErr {
    if e.is_invalid_input() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn parse_config(config_json: Option<&str>) -> PyResult<PipelineConfig> {
    let config = match config_json {
        None => PipelineConfig::default(),
        Some(text) => serde_json::from_str(text)
            .map_err(|e| PyValueError::new_err(format!("config: {e}")))?,
    };
    config.validate().map_err(to_py_err)?;
    Ok(config)
}

fn to_json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

fn mask_from_bytes(mask: Vec<u8>, width: usize, height: usize) -> PyResult<BinaryMask> {
    BinaryMask::from_vec(width, height, mask.into_iter().map(|v| v != 0).collect())
        .map_err(to_py_err)
}

/// Crate version string.
#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Run the image morphometry pipeline on an image file; returns the report
/// as a JSON string. Without a mask path the native vesselness backend
/// segments the image.
#[pyfunction]
#[pyo3(signature = (image_path, mask_path=None, keypoints_path=None, config_json=None))]
fn analyze_image(
    image_path: &str,
    mask_path: Option<&str>,
    keypoints_path: Option<&str>,
    config_json: Option<&str>,
) -> PyResult<String> {
    let config = parse_config(config_json)?;
    let img = anfc::io::load_gray(Path::new(image_path)).map_err(to_py_err)?;
    let backend = match mask_path {
        Some(p) => SegmentationBackend::External(PathBuf::from(p)),
        None => SegmentationBackend::Vesselness(config.vesselness.clone()),
    };
    let ingested = match keypoints_path {
        Some(p) => Some(
            anfc::analysis::ingest_keypoints(Path::new(p), img.width(), img.height())
                .map_err(to_py_err)?
                .sets,
        ),
        None => None,
    };
    let report = anfc::pipeline::analyze_image(&img, &backend, ingested.as_deref(), &config)
        .map_err(to_py_err)?;
    to_json(&report)
}

/// Run the video velocimetry pipeline (frame directory or raw descriptor
/// JSON plus a mask file); returns the report as a JSON string.
#[pyfunction]
#[pyo3(signature = (video_path, mask_path, config_json=None, instance=None))]
fn analyze_video(
    video_path: &str,
    mask_path: &str,
    config_json: Option<&str>,
    instance: Option<usize>,
) -> PyResult<String> {
    let config = parse_config(config_json)?;
    let source = anfc::io::load_video(Path::new(video_path)).map_err(to_py_err)?;
    let seq = FrameSequence::new(source.frames, source.fps).map_err(to_py_err)?;
    let mask = anfc::io::load_mask(Path::new(mask_path)).map_err(to_py_err)?;
    let report =
        anfc::pipeline::analyze_video(&seq, &mask, instance, &config).map_err(to_py_err)?;
    to_json(&report)
}

/// Generate a phantom image (spec: `{"canvas":[W,H],"loops":[...]}`),
/// writing `phantom.png` and `mask.png` into `out_dir`; returns the ground
/// truth as a JSON string.
#[pyfunction]
fn synth_image(spec_json: &str, out_dir: &str) -> PyResult<String> {
    #[derive(serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Spec {
        canvas: [usize; 2],
        loops: Vec<anfc::phantom::LoopSpec>,
        #[serde(default)]
        allow_overlap: bool,
    }
    let spec: Spec =
        serde_json::from_str(spec_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let phantom = anfc::phantom::synth_image(&spec.loops, (spec.canvas[0], spec.canvas[1]), spec.allow_overlap)
        .map_err(to_py_err)?;
    let out = Path::new(out_dir);
    std::fs::create_dir_all(out).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    anfc::io::save_gray(&out.join("phantom.png"), &phantom.image).map_err(to_py_err)?;
    anfc::io::save_mask(&out.join("mask.png"), &phantom.mask).map_err(to_py_err)?;
    to_json(&phantom.truths)
}

/// Generate a phantom video (spec: the `VideoSpec` JSON schema), writing
/// `frames/` (with `video.json`) and `mask.png` into `out_dir`; returns the
/// ground truth as a JSON string.
#[pyfunction]
fn synth_video(spec_json: &str, out_dir: &str) -> PyResult<String> {
    let spec: anfc::phantom::VideoSpec =
        serde_json::from_str(spec_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let video = anfc::phantom::synth_video(&spec).map_err(to_py_err)?;
    let out = Path::new(out_dir);
    let frames_dir = out.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    for (i, frame) in video.sequence.frames().iter().enumerate() {
        anfc::io::save_gray(&frames_dir.join(format!("frame_{i:06}.png")), frame).map_err(to_py_err)?;
    }
    std::fs::write(
        frames_dir.join("video.json"),
        format!("{{\"fps\":{}}}\n", video.sequence.fps()),
    )
    .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    anfc::io::save_mask(&out.join("mask.png"), &video.mask).map_err(to_py_err)?;
    to_json(&video.truth)
}

/// Exact Euclidean distance transform of a row-major 0/1 mask; background
/// pixels map to 0 and the image border counts as background.
#[pyfunction]
fn distance_transform(mask: Vec<u8>, width: usize, height: usize) -> PyResult<Vec<f64>> {
    let mask = mask_from_bytes(mask, width, height)?;
    Ok(anfc::imaging::distance_transform(&mask).data)
}

/// Thin a row-major 0/1 mask to its skeleton (returned as 0/1 bytes).
#[pyfunction]
fn thin_mask(mask: Vec<u8>, width: usize, height: usize) -> PyResult<Vec<u8>> {
    let mask = mask_from_bytes(mask, width, height)?;
    let skel = anfc::skeleton::thin(&mask);
    Ok(skel
        .to_mask()
        .data()
        .iter()
        .map(|v| u8::from(*v))
        .collect())
}

/// Pixel-driven Radon transform of a row-major T x S profile; returns
/// (normalized values, hit counts, n_rho). Bin b holds rho = b - (n_rho-1)/2.
#[pyfunction]
fn radon_sinogram(
    profile: Vec<f64>,
    t_len: usize,
    s_len: usize,
    n_theta: usize,
) -> PyResult<(Vec<f64>, Vec<u32>, usize)> {
    if profile.len() != t_len * s_len {
        return Err(PyValueError::new_err(format!(
            "profile length {} does not match {t_len}x{s_len}",
            profile.len()
        )));
    }
    let profile = SpatioTemporalProfile {
        t_len,
        s_len,
        values: profile,
    };
    let sino = anfc::flow::radon(&profile, n_theta).map_err(to_py_err)?;
    Ok((sino.normalized(), sino.hits.clone(), sino.n_rho))
}

/// Mean absolute error and root mean square error.
#[pyfunction]
fn mae_rmse(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<(f64, f64)> {
    anfc::report::regression_metrics(&pred, &truth).map_err(to_py_err)
}

/// Grayscale an image file, segment it with the native vesselness backend
/// and write the mask; returns the vessel pixel count.
#[pyfunction]
#[pyo3(signature = (image_path, mask_out_path, config_json=None))]
fn segment_image(image_path: &str, mask_out_path: &str, config_json: Option<&str>) -> PyResult<usize> {
    let config = parse_config(config_json)?;
    let img = anfc::io::load_gray(Path::new(image_path)).map_err(to_py_err)?;
    let standardized = anfc::imaging::standardize(
        &img,
        config.standardize_percentiles[0],
        config.standardize_percentiles[1],
    )
    .map_err(to_py_err)?;
    let mask = anfc::segmentation::segment(
        &standardized.image,
        &SegmentationBackend::Vesselness(config.vesselness.clone()),
    )
    .map_err(to_py_err)?;
    anfc::io::save_mask(Path::new(mask_out_path), &mask).map_err(to_py_err)?;
    Ok(mask.count_foreground())
}

/// Build a subject report from per-image feature JSON blocks.
#[pyfunction]
#[pyo3(signature = (subject, image_features_json, config_json=None))]
fn subject_report(subject: &str, image_features_json: Vec<String>, config_json: Option<&str>) -> PyResult<String> {
    let config = parse_config(config_json)?;
    let features = image_features_json
        .iter()
        .map(|text| serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string())))
        .collect::<PyResult<Vec<anfc::analysis::ImageFeatures>>>()?;
    let report = anfc::report::build_subject_report(subject, features, &config.normal_ranges)
        .map_err(to_py_err)?;
    to_json(&report)
}

#[pymodule]
fn anfc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(version, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_image, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_video, m)?)?;
    m.add_function(wrap_pyfunction!(synth_image, m)?)?;
    m.add_function(wrap_pyfunction!(synth_video, m)?)?;
    m.add_function(wrap_pyfunction!(distance_transform, m)?)?;
    m.add_function(wrap_pyfunction!(thin_mask, m)?)?;
    m.add_function(wrap_pyfunction!(radon_sinogram, m)?)?;
    m.add_function(wrap_pyfunction!(mae_rmse, m)?)?;
    m.add_function(wrap_pyfunction!(segment_image, m)?)?;
    m.add_function(wrap_pyfunction!(subject_report, m)?)?;
    Ok(())
}
