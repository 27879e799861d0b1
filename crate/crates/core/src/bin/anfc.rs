//! Command-line surface of the nailfold capillary analysis pipeline.
//!
//! Exit codes: 0 success, 2 invalid input, 3 internal error. Output files
//! are written atomically; failures never leave partial results.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use anfc::analysis::ingest_keypoints;
use anfc::config::PipelineConfig;
use anfc::error::Error;
use anfc::flow::FrameSequence;
use anfc::imaging::Point;
use anfc::phantom::{synth_image, synth_video, LoopSpec, VideoSpec};
use anfc::pipeline::{analyze_image, analyze_video};
use anfc::report::{
    build_subject_report, classification_metrics, detection_sensitivity, pixel_sensitivity,
    regression_metrics_nullable,
};
use anfc::segmentation::SegmentationBackend;

#[derive(Parser)]
#[command(name = "anfc", version, about = "Nailfold capillary image and video analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a capillaroscopy image and write an image report.
    AnalyzeImage {
        /// Input image (8-bit PNG/PGM/PPM).
        image: PathBuf,
        /// Externally produced vessel mask (>= 128 means vessel); without
        /// it the native vesselness backend segments the image.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Externally produced keypoints JSON.
        #[arg(long)]
        keypoints: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output report path (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Seed recorded in the report (overrides the config value).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Analyze a capillary video (frame directory or raw descriptor JSON).
    AnalyzeVideo {
        /// Frame directory or raw planar descriptor .json.
        video: PathBuf,
        /// Vessel mask matching the frame dimensions.
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Analyze this instance id instead of the largest kept instance.
        #[arg(long)]
        instance: Option<usize>,
    },
    /// Generate a phantom image or video with ground truth.
    Synth {
        /// Phantom spec JSON ({"image": ...} or {"video": ...}).
        spec: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate predictions against ground truth.
    Eval {
        #[arg(long, value_enum)]
        mode: EvalMode,
        /// Predictions file (JSON, or a mask image for segmentation mode).
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth file (same format as --pred).
        #[arg(long)]
        truth: PathBuf,
        /// Match radius in px (detection mode).
        #[arg(long, default_value_t = 10.0)]
        radius: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Analyze a batch of images and write per-image plus subject reports.
    Batch {
        /// Input images.
        images: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for the per-image reports.
        #[arg(long)]
        out: PathBuf,
        /// Subject id; enables the aggregated subject report.
        #[arg(long)]
        subject: Option<String>,
    },
}

#[derive(Copy, Clone, ValueEnum)]
enum EvalMode {
    Regression,
    Classification,
    Detection,
    Segmentation,
}

fn load_config(path: &Option<PathBuf>) -> Result<PipelineConfig, Error> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    text.push('\n');
    anfc::io::write_atomic(path, text.as_bytes())
}

fn cmd_analyze_image(
    image: &Path,
    mask: Option<PathBuf>,
    keypoints: Option<PathBuf>,
    config: Option<PathBuf>,
    out: &Path,
    seed: Option<u64>,
) -> Result<(), Error> {
    let mut cfg = load_config(&config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let img = anfc::io::load_gray(image)?;
    let backend = match mask {
        Some(path) => SegmentationBackend::External(path),
        None => SegmentationBackend::Vesselness(cfg.vesselness.clone()),
    };
    let ingested = match keypoints {
        Some(path) => {
            let parsed = ingest_keypoints(&path, img.width(), img.height())?;
            for w in &parsed.warnings {
                eprintln!("warning: {w}");
            }
            Some(parsed.sets)
        }
        None => None,
    };
    let report = analyze_image(&img, &backend, ingested.as_deref(), &cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write_json(out, &report)
}

fn cmd_analyze_video(
    video: &Path,
    mask: &Path,
    config: Option<PathBuf>,
    out: &Path,
    instance: Option<usize>,
) -> Result<(), Error> {
    let cfg = load_config(&config)?;
    let source = anfc::io::load_video(video)?;
    for w in &source.warnings {
        eprintln!("warning: {w}");
    }
    let seq = FrameSequence::new(source.frames, source.fps)?;
    let mask = anfc::io::load_mask(mask)?;
    let report = analyze_video(&seq, &mask, instance, &cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write_json(out, &report)
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
enum SynthSpec {
    Image {
        canvas: [usize; 2],
        loops: Vec<LoopSpec>,
        #[serde(default)]
        allow_overlap: bool,
    },
    Video(VideoSpec),
}

fn cmd_synth(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<(), Error> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let spec: SynthSpec = serde_json::from_str(&text)
        .map_err(|e| Error::parse(spec_path.display().to_string(), e.to_string()))?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    match spec {
        SynthSpec::Image {
            canvas,
            mut loops,
            allow_overlap,
        } => {
            if let Some(seed) = seed {
                for l in &mut loops {
                    l.seed = seed;
                }
            }
            let phantom = synth_image(&loops, (canvas[0], canvas[1]), allow_overlap)?;
            anfc::io::save_gray(&out.join("phantom.png"), &phantom.image)?;
            anfc::io::save_mask(&out.join("mask.png"), &phantom.mask)?;
            write_json(&out.join("truth.json"), &phantom.truths)?;
        }
        SynthSpec::Video(mut vspec) => {
            if let Some(seed) = seed {
                vspec.loop_spec.seed = seed;
            }
            let video = synth_video(&vspec)?;
            let frames_dir = out.join("frames");
            std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
            for (i, frame) in video.sequence.frames().iter().enumerate() {
                anfc::io::save_gray(&frames_dir.join(format!("frame_{i:06}.png")), frame)?;
            }
            write_json(
                &frames_dir.join("video.json"),
                &serde_json::json!({ "fps": video.sequence.fps() }),
            )?;
            anfc::io::save_mask(&out.join("mask.png"), &video.mask)?;
            write_json(&out.join("truth.json"), &video.truth)?;
        }
    }
    Ok(())
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

fn cmd_eval(mode: EvalMode, pred: &Path, truth: &Path, radius: f64, out: &Path) -> Result<(), Error> {
    let metrics = match mode {
        EvalMode::Regression => {
            let p: Vec<Option<f64>> = load_json(pred)?;
            let t: Vec<Option<f64>> = load_json(truth)?;
            let (mae, rmse) = regression_metrics_nullable(&p, &t)?;
            println!("metric   value");
            println!("MAE      {mae:.6}");
            println!("RMSE     {rmse:.6}");
            serde_json::json!({ "mode": "regression", "mae": mae, "rmse": rmse, "n": p.len() })
        }
        EvalMode::Classification => {
            let p: Vec<String> = load_json(pred)?;
            let t: Vec<String> = load_json(truth)?;
            let m = classification_metrics(&p, &t)?;
            println!("class        precision  recall  f1  support");
            for c in &m.per_class {
                println!(
                    "{:<12} {:.4}     {:.4}  {:.4}  {}",
                    c.class, c.precision, c.recall, c.f1, c.support
                );
            }
            println!("accuracy {:.4}", m.accuracy);
            println!(
                "weighted precision {:.4}  recall {:.4}  f1 {:.4}",
                m.weighted_precision, m.weighted_recall, m.weighted_f1
            );
            serde_json::to_value(&m).map_err(|e| Error::parse("metrics", e.to_string()))?
        }
        EvalMode::Detection => {
            let p: Vec<[i64; 2]> = load_json(pred)?;
            let t: Vec<[i64; 2]> = load_json(truth)?;
            let to_points = |raw: Vec<[i64; 2]>| -> Result<Vec<Point>, Error> {
                raw.into_iter()
                    .map(|[r, c]| {
                        if r < 0 || c < 0 {
                            Err(Error::InvalidInput(format!("negative point ({r}, {c})")))
                        } else {
                            Ok(Point::new(r as usize, c as usize))
                        }
                    })
                    .collect()
            };
            let s = detection_sensitivity(&to_points(p)?, &to_points(t)?, radius)?;
            println!("sensitivity {s:.4} (radius {radius} px)");
            serde_json::json!({ "mode": "detection", "sensitivity": s, "radius_px": radius })
        }
        EvalMode::Segmentation => {
            let p = anfc::io::load_mask(pred)?;
            let t = anfc::io::load_mask(truth)?;
            let s = pixel_sensitivity(&p, &t)?;
            println!("pixel sensitivity {s:.4}");
            serde_json::json!({ "mode": "segmentation", "sensitivity": s })
        }
    };
    write_json(out, &metrics)
}

fn cmd_batch(
    images: &[PathBuf],
    config: Option<PathBuf>,
    out: &Path,
    subject: Option<String>,
) -> Result<(), Error> {
    if images.is_empty() {
        return Err(Error::InvalidInput("batch needs at least one image".into()));
    }
    let cfg = load_config(&config)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut sorted: Vec<PathBuf> = images.to_vec();
    sorted.sort();
    let mut feature_sets = Vec::with_capacity(sorted.len());
    for image_path in &sorted {
        let img = anfc::io::load_gray(image_path)?;
        // Sibling "<stem>.mask.png" files take precedence over the native
        // vesselness backend.
        let sibling = image_path.with_extension("mask.png");
        let backend = if sibling.exists() {
            SegmentationBackend::External(sibling)
        } else {
            SegmentationBackend::Vesselness(cfg.vesselness.clone())
        };
        let report = analyze_image(&img, &backend, None, &cfg)?;
        let stem = image_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image");
        write_json(&out.join(format!("{stem}.report.json")), &report)?;
        feature_sets.push(report.features);
    }
    if let Some(subject) = subject {
        let report = build_subject_report(&subject, feature_sets, &cfg.normal_ranges)?;
        write_json(&out.join("subject.json"), &report)?;
    }
    Ok(())
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::AnalyzeImage {
            image,
            mask,
            keypoints,
            config,
            out,
            seed,
        } => cmd_analyze_image(&image, mask, keypoints, config, &out, seed),
        Command::AnalyzeVideo {
            video,
            mask,
            config,
            out,
            instance,
        } => cmd_analyze_video(&video, &mask, config, &out, instance),
        Command::Synth { spec, out, seed } => cmd_synth(&spec, &out, seed),
        Command::Eval {
            mode,
            pred,
            truth,
            radius,
            out,
        } => cmd_eval(mode, &pred, &truth, radius, &out),
        Command::Batch {
            images,
            config,
            out,
            subject,
        } => cmd_batch(&images, config, &out, subject),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_invalid_input() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
