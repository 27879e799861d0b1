//! File ingestion and emission: 8-bit PNG/PGM/PPM rasters, mask files,
//! frame-directory and raw planar video sources, atomic JSON output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::imaging::{to_grayscale, BinaryMask, GrayImage};

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Load an 8-bit grayscale or RGB raster and promote it to [0, 1] luma.
pub fn load_gray(path: &Path) -> Result<GrayImage> {
    let img = open_image(path)?;
    match img {
        image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let data = buf.into_raw().iter().map(|v| *v as f64 / 255.0).collect();
            GrayImage::from_vec(w, h, data)
        }
        image::DynamicImage::ImageLumaA8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let data = buf.into_raw().chunks_exact(2).map(|p| p[0] as f64 / 255.0).collect();
            GrayImage::from_vec(w, h, data)
        }
        image::DynamicImage::ImageRgb8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            to_grayscale(w, h, &buf.into_raw())
        }
        image::DynamicImage::ImageRgba8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let rgb: Vec<u8> = buf.into_raw().chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect();
            to_grayscale(w, h, &rgb)
        }
        other => Err(Error::Image {
            path: path.to_path_buf(),
            message: format!("unsupported pixel format {:?}; expected 8-bit gray or RGB", other.color()),
        }),
    }
}

/// Load a mask file; sample value >= 128 means vessel.
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<bool> = match img {
        image::DynamicImage::ImageLuma8(buf) => buf.into_raw().iter().map(|v| *v >= 128).collect(),
        image::DynamicImage::ImageLumaA8(buf) => {
            buf.into_raw().chunks_exact(2).map(|p| p[0] >= 128).collect()
        }
        image::DynamicImage::ImageRgb8(buf) => {
            let raw = buf.into_raw();
            let gray = to_grayscale(w, h, &raw)?;
            gray.data().iter().map(|v| (v * 255.0).round() as u8 >= 128).collect()
        }
        other => {
            return Err(Error::Image {
                path: path.to_path_buf(),
                message: format!("unsupported mask pixel format {:?}", other.color()),
            })
        }
    };
    BinaryMask::from_vec(w, h, data)
}

fn save_buffer(path: &Path, bytes: &[u8], width: usize, height: usize) -> Result<()> {
    image::save_buffer(
        path,
        bytes,
        width as u32,
        height as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Write a grayscale image as 8-bit PNG or PGM (format from extension).
pub fn save_gray(path: &Path, img: &GrayImage) -> Result<()> {
    let bytes: Vec<u8> = img.data().iter().map(|v| (v * 255.0).round() as u8).collect();
    save_buffer(path, &bytes, img.width(), img.height())
}

/// Write a mask as 0/255 PNG or PGM (format from extension).
pub fn save_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let bytes: Vec<u8> = mask.data().iter().map(|v| if *v { 255u8 } else { 0 }).collect();
    save_buffer(path, &bytes, mask.width(), mask.height())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FramesMeta {
    fps: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVideoMeta {
    width: usize,
    height: usize,
    frames: usize,
    fps: Option<f64>,
    /// Path of the planar 8-bit data file, relative to the descriptor.
    /// Defaults to the descriptor path with a `.raw` extension.
    raw: Option<String>,
}

/// Loaded video source: frames plus frame rate and any ingestion warnings.
pub struct VideoSource {
    pub frames: Vec<GrayImage>,
    pub fps: f64,
    pub warnings: Vec<String>,
}

/// Load a video from either a directory of sequentially numbered PNG/PGM
/// frames (with an optional `video.json` holding `{"fps":20}`) or a raw
/// planar descriptor JSON.
pub fn load_video(path: &Path) -> Result<VideoSource> {
    if path.is_dir() {
        load_frames_dir(path)
    } else if path.extension().is_some_and(|e| e == "json") {
        load_raw_video(path)
    } else {
        Err(Error::InvalidInput(format!(
            "video source {} is neither a frame directory nor a raw descriptor .json",
            path.display()
        )))
    }
}

fn load_frames_dir(dir: &Path) -> Result<VideoSource> {
    let mut warnings = Vec::new();
    let mut frame_paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e, "png" | "pgm" | "ppm"))
        })
        .collect();
    frame_paths.sort();
    if frame_paths.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "frame directory {} holds {} frame(s); at least 2 required",
            dir.display(),
            frame_paths.len()
        )));
    }

    let meta_path = dir.join("video.json");
    let fps = if meta_path.exists() {
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: FramesMeta = serde_json::from_str(&text)
            .map_err(|e| Error::parse(meta_path.display().to_string(), e.to_string()))?;
        match meta.fps {
            Some(f) if f > 0.0 => f,
            Some(f) => {
                return Err(Error::InvalidInput(format!("fps must be positive, got {f}")));
            }
            None => {
                warnings.push("metadata has no fps; defaulting to 20".into());
                20.0
            }
        }
    } else {
        warnings.push("no video.json metadata found; defaulting fps to 20".into());
        20.0
    };

    let mut frames = Vec::with_capacity(frame_paths.len());
    let mut dims: Option<(usize, usize)> = None;
    for p in &frame_paths {
        let frame = load_gray(p)?;
        match dims {
            None => dims = Some((frame.width(), frame.height())),
            Some((w, h)) => {
                if frame.width() != w || frame.height() != h {
                    return Err(Error::DimensionMismatch {
                        expected_width: w,
                        expected_height: h,
                        actual_width: frame.width(),
                        actual_height: frame.height(),
                    });
                }
            }
        }
        frames.push(frame);
    }
    Ok(VideoSource { frames, fps, warnings })
}

fn load_raw_video(meta_path: &Path) -> Result<VideoSource> {
    let mut warnings = Vec::new();
    let text = fs::read_to_string(meta_path).map_err(|e| Error::io(meta_path, e))?;
    let meta: RawVideoMeta = serde_json::from_str(&text)
        .map_err(|e| Error::parse(meta_path.display().to_string(), e.to_string()))?;
    let raw_path = match &meta.raw {
        Some(rel) => meta_path.parent().unwrap_or(Path::new(".")).join(rel),
        None => meta_path.with_extension("raw"),
    };
    let bytes = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let expected = meta.width * meta.height * meta.frames;
    if bytes.len() != expected {
        return Err(Error::InvalidInput(format!(
            "raw video {} holds {} bytes, expected {} ({}x{}x{})",
            raw_path.display(),
            bytes.len(),
            expected,
            meta.width,
            meta.height,
            meta.frames
        )));
    }
    let fps = match meta.fps {
        Some(f) if f > 0.0 => f,
        Some(f) => return Err(Error::InvalidInput(format!("fps must be positive, got {f}"))),
        None => {
            warnings.push("raw descriptor has no fps; defaulting to 20".into());
            20.0
        }
    };
    let frame_len = meta.width * meta.height;
    let frames = bytes
        .chunks_exact(frame_len)
        .map(|chunk| {
            GrayImage::from_vec(
                meta.width,
                meta.height,
                chunk.iter().map(|b| *b as f64 / 255.0).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VideoSource { frames, fps, warnings })
}

/// Write bytes atomically: temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
