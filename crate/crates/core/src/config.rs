//! Pipeline configuration: a single JSON file with strict unknown-key
//! rejection, since silent typos in thresholds are the main operational
//! hazard.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::VideoParams;
use crate::imaging::ScaleConfig;
use crate::report::NormalRanges;
use crate::segmentation::VesselnessParams;

/// Reference image area for the default area gates (native acquisition
/// size 1024 x 768); gates scale linearly with image area.
pub const NATIVE_AREA: f64 = 1024.0 * 768.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub scale: ScaleConfig,
    pub vesselness: VesselnessParams,
    /// Standardization percentiles (low, high).
    pub standardize_percentiles: [f64; 2],
    /// Instance area gates in px at the native 1024x768 size.
    pub min_area: usize,
    pub max_area: usize,
    /// Scale the area gates linearly with image area.
    pub scale_area_gates: bool,
    /// Minimum RMS-gradient clarity for a capillary to be kept.
    pub min_contrast: f64,
    /// Counting region [min_row, min_col, max_row, max_col]; absent means
    /// full width and the central 80% of image height.
    pub counting_region: Option<[usize; 4]>,
    /// Bounding-box dilation for keypoint matching.
    pub match_dilation: usize,
    pub tau_tortuous: f64,
    pub min_clear: usize,
    pub min_spur: f64,
    /// Junction clusters closer than this merge into one node.
    pub junction_merge: f64,
    pub normal_ranges: NormalRanges,
    pub video: VideoParams,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scale: ScaleConfig::default(),
            vesselness: VesselnessParams::default(),
            standardize_percentiles: [1.0, 99.0],
            min_area: 80,
            max_area: 20000,
            scale_area_gates: true,
            min_contrast: 0.02,
            counting_region: None,
            match_dilation: 5,
            tau_tortuous: 1.7,
            min_clear: 3,
            min_spur: 8.0,
            junction_merge: 8.0,
            normal_ranges: NormalRanges::default(),
            video: VideoParams::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.scale.validate()?;
        self.vesselness.validate()?;
        self.normal_ranges.validate()?;
        let [lo, hi] = self.standardize_percentiles;
        if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) || lo >= hi {
            return Err(Error::InvalidParameter(format!(
                "standardize_percentiles must satisfy 0 <= low < high <= 100, got ({lo}, {hi})"
            )));
        }
        if self.min_area == 0 || self.min_area >= self.max_area {
            return Err(Error::InvalidParameter(format!(
                "area gates must satisfy 0 < min_area < max_area, got ({}, {})",
                self.min_area, self.max_area
            )));
        }
        if !(self.tau_tortuous > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tau_tortuous must exceed 1, got {}",
                self.tau_tortuous
            )));
        }
        if self.min_clear == 0 {
            return Err(Error::InvalidParameter("min_clear must be at least 1".into()));
        }
        if self.min_spur < 0.0 || self.junction_merge < 0.0 {
            return Err(Error::InvalidParameter(
                "min_spur and junction_merge must be nonnegative".into(),
            ));
        }
        if let Some([r0, c0, r1, c1]) = self.counting_region {
            if r0 > r1 || c0 > c1 {
                return Err(Error::InvalidParameter(format!(
                    "counting_region [{r0}, {c0}, {r1}, {c1}] is empty"
                )));
            }
        }
        Ok(())
    }

    /// Area gates scaled to an image of the given dimensions.
    pub fn area_gates(&self, width: usize, height: usize) -> (usize, usize) {
        if !self.scale_area_gates {
            return (self.min_area, self.max_area);
        }
        let ratio = (width * height) as f64 / NATIVE_AREA;
        let min = ((self.min_area as f64 * ratio).round() as usize).max(1);
        let max = ((self.max_area as f64 * ratio).round() as usize).max(min + 1);
        (min, max)
    }

    /// Counting region for an image: configured rectangle or the default
    /// full-width central 80% of height.
    pub fn counting_rect(&self, width: usize, height: usize) -> Result<crate::segmentation::Rect> {
        let rect = match self.counting_region {
            Some([r0, c0, r1, c1]) => crate::segmentation::Rect {
                min_row: r0,
                min_col: c0,
                max_row: r1,
                max_col: c1,
            },
            None => {
                let top = ((height as f64 - 1.0) * 0.1).round() as usize;
                let bottom = ((height as f64 - 1.0) * 0.9).round() as usize;
                crate::segmentation::Rect {
                    min_row: top,
                    min_col: 0,
                    max_row: bottom,
                    max_col: width - 1,
                }
            }
        };
        if rect.max_row >= height || rect.max_col >= width {
            return Err(Error::InvalidParameter(format!(
                "counting region [{}, {}, {}, {}] exceeds the {}x{} image",
                rect.min_row, rect.min_col, rect.max_row, rect.max_col, width, height
            )));
        }
        Ok(rect)
    }
}
