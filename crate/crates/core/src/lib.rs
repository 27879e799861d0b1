//! Nailfold capillaroscopy analysis.
//!
//! Two pipelines over calibrated rasters:
//!
//! - **Image morphometry**: segmentation (native vesselness filter or an
//!   externally produced mask), capillary instance extraction and clarity
//!   filtering, skeletonization, keypoint detection, apical/limb diameter
//!   measurement, density, three-way morphology classification and
//!   clinical-range abnormality flags.
//! - **Video velocimetry**: translation stabilization, spatio-temporal
//!   profile extraction along a capillary path, discrete Radon transform,
//!   sinogram peak detection and analytic inversion into white-blood-cell
//!   transit events (count, speed, occurrence time).
//!
//! A built-in synthetic phantom generator provides ground truth for both
//! pipelines; the `phantom` and `report` modules carry the oracles and
//! metrics used by the acceptance suite.

pub mod analysis;
pub mod config;
pub mod error;
pub mod flow;
pub mod imaging;
pub mod io;
pub mod phantom;
pub mod pipeline;
pub mod report;
pub mod segmentation;
pub mod skeleton;

pub use error::{Error, Result};
pub use imaging::{BinaryMask, GrayImage, Point, PointF, ScalarField, ScaleConfig};
