//! Evaluation toolkit for volumetric lesion segmentation.
//!
//! Binary masks are loaded from NIfTI-1, split into connected components and
//! scored at the voxel level (DSC, normalized DSC) and at the lesion level
//! (matched detections, F1). Errors can be typed against a phenotype atlas,
//! datasets split into grouped stratified partitions, models compared with
//! rank tests, and learned features inspected with PCA.

pub mod error;
pub mod error_analysis;
pub mod features;
pub mod format;
pub mod labeling;
pub mod lesion_metrics;
pub mod phantom;
pub mod quantile;
pub mod report;
pub mod split;
pub mod stats;
pub mod volume;
pub mod voxel_metrics;

pub use error::{Error, ParseError, Result};
