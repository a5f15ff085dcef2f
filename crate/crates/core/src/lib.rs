//! Condition-aware 3D models of damaged buildings.
//!
//! The pipeline runs three fully convolutional residual segmentation networks
//! over every image (scene/building context, damage presence, damage type),
//! fuses their outputs into one label per pixel, and projects those labels
//! through calibrated cameras onto the texture atlas of a reconstructed mesh.
//! Overlapping views are averaged per texel, and the result is exported as an
//! OBJ + PNG bundle with a JSON report.
//!
//! Module map:
//!
//! - [`geometry`]: meshes with UV atlases, pinhole cameras, OBJ and camera JSON I/O
//! - [`raster`]: z-buffer visibility and texel/pixel correspondences per view
//! - [`segnet`]: the segmentation network with backprop and Adam training
//! - [`fusion`]: threshold and compatibility rules combining the three networks
//! - [`bake`]: multi-view averaging into a [`bake::ConditionAwareModel`] and export
//! - [`synth`]: synthetic damaged-building scenes with ground truth
//! - [`evalkit`]: confusion matrices and accuracies
//! - [`cli`]: the `synth`/`train`/`infer`/`bake`/`eval` stages

pub mod bake;
pub mod classes;
pub mod cli;
pub mod error;
pub mod evalkit;
pub mod fusion;
pub mod geometry;
pub mod imageio;
pub mod labels;
pub mod raster;
pub mod segnet;
pub mod synth;

pub use error::{Error, Result};
