//! Superpixel-based refinement of coarse object proposal masks.
//!
//! Object proposal systems that predict masks on a fixed low-resolution grid
//! lose fine boundary detail. This crate refines such coarse proposals by
//! classifying the superpixels of a high-precision oversegmentation as object
//! or background, using a mask prior pooled from the coarse mask together
//! with per-superpixel features, and recombining the accepted superpixels
//! into pixel-precise masks.
//!
//! The pipeline, mirrored by the `spxrefine` CLI:
//!
//! 1. [`segmentation`] — superpixel oversegmentation per scale (FH or SLIC)
//!    with approximate count targeting.
//! 2. [`featurizer`] — fixed multi-channel feature stack plus a learned
//!    linear projection.
//! 3. [`pooling`] — mean pooling of feature maps and coarse masks over
//!    superpixels (forward and backward).
//! 4. [`sampling`] — selecting superpixels per proposal window and batching
//!    them for classification.
//! 5. [`classifier`] — an MLP over `[mask prior, features]` trained with SGD
//!    on cross entropy, jointly with the projection.
//! 6. [`groundtruth`] — greedy optimal superpixel sets per annotation, label
//!    generation and a synthetic dataset generator.
//! 7. [`refine`] — rendering, superpixel-level bilateral filtering,
//!    morphology and near-duplicate suppression.
//! 8. [`metrics`] — average recall, boundary recall and undersegmentation
//!    error.

pub mod classifier;
pub mod dataset;
pub mod error;
pub mod featurizer;
pub mod groundtruth;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod pooling;
pub mod raster;
pub mod refine;
pub mod sampling;
pub mod segmentation;

pub use error::{Error, Result};
pub use mask::{BinaryMask, RleMask};
pub use raster::{Rect, RgbRaster};
pub use segmentation::{ScaleConfig, SegMethod, SuperpixelSegmentation};
