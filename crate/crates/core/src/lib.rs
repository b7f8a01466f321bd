//! Handwritten-character recognition toolkit.
//!
//! The pipeline turns scanned letter images into zone-density feature vectors
//! and classifies them with either a k-nearest-neighbour model or a small
//! two-hidden-layer feedforward network:
//!
//! 1. [`raster`] — grayscale/binary rasters, PGM file I/O, dataset loading.
//! 2. [`preprocess`] — thresholding, speck removal, resizing, centering.
//! 3. [`zoning`] — static-grid zone densities and the grid entropy score.
//! 4. [`knn`] / [`mlp`] — the two classifiers.
//! 5. [`eval`] — stratified splits, accuracy/confusion reports, parameter sweeps.
//! 6. [`synth`] — deterministic synthetic glyph corpus for end-to-end runs.
//!
//! Everything is deterministic given its seeds: the same configuration
//! produces bit-identical corpora, feature tables, and trained models.

pub mod eval;
pub mod knn;
pub mod mlp;
pub mod preprocess;
pub mod raster;
pub mod rng;
pub mod synth;
pub mod zoning;

pub use eval::{EvalReport, SweepCurve};
pub use knn::KnnModel;
pub use mlp::{MlpModel, TrainHyperparams, TrainingTrace};
pub use preprocess::PreprocessConfig;
pub use raster::{BinaryImage, GrayImage, RawDataset};
pub use synth::SynthConfig;
pub use zoning::{FeatureTable, FeatureVector, GridSpec};
