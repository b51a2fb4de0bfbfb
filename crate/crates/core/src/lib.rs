//! Dermoscopic lesion analysis toolkit.
//!
//! The pipeline runs in four stages, each its own module:
//!
//! 1. [`imaging`] — load, resize, and median-filter dermoscopic images.
//! 2. [`segmentation`] — isolate the lesion with K-means + Otsu thresholding
//!    and morphological cleanup, producing a binary mask.
//! 3. [`features`] — compute 13 ABCD-derived features per lesion
//!    (diameter, sphericity, asymmetry, color statistics, ...).
//! 4. [`anfis`] — a first-order Takagi–Sugeno neuro-fuzzy classifier whose
//!    parameters are trained either by gradient descent or by the population
//!    metaheuristics in [`optimize`] (imperialist competitive algorithm and a
//!    continuous ant-colony baseline).
//!
//! [`evaluation`] ties the stages together: train/test splits,
//! confusion-matrix metrics, head-to-head method comparison, and convergence
//! sweeps. [`synthetic`] generates a labeled benchmark dataset so the whole
//! pipeline can be exercised without external image downloads.

pub mod anfis;
pub mod chart;
pub mod evaluation;
pub mod features;
pub mod imaging;
pub mod optimize;
pub mod segmentation;
pub mod synthetic;

pub use anfis::{AnfisModel, Dataset, SavedModel};
pub use evaluation::{ConfusionMatrix, Method, RunReport, TrainingSetup};
pub use features::{ClassLabel, FeatureVector, MaskGeometry, Standardizer};
pub use imaging::{GrayRaster, RgbRaster};
pub use optimize::{AcoConfig, IcaConfig, Objective, RunResult};
pub use segmentation::{KMeansResult, LesionMask, SegmentationConfig};
