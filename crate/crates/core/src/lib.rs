//! Gaussian scale-space pre-processing for cell texture classification.
//!
//! Two feature paths share the scale stack: concatenated rotation-invariant
//! LBP histograms, and dense LOAD descriptors encoded as improved Fisher
//! vectors. Both feed a linear one-vs-rest SVM evaluated by
//! leave-one-specimen-out cross-validation.

mod binio;
pub mod classifier;
pub mod cli;
pub mod config;
pub mod encoding;
pub mod evaluation;
pub mod error;
pub mod lbp;
pub mod load;
pub mod pipeline;
pub mod raster;
pub mod scalespace;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
