//! Fine-grained grocery product class recognition.
//!
//! Shelf photos are classified by running a bank of mined, class-specific
//! HOG patch detectors, max-pooling their scores per class (optionally over a
//! 2x2 spatial pyramid) and feeding the pooled vector to one-vs-rest SVMs.
//! Shopping-list words are mapped to classes through word histograms built
//! from the text printed on training packaging, and the classifier can be
//! refined with uncertainty-sampling active learning.

pub mod activelearn;
pub mod classify;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod font;
pub mod geometry;
pub mod imagecore;
pub mod kmeans;
pub mod linalg;
mod par;
pub mod pipeline;
pub mod patchmine;
pub mod seed;
pub mod textmap;

pub use error::{Error, Result};
