//! Per-class discovery of discriminative HOG patches.
//!
//! Mining alternates between training linear detectors on patch clusters and
//! re-forming each cluster from the detector's top firings on the other half
//! of the class images, swapping halves every round. Surviving detectors are
//! ranked by the purity and discriminativeness of their firings and the best
//! ones per class form the [`DetectorBank`].

mod bank;
mod cluster;
pub(crate) mod detect;
mod mine;
mod rank;
mod seeds;
mod svm;

pub use bank::{select_top, DetectorBank, PatchDetector};
pub use cluster::cluster_candidates;
pub use detect::{detect_pyramid, non_max_suppression, Firing, PackedDetectors, WindowMatrix, WindowPos};
pub use mine::{mine_bank, mine_class, negative_sample, split_halves, RankedDetector};
pub use rank::{rank_score, RankedFiring};
pub use seeds::{sample_seeds, PatchCandidate};
pub use svm::{train_detector, train_linear_svm, LinearSvm, LinearSvmParams};

use serde::{Deserialize, Serialize};

use crate::imagecore::{HogGrid, DEFAULT_PYRAMID_FACTOR, DEFAULT_PYRAMID_LEVELS};

pub const DEFAULT_FIRE_THRESHOLD: f32 = -1.5;
pub const DEFAULT_TOP_K: usize = 210;
pub const DEFAULT_WINDOW_CELLS: usize = 6;

/// HOG grids of one image, finest level first.
pub type GridPyramid = Vec<HogGrid>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningParams {
    /// Square detector window, in cells.
    pub window: usize,
    pub pyramid_levels: usize,
    pub pyramid_factor: f64,
    pub seeds_per_image: usize,
    /// Windows whose mean gradient magnitude falls below this are not seeds.
    pub min_seed_energy: f32,
    pub rounds: usize,
    pub fire_threshold: f32,
    pub top_k: usize,
    /// Images sampled from every other class as negatives.
    pub negatives_per_class: usize,
    /// Hinge-loss cost for detector training.
    pub detector_c: f64,
    /// Constant appended to every window descriptor; its weight is the bias.
    pub detector_bias_feature: f64,
    /// Top firings that re-form a cluster (one per image).
    pub cluster_size: usize,
    /// Clusters firing on fewer validation images are pruned.
    pub min_cluster_images: usize,
    pub firings_per_image: usize,
    pub nms_overlap: f32,
    pub rank_top: usize,
    pub rank_lambda: f64,
    pub seed: u64,
}

impl Default for MiningParams {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW_CELLS,
            pyramid_levels: DEFAULT_PYRAMID_LEVELS,
            pyramid_factor: DEFAULT_PYRAMID_FACTOR,
            seeds_per_image: 12,
            min_seed_energy: 0.02,
            rounds: 4,
            fire_threshold: DEFAULT_FIRE_THRESHOLD,
            top_k: DEFAULT_TOP_K,
            negatives_per_class: 5,
            detector_c: 0.1,
            detector_bias_feature: 1.0,
            cluster_size: 5,
            min_cluster_images: 3,
            firings_per_image: 5,
            nms_overlap: 0.3,
            rank_top: 10,
            rank_lambda: 1.0,
            seed: 0,
        }
    }
}
