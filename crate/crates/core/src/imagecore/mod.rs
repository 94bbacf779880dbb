//! Image substrate: grayscale images, normalization, scale pyramids and
//! dense HOG grids.

mod gray;
mod hog;
mod pyramid;

pub use gray::{to_grayscale, zscore_normalize, GrayImage, NormalizedGrid};
pub use hog::{
    compute_hog, compute_hog_at_scale, HogGrid, CELL_DESCRIPTOR_LEN, CELL_SIZE, ORIENTATION_BINS,
};
pub use pyramid::{build_pyramid, hog_pyramid, DEFAULT_PYRAMID_FACTOR, DEFAULT_PYRAMID_LEVELS};
