use rand::seq::index::sample;

use super::GridPyramid;
use crate::error::{Error, Result};
use crate::seed::rng_for;

const SEED_TAG: u64 = 0x5eed5;

/// A candidate patch: one window of one pyramid level of a training image.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchCandidate {
    /// Index of the source image in the list given to [`sample_seeds`].
    pub image: usize,
    pub level: usize,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub descriptor: Vec<f32>,
}

/// Draws up to `per_image` distinct random windows from every pyramid level
/// of every image, keeping those whose mean gradient energy reaches
/// `min_energy`.
pub fn sample_seeds(
    images: &[GridPyramid],
    per_image: usize,
    window: usize,
    min_energy: f32,
    seed: u64,
) -> Result<Vec<PatchCandidate>> {
    if window == 0 {
        return Err(Error::param("window", "must be at least one cell"));
    }
    if !images.iter().flatten().any(|g| g.fits(window, window)) {
        return Err(Error::NoUsableGrid(window));
    }
    let mut out = Vec::new();
    for (image, levels) in images.iter().enumerate() {
        let mut rng = rng_for(seed, SEED_TAG, image as u64);
        for (level, grid) in levels.iter().enumerate() {
            if !grid.fits(window, window) {
                continue;
            }
            let (nx, ny) = grid.window_positions(window, window);
            let total = nx * ny;
            let mut picks = sample(&mut rng, total, per_image.min(total)).into_vec();
            picks.sort_unstable();
            for p in picks {
                let (x, y) = (p % nx, p / nx);
                if grid.window_energy(x, y, window, window) < min_energy {
                    continue;
                }
                out.push(PatchCandidate {
                    image,
                    level,
                    x,
                    y,
                    w: window,
                    h: window,
                    descriptor: grid.window_descriptor(x, y, window, window),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::{hog_pyramid, GrayImage};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks: Vec<f32> = (0..24 * 36).map(|_| rng.random()).collect();
        GrayImage::from_fn(96, 144, |x, y| blocks[(y / 4) * 24 + x / 4])
    }

    #[test]
    fn count_bounded_by_levels_and_budget() {
        let pyramids: Vec<GridPyramid> = (0..10)
            .map(|i| hog_pyramid(&textured(i), 7, std::f64::consts::FRAC_1_SQRT_2))
            .collect();
        let cands = sample_seeds(&pyramids, 25, 6, 0.0, 1).unwrap();
        // Per image, each level contributes min(25, windows at that level).
        let expected: usize = pyramids
            .iter()
            .flatten()
            .filter(|g| g.fits(6, 6))
            .map(|g| {
                let (nx, ny) = g.window_positions(6, 6);
                (nx * ny).min(25)
            })
            .sum();
        assert_eq!(cands.len(), expected);
        assert!(cands.len() <= 10 * 25 * 7);
        for c in &cands {
            let g = &pyramids[c.image][c.level];
            assert_eq!(c.descriptor, g.window_descriptor(c.x, c.y, 6, 6));
            assert!(c.x + c.w <= g.cells_x() && c.y + c.h <= g.cells_y());
        }
    }

    #[test]
    fn constant_images_yield_nothing() {
        let flat = GrayImage::filled(96, 144, 0.4);
        let pyramids = vec![hog_pyramid(&flat, 3, 0.7); 3];
        assert!(sample_seeds(&pyramids, 10, 6, 0.01, 0).unwrap().is_empty());
    }

    #[test]
    fn deterministic() {
        let pyramids: Vec<GridPyramid> = (0..3).map(|i| hog_pyramid(&textured(i), 3, 0.7)).collect();
        assert_eq!(
            sample_seeds(&pyramids, 8, 6, 0.01, 9).unwrap(),
            sample_seeds(&pyramids, 8, 6, 0.01, 9).unwrap()
        );
        assert_ne!(
            sample_seeds(&pyramids, 8, 6, 0.01, 9).unwrap(),
            sample_seeds(&pyramids, 8, 6, 0.01, 10).unwrap()
        );
    }

    #[test]
    fn too_small_grids() {
        let small = hog_pyramid(&textured(0).crop(0, 0, 40, 40), 1, 0.7);
        assert!(matches!(sample_seeds(&[small], 5, 6, 0.0, 0), Err(Error::NoUsableGrid(6))));
    }
}
