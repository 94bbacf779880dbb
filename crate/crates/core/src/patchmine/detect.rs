//! Sliding-window scoring of many linear detectors at once.
//!
//! Every window of a grid (or pyramid) becomes one row of a matrix; a batch of
//! detectors is scored with a single matrix product. Detectors are processed
//! in fixed-size chunks so the serial and parallel paths perform exactly the
//! same arithmetic.

use super::PatchDetector;
use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::imagecore::{HogGrid, CELL_DESCRIPTOR_LEN, CELL_SIZE};
use crate::linalg::matmul_abt;

const CHUNK: usize = 64;

/// Location of one window row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowPos {
    pub level: usize,
    pub x: usize,
    pub y: usize,
    /// Window footprint in source-image pixels.
    pub rect: Rect,
}

/// All windows of one image, one descriptor per row.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowMatrix {
    window: usize,
    dim: usize,
    data: Vec<f32>,
    positions: Vec<WindowPos>,
}

impl WindowMatrix {
    pub fn from_grid(grid: &HogGrid, window: usize) -> Self {
        Self::from_pyramid(std::slice::from_ref(grid), window)
    }

    /// Windows of every level that can hold one, finest level first.
    pub fn from_pyramid(levels: &[HogGrid], window: usize) -> Self {
        let dim = window * window * CELL_DESCRIPTOR_LEN;
        let mut data = Vec::new();
        let mut positions = Vec::new();
        for (level, grid) in levels.iter().enumerate() {
            if window == 0 || !grid.fits(window, window) {
                continue;
            }
            let (nx, ny) = grid.window_positions(window, window);
            let s = f64::from(grid.scale());
            let px = |v: usize| (v as f64 * CELL_SIZE as f64 / s).round() as usize;
            data.reserve(nx * ny * dim);
            for y in 0..ny {
                for x in 0..nx {
                    grid.write_window(x, y, window, window, &mut data);
                    positions.push(WindowPos {
                        level,
                        x,
                        y,
                        rect: Rect::new(px(x), px(y), px(window), px(window)),
                    });
                }
            }
        }
        Self {
            window,
            dim,
            data,
            positions,
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, i: usize) -> &WindowPos {
        &self.positions[i]
    }

    pub fn positions(&self) -> &[WindowPos] {
        &self.positions
    }
}

/// Detector weights laid out contiguously for batched scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedDetectors {
    window: usize,
    dim: usize,
    weights: Vec<f32>,
    biases: Vec<f32>,
    thresholds: Vec<f32>,
}

impl PackedDetectors {
    pub fn new<'a>(detectors: impl IntoIterator<Item = &'a PatchDetector>) -> Result<Self> {
        let mut packed = Self {
            window: 0,
            dim: 0,
            weights: Vec::new(),
            biases: Vec::new(),
            thresholds: Vec::new(),
        };
        for d in detectors {
            if d.window.0 != d.window.1 {
                return Err(Error::param("window", "detector windows must be square"));
            }
            if packed.biases.is_empty() {
                packed.window = d.window.0;
                packed.dim = d.weights.len();
            } else if d.window.0 != packed.window || d.weights.len() != packed.dim {
                return Err(Error::param("window", "all detectors must share one window size"));
            }
            packed.weights.extend_from_slice(&d.weights);
            packed.biases.push(d.bias);
            packed.thresholds.push(d.fire_threshold);
        }
        Ok(packed)
    }

    pub fn len(&self) -> usize {
        self.biases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.biases.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn threshold(&self, i: usize) -> f32 {
        self.thresholds[i]
    }

    /// Scores every window with every detector and folds each detector's
    /// score column through `reduce(detector, scores)`. Results come back in
    /// detector order.
    pub fn map_columns<R, F>(&self, matrix: &WindowMatrix, parallel: bool, reduce: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize, &[f32]) -> R + Sync + Send,
    {
        if self.is_empty() {
            return Vec::new();
        }
        assert_eq!(matrix.dim, self.dim, "window matrix and detectors disagree on size");
        let chunks = self.len().div_ceil(CHUNK);
        let run = |c: usize| self.chunk(matrix, c, &reduce);
        let nested: Vec<Vec<R>> = crate::par::map(chunks, parallel, run);
        nested.into_iter().flatten().collect()
    }

    fn chunk<R>(&self, matrix: &WindowMatrix, c: usize, reduce: &impl Fn(usize, &[f32]) -> R) -> Vec<R> {
        let start = c * CHUNK;
        let n = CHUNK.min(self.len() - start);
        let m = matrix.rows();
        let mut out = vec![0.0f32; m * n];
        matmul_abt(
            &matrix.data,
            &self.weights[start * self.dim..(start + n) * self.dim],
            m,
            self.dim,
            n,
            &mut out,
        );
        let mut column = vec![0.0f32; m];
        (0..n)
            .map(|j| {
                let b = self.biases[start + j];
                for (r, v) in column.iter_mut().enumerate() {
                    *v = out[r * n + j] + b;
                }
                reduce(start + j, &column)
            })
            .collect()
    }
}

/// One detector response above its threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Firing {
    /// Index of the image within the batch being scanned.
    pub image: usize,
    /// Row in that image's [`WindowMatrix`].
    pub row: usize,
    pub score: f32,
    pub rect: Rect,
}

/// Greedy suppression: highest score first (earlier row on ties), dropping
/// anything overlapping a kept firing by more than `overlap` IoU, stopping
/// after `keep` survivors.
pub fn non_max_suppression(mut firings: Vec<Firing>, overlap: f32, keep: usize) -> Vec<Firing> {
    firings.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.row.cmp(&b.row)));
    let mut kept: Vec<Firing> = Vec::with_capacity(keep.min(firings.len()));
    for f in firings {
        if kept.len() == keep {
            break;
        }
        if kept.iter().all(|k| k.rect.iou(&f.rect) <= overlap) {
            kept.push(f);
        }
    }
    kept
}

/// Per detector, the firings on one image: scores above the detector's
/// threshold, suppressed and truncated to `keep`.
pub fn detect_pyramid(
    matrix: &WindowMatrix,
    image: usize,
    detectors: &PackedDetectors,
    overlap: f32,
    keep: usize,
    parallel: bool,
) -> Vec<Vec<Firing>> {
    if matrix.is_empty() {
        return vec![Vec::new(); detectors.len()];
    }
    detectors.map_columns(matrix, parallel, |d, scores| {
        let t = detectors.threshold(d);
        let above: Vec<Firing> = scores
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > t)
            .map(|(row, &score)| Firing {
                image,
                row,
                score,
                rect: matrix.positions[row].rect,
            })
            .collect();
        non_max_suppression(above, overlap, keep)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::{compute_hog, hog_pyramid, GrayImage};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks: Vec<f32> = (0..(w / 4 + 1) * (h / 4 + 1)).map(|_| rng.random()).collect();
        GrayImage::from_fn(w, h, |x, y| blocks[(y / 4) * (w / 4 + 1) + x / 4])
    }

    fn random_detectors(n: usize, dim: usize, seed: u64) -> Vec<PatchDetector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| PatchDetector {
                weights: (0..dim).map(|_| rng.random_range(-0.1..0.1)).collect(),
                bias: rng.random_range(-1.0..0.5),
                class_id: i % 3,
                window: (2, 2),
                fire_threshold: -1.5,
            })
            .collect()
    }

    #[test]
    fn matrix_rows_match_window_descriptors() {
        let img = random_image(64, 48, 1);
        let grid = compute_hog(&img).unwrap();
        let m = WindowMatrix::from_grid(&grid, 3);
        assert_eq!(m.rows(), 6 * 4);
        let p = m.position(7);
        assert_eq!(m.row(7), grid.window_descriptor(p.x, p.y, 3, 3).as_slice());
        assert_eq!(p.rect, Rect::new(p.x * 8, p.y * 8, 24, 24));
    }

    #[test]
    fn pyramid_rects_map_to_source_pixels() {
        let img = random_image(128, 128, 2);
        let levels = hog_pyramid(&img, 3, 0.5);
        let m = WindowMatrix::from_pyramid(&levels, 4);
        let last = m.positions().last().unwrap();
        assert_eq!(last.level, 2);
        assert_eq!(last.rect, Rect::new(0, 0, 128, 128));
    }

    #[test]
    fn batched_scores_match_direct_dot_products() {
        let img = random_image(80, 72, 3);
        let grid = compute_hog(&img).unwrap();
        let m = WindowMatrix::from_grid(&grid, 2);
        let dets = random_detectors(150, m.dim(), 4);
        let packed = PackedDetectors::new(&dets).unwrap();
        let cols = packed.map_columns(&m, false, |_, s| s.to_vec());
        for (d, col) in dets.iter().zip(&cols) {
            for r in 0..m.rows() {
                let direct = crate::linalg::dot(&d.weights, m.row(r)) + d.bias;
                assert!((direct - col[r]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn serial_and_parallel_are_identical() {
        let img = random_image(120, 96, 5);
        let grid = compute_hog(&img).unwrap();
        let m = WindowMatrix::from_grid(&grid, 2);
        let dets = random_detectors(200, m.dim(), 6);
        let packed = PackedDetectors::new(&dets).unwrap();
        let a = detect_pyramid(&m, 0, &packed, 0.3, 5, false);
        let b = detect_pyramid(&m, 0, &packed, 0.3, 5, true);
        assert_eq!(a, b);
    }

    #[test]
    fn nms_keeps_best_and_respects_overlap() {
        let f = |row, score, x| Firing {
            image: 0,
            row,
            score,
            rect: Rect::new(x, 0, 10, 10),
        };
        let out = non_max_suppression(vec![f(0, 1.0, 0), f(1, 2.0, 1), f(2, 0.5, 30), f(3, 0.7, 8)], 0.3, 5);
        let rows: Vec<usize> = out.iter().map(|f| f.row).collect();
        // Row 0 overlaps row 1 heavily; row 3 overlaps it with IoU 30/170.
        assert_eq!(rows, vec![1, 3, 2]);
        let out = non_max_suppression(vec![f(0, 1.0, 0), f(1, 2.0, 50), f(2, 0.5, 100)], 0.3, 2);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn threshold_filters_firings() {
        let img = GrayImage::filled(32, 32, 0.5);
        let grid = compute_hog(&img).unwrap();
        let m = WindowMatrix::from_grid(&grid, 2);
        let mut dets = random_detectors(2, m.dim(), 7);
        dets[0].bias = -1.4;
        dets[1].bias = -1.6;
        let packed = PackedDetectors::new(&dets).unwrap();
        let out = detect_pyramid(&m, 0, &packed, 1.0, usize::MAX, false);
        assert_eq!(out[0].len(), m.rows());
        assert!(out[1].is_empty());
    }

    #[test]
    fn mixed_windows_rejected() {
        let mut dets = random_detectors(2, 144, 8);
        dets[1].window = (3, 3);
        dets[1].weights = vec![0.0; 324];
        assert!(PackedDetectors::new(&dets).is_err());
    }
}
