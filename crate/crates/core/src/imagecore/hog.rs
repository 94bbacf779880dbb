//! Dense HOG: 8x8 pixel cells, 9 unsigned orientation bins, and overlapping
//! 2x2-cell blocks normalized with L2-Hys. Each cell carries its histogram as
//! normalized by each of the four blocks that cover it, giving a 36-value cell
//! descriptor.

use std::f32::consts::PI;

use super::GrayImage;
use crate::error::{Error, Result};

pub const CELL_SIZE: usize = 8;
pub const ORIENTATION_BINS: usize = 9;
pub const CELL_DESCRIPTOR_LEN: usize = 4 * ORIENTATION_BINS;

const HYS_CLIP: f32 = 0.2;
const NORM_EPS: f32 = 1e-4;
// Gradients below this are resampling noise, not structure.
const MAG_DEAD_ZONE: f32 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct HogGrid {
    cells_x: usize,
    cells_y: usize,
    /// Pyramid scale the grid was computed at (1.0 = source resolution).
    scale: f32,
    data: Vec<f32>,
    energy: Vec<f32>,
}

impl HogGrid {
    #[inline]
    pub fn cells_x(&self) -> usize {
        self.cells_x
    }

    #[inline]
    pub fn cells_y(&self) -> usize {
        self.cells_y
    }

    #[inline]
    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn bins(&self) -> usize {
        ORIENTATION_BINS
    }

    pub fn cell_size(&self) -> usize {
        CELL_SIZE
    }

    pub fn stride(&self) -> usize {
        CELL_SIZE
    }

    #[inline]
    pub fn cell(&self, cx: usize, cy: usize) -> &[f32] {
        let start = (cy * self.cells_x + cx) * CELL_DESCRIPTOR_LEN;
        &self.data[start..start + CELL_DESCRIPTOR_LEN]
    }

    /// Row-major cell descriptors for the whole grid.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Sum of raw gradient magnitudes inside a cell, before normalization.
    pub fn cell_energy(&self, cx: usize, cy: usize) -> f32 {
        self.energy[cy * self.cells_x + cx]
    }

    /// Mean raw gradient energy per pixel over a window of cells.
    pub fn window_energy(&self, x: usize, y: usize, w: usize, h: usize) -> f32 {
        let mut total = 0.0;
        for cy in y..y + h {
            for cx in x..x + w {
                total += self.cell_energy(cx, cy);
            }
        }
        total / (w * h * CELL_SIZE * CELL_SIZE) as f32
    }

    pub fn fits(&self, w: usize, h: usize) -> bool {
        self.cells_x >= w && self.cells_y >= h
    }

    /// Number of window positions along x and y for a `w`x`h` window.
    pub fn window_positions(&self, w: usize, h: usize) -> (usize, usize) {
        if !self.fits(w, h) {
            return (0, 0);
        }
        (self.cells_x - w + 1, self.cells_y - h + 1)
    }

    /// Flattened descriptor of a window, cells in row-major order.
    pub fn window_descriptor(&self, x: usize, y: usize, w: usize, h: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(w * h * CELL_DESCRIPTOR_LEN);
        self.write_window(x, y, w, h, &mut out);
        out
    }

    pub(crate) fn write_window(&self, x: usize, y: usize, w: usize, h: usize, out: &mut Vec<f32>) {
        assert!(x + w <= self.cells_x && y + h <= self.cells_y);
        for cy in y..y + h {
            let start = (cy * self.cells_x + x) * CELL_DESCRIPTOR_LEN;
            out.extend_from_slice(&self.data[start..start + w * CELL_DESCRIPTOR_LEN]);
        }
    }
}

pub fn compute_hog(image: &GrayImage) -> Result<HogGrid> {
    compute_hog_at_scale(image, 1.0)
}

/// HOG of an image that is itself a pyramid level at `scale`.
pub fn compute_hog_at_scale(image: &GrayImage, scale: f32) -> Result<HogGrid> {
    let (w, h) = (image.width(), image.height());
    if w < CELL_SIZE || h < CELL_SIZE {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min_width: CELL_SIZE,
            min_height: CELL_SIZE,
        });
    }
    let cells_x = (w - CELL_SIZE) / CELL_SIZE + 1;
    let cells_y = (h - CELL_SIZE) / CELL_SIZE + 1;

    let hist = cell_histograms(image, cells_x, cells_y);
    let mut energy = vec![0.0f32; cells_x * cells_y];
    for (e, cell) in energy
        .iter_mut()
        .zip(hist.hist.chunks_exact(ORIENTATION_BINS))
    {
        *e = cell.iter().sum();
    }

    // Blocks are indexed by their top-left cell, from -1 so that border cells
    // also sit in four (clipped) blocks.
    let bw = cells_x + 1;
    let bh = cells_y + 1;
    let mut first_norm = vec![0.0f32; bw * bh];
    let mut second_norm = vec![0.0f32; bw * bh];
    for by in 0..bh {
        for bx in 0..bw {
            let cells = block_cells(bx, by, cells_x, cells_y);
            let sq: f32 = cells
                .iter()
                .flatten()
                .flat_map(|&(cx, cy)| hist.cell(cx, cy, cells_x))
                .map(|v| v * v)
                .sum();
            let n1 = (sq + NORM_EPS * NORM_EPS).sqrt();
            let sq2: f32 = cells
                .iter()
                .flatten()
                .flat_map(|&(cx, cy)| hist.cell(cx, cy, cells_x))
                .map(|v| (v / n1).min(HYS_CLIP).powi(2))
                .sum();
            first_norm[by * bw + bx] = n1;
            second_norm[by * bw + bx] = (sq2 + NORM_EPS * NORM_EPS).sqrt();
        }
    }

    let mut data = Vec::with_capacity(cells_x * cells_y * CELL_DESCRIPTOR_LEN);
    for cy in 0..cells_y {
        for cx in 0..cells_x {
            let h = hist.cell(cx, cy, cells_x);
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                // Block (cx - 1 + dx, cy - 1 + dy) in shifted-by-one indexing.
                let b = (cy + dy) * bw + (cx + dx);
                let (n1, n2) = (first_norm[b], second_norm[b]);
                data.extend(h.iter().map(|&v| ((v / n1).min(HYS_CLIP) / n2).min(1.0)));
            }
        }
    }

    Ok(HogGrid {
        cells_x,
        cells_y,
        scale,
        data,
        energy,
    })
}

struct CellHistograms {
    hist: Vec<f32>,
}

impl CellHistograms {
    #[inline]
    fn cell(&self, cx: usize, cy: usize, cells_x: usize) -> &[f32] {
        let s = (cy * cells_x + cx) * ORIENTATION_BINS;
        &self.hist[s..s + ORIENTATION_BINS]
    }
}

fn cell_histograms(image: &GrayImage, cells_x: usize, cells_y: usize) -> CellHistograms {
    let (w, h) = (image.width(), image.height());
    let mut hist = vec![0.0f32; cells_x * cells_y * ORIENTATION_BINS];
    let bin_width = PI / ORIENTATION_BINS as f32;
    for y in 0..cells_y * CELL_SIZE {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        let cy = y / CELL_SIZE;
        for x in 0..cells_x * CELL_SIZE {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let gx = image.get(xp, y) - image.get(xm, y);
            let gy = image.get(x, yp) - image.get(x, ym);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag < MAG_DEAD_ZONE {
                continue;
            }
            let mut theta = gy.atan2(gx);
            if theta < 0.0 {
                theta += PI;
            }
            if theta >= PI {
                theta -= PI;
            }
            // Bin centers sit at multiples of 20 degrees; vote linearly
            // between the two nearest centers.
            let pos = theta / bin_width;
            let lo = pos.floor();
            let frac = pos - lo;
            let lo = (lo as usize) % ORIENTATION_BINS;
            let hi = (lo + 1) % ORIENTATION_BINS;
            let base = ((cy * cells_x) + x / CELL_SIZE) * ORIENTATION_BINS;
            hist[base + lo] += mag * (1.0 - frac);
            hist[base + hi] += mag * frac;
        }
    }
    CellHistograms { hist }
}

fn block_cells(
    bx: usize,
    by: usize,
    cells_x: usize,
    cells_y: usize,
) -> [Option<(usize, usize)>; 4] {
    let mut out = [None; 4];
    let mut i = 0;
    for dy in 0..2 {
        for dx in 0..2 {
            // Shifted indexing: block bx covers cells bx-1 and bx.
            let cx = (bx + dx).checked_sub(1);
            let cy = (by + dy).checked_sub(1);
            if let (Some(cx), Some(cy)) = (cx, cy) {
                if cx < cells_x && cy < cells_y {
                    out[i] = Some((cx, cy));
                }
            }
            i += 1;
        }
    }
    out
}
