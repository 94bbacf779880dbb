use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::imagecore::GrayImage;

pub const SCORE_THRESHOLD: f32 = 10.0;
pub const DILATIONS: usize = 6;
pub const MIN_REGION_AREA: usize = 230;

/// Per-pixel text likelihood, higher is more text-like.
#[derive(Clone, Debug, PartialEq)]
pub struct TextScoreMap {
    width: usize,
    height: usize,
    scores: Vec<f32>,
}

impl TextScoreMap {
    pub fn new(width: usize, height: usize, scores: Vec<f32>) -> Result<Self> {
        if scores.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                got: scores.len(),
            });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::param("scores", "must be finite"));
        }
        Ok(Self { width, height, scores })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.scores[y * self.width + x]
    }

    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| self.get(x, y) / 100.0)
    }
}

/// Produces a score map for an image.
pub trait TextScorer: Send + Sync {
    fn score(&self, image: &GrayImage) -> TextScoreMap;
}

/// Thresholds at 10, dilates 6 times with a 3x3 square, and returns the
/// bounding boxes of 8-connected components larger than 230 pixels.
pub fn segment_text_regions(map: &TextScoreMap) -> Vec<Rect> {
    let (w, h) = (map.width, map.height);
    if w == 0 || h == 0 {
        return Vec::new();
    }
    let mask: Vec<bool> = map.scores.iter().map(|&s| s > SCORE_THRESHOLD).collect();
    // Six 3x3 dilations equal one (2*6+1)^2 square dilation, done
    // separably.
    let rows = dilate_1d(&mask, w, h, DILATIONS, true);
    let mask = dilate_1d(&rows, w, h, DILATIONS, false);
    components(&mask, w, h)
        .into_iter()
        .filter(|(area, _)| *area > MIN_REGION_AREA)
        .map(|(_, r)| r)
        .collect()
}

fn dilate_1d(mask: &[bool], w: usize, h: usize, radius: usize, horizontal: bool) -> Vec<bool> {
    let (len, lines) = if horizontal { (w, h) } else { (h, w) };
    let at = |line: usize, i: usize| if horizontal { line * w + i } else { i * w + line };
    let mut out = vec![false; w * h];
    for line in 0..lines {
        // Distance from each position to the nearest set pixel on either side.
        let mut last: Option<usize> = None;
        for i in 0..len {
            if mask[at(line, i)] {
                last = Some(i);
            }
            if last.is_some_and(|p| i - p <= radius) {
                out[at(line, i)] = true;
            }
        }
        let mut next: Option<usize> = None;
        for i in (0..len).rev() {
            if mask[at(line, i)] {
                next = Some(i);
            }
            if next.is_some_and(|p| p - i <= radius) {
                out[at(line, i)] = true;
            }
        }
    }
    out
}

/// 8-connected components as (pixel count, bounding box), in scan order of
/// their first pixel.
fn components(mask: &[bool], w: usize, h: usize) -> Vec<(usize, Rect)> {
    let mut label = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask[start] || label[start] {
            continue;
        }
        label[start] = true;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
        let mut area = 0;
        while let Some(p) = stack.pop() {
            let (x, y) = (p % w, p / w);
            area += 1;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let q = ny * w + nx;
                    if mask[q] && !label[q] {
                        label[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        out.push((area, Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1)));
    }
    out
}

/// Gradient-density heuristic: the mean gradient magnitude above a small
/// dead zone in a 5x5 neighborhood, mapped to `[0, 100]`. Printed glyph
/// strokes land well above 10; flat packaging and mild sensor noise stay
/// below.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientDensityScorer {
    pub dead_zone: f32,
    /// Density that maps to a score of about 63.
    pub scale: f32,
    pub radius: usize,
}

impl Default for GradientDensityScorer {
    fn default() -> Self {
        Self {
            dead_zone: 0.06,
            scale: 0.08,
            radius: 2,
        }
    }
}

impl TextScorer for GradientDensityScorer {
    fn score(&self, image: &GrayImage) -> TextScoreMap {
        let (w, h) = (image.width(), image.height());
        let mut mag = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let gx = image.get((x + 1).min(w - 1), y) - image.get(x.saturating_sub(1), y);
                let gy = image.get(x, (y + 1).min(h - 1)) - image.get(x, y.saturating_sub(1));
                mag[y * w + x] = ((gx * gx + gy * gy).sqrt() - self.dead_zone).max(0.0);
            }
        }
        // Summed-area table for the box mean.
        let mut sat = vec![0.0f64; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += f64::from(mag[y * w + x]);
                sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
            }
        }
        let r = self.radius;
        let scores = (0..w * h)
            .map(|p| {
                let (x, y) = (p % w, p / w);
                let (xa, ya) = (x.saturating_sub(r), y.saturating_sub(r));
                let (xb, yb) = ((x + r + 1).min(w), (y + r + 1).min(h));
                let sum = sat[yb * (w + 1) + xb] - sat[ya * (w + 1) + xb] - sat[yb * (w + 1) + xa]
                    + sat[ya * (w + 1) + xa];
                let mean = sum / ((xb - xa) * (yb - ya)) as f64;
                (100.0 * (1.0 - (-mean / f64::from(self.scale)).exp())) as f32
            })
            .collect();
        TextScoreMap {
            width: w,
            height: h,
            scores,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_map(w: usize, h: usize, bx: usize, by: usize, side: usize, v: f32) -> TextScoreMap {
        let scores = (0..w * h)
            .map(|p| {
                let (x, y) = (p % w, p / w);
                if (bx..bx + side).contains(&x) && (by..by + side).contains(&y) {
                    v
                } else {
                    0.0
                }
            })
            .collect();
        TextScoreMap::new(w, h, scores).unwrap()
    }

    #[test]
    fn block_grows_six_pixels_per_side() {
        let rects = segment_text_regions(&block_map(80, 80, 20, 20, 30, 11.0));
        assert_eq!(rects, vec![Rect::new(14, 14, 42, 42)]);
    }

    #[test]
    fn area_boundary() {
        assert_eq!(segment_text_regions(&block_map(60, 60, 20, 20, 10, 11.0)).len(), 1);
        assert!(segment_text_regions(&block_map(60, 60, 20, 20, 2, 11.0)).is_empty());
        // Exactly 10 is masked out.
        assert!(segment_text_regions(&block_map(60, 60, 20, 20, 30, 10.0)).is_empty());
    }

    #[test]
    fn border_clipping_counts_visible_pixels() {
        // A 4x4 block in the corner dilates to 10x10 = 100 px: discarded.
        assert!(segment_text_regions(&block_map(40, 40, 0, 0, 4, 50.0)).is_empty());
    }

    #[test]
    fn diagonal_neighbours_join() {
        let mut scores = vec![0.0; 100 * 100];
        // Two blocks whose dilations touch only diagonally.
        for (bx, by) in [(10usize, 10usize), (32, 32)] {
            for y in by..by + 10 {
                for x in bx..bx + 10 {
                    scores[y * 100 + x] = 20.0;
                }
            }
        }
        let map = TextScoreMap::new(100, 100, scores).unwrap();
        let rects = segment_text_regions(&map);
        assert_eq!(rects, vec![Rect::new(4, 4, 44, 44)]);
    }

    #[test]
    fn map_validation() {
        assert!(TextScoreMap::new(2, 2, vec![0.0; 3]).is_err());
        assert!(TextScoreMap::new(1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn scorer_separates_text_from_flat() {
        let mut img = GrayImage::filled(80, 40, 0.8);
        crate::font::draw_text(&mut img, "abc", 10, 10, 2, 0.1);
        let map = GradientDensityScorer::default().score(&img);
        assert_eq!(map.get(70, 35), 0.0);
        assert!(map.get(14, 16) > 50.0);
        assert!(map.scores().iter().all(|s| (0.0..=100.0).contains(s)));
    }
}
