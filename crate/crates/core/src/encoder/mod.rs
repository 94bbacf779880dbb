//! Fixed-length image encoding by two-step max pooling of detector scores,
//! over the whole image and optionally over its four quadrants.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::imagecore::{compute_hog, GrayImage, CELL_SIZE};
use crate::patchmine::{DetectorBank, PackedDetectors, WindowMatrix};

/// Regions of the spatial pyramid, in vector order.
pub const REGIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    /// One bin per class.
    Whole,
    /// Whole image, then top-left, top-right, bottom-left, bottom-right.
    Pyramid,
}

impl EncodingMode {
    pub fn len(self, classes: usize) -> usize {
        match self {
            EncodingMode::Whole => classes,
            EncodingMode::Pyramid => REGIONS * classes,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EncodingMode::Whole => "whole",
            EncodingMode::Pyramid => "pyramid",
        }
    }
}

/// One window score above its detector's threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Index into the bank's detectors, class by class.
    pub detector: usize,
    pub class_id: usize,
    pub score: f32,
    pub rect: Rect,
    pub center: (f32, f32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub mode: EncodingMode,
    pub num_classes: usize,
    /// Value of a bin whose class never fired.
    pub floor: f32,
}

impl FeatureVector {
    /// Region `r` (see [`REGIONS`]) bin of class `c`.
    pub fn bin(&self, region: usize, class: usize) -> f32 {
        self.values[region * self.num_classes + class]
    }

    /// The whole-image part of the vector.
    pub fn whole(&self) -> FeatureVector {
        FeatureVector {
            values: self.values[..self.num_classes].to_vec(),
            mode: EncodingMode::Whole,
            num_classes: self.num_classes,
            floor: self.floor,
        }
    }
}

/// Detections of one image, with a flag for images too small to scan.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectionSet {
    pub detections: Vec<Detection>,
    pub image_too_small: bool,
}

/// Quadrant index (0..4, TL TR BL BR) of a point in a `width x height` image.
pub fn quadrant(center: (f32, f32), width: usize, height: usize) -> usize {
    let right = center.0 >= width as f32 / 2.0;
    let bottom = center.1 >= height as f32 / 2.0;
    usize::from(right) + 2 * usize::from(bottom)
}

/// A detector bank prepared for scanning images at a single scale.
#[derive(Clone, Debug)]
pub struct Encoder {
    bank: DetectorBank,
    packed: PackedDetectors,
    class_of: Vec<usize>,
    floor: f32,
}

impl Encoder {
    pub fn new(bank: DetectorBank) -> Result<Self> {
        if bank.is_empty() {
            return Err(Error::Empty("detector bank"));
        }
        let packed = PackedDetectors::new(bank.detectors())?;
        let floor = bank.detectors().next().map(|d| d.fire_threshold).unwrap_or_default();
        if bank.detectors().any(|d| d.fire_threshold != floor) {
            return Err(Error::param("fire_threshold", "detectors must share one threshold"));
        }
        let class_of = bank.detectors().map(|d| d.class_id).collect();
        Ok(Self {
            bank,
            packed,
            class_of,
            floor,
        })
    }

    pub fn bank(&self) -> &DetectorBank {
        &self.bank
    }

    pub fn num_classes(&self) -> usize {
        self.bank.num_classes()
    }

    pub fn floor(&self) -> f32 {
        self.floor
    }

    fn windows(&self, image: &GrayImage) -> Option<WindowMatrix> {
        let side = self.packed.window() * CELL_SIZE;
        if image.width() < side || image.height() < side {
            return None;
        }
        let grid = compute_hog(image).ok()?;
        Some(WindowMatrix::from_grid(&grid, self.packed.window()))
    }

    /// Every window score above threshold, for every detector, at the
    /// image's own scale. Ordered by detector, then window.
    pub fn detect_all(&self, image: &GrayImage, parallel: bool) -> DetectionSet {
        let Some(matrix) = self.windows(image) else {
            return DetectionSet {
                detections: Vec::new(),
                image_too_small: true,
            };
        };
        let per_det = self.packed.map_columns(&matrix, parallel, |d, scores| {
            let t = self.packed.threshold(d);
            scores
                .iter()
                .enumerate()
                .filter(|(_, &s)| s > t)
                .map(|(row, &score)| {
                    let rect = matrix.position(row).rect;
                    Detection {
                        detector: d,
                        class_id: self.class_of[d],
                        score,
                        rect,
                        center: rect.center(),
                    }
                })
                .collect::<Vec<_>>()
        });
        DetectionSet {
            detections: per_det.into_iter().flatten().collect(),
            image_too_small: false,
        }
    }

    /// Two-step max pooling of this image's detections. Equivalent to
    /// [`pool`] over [`Encoder::detect_all`], without materializing every
    /// detection.
    pub fn encode(&self, image: &GrayImage, mode: EncodingMode, parallel: bool) -> FeatureVector {
        let l = self.num_classes();
        let mut values = vec![self.floor; EncodingMode::Pyramid.len(l)];
        if let Some(matrix) = self.windows(image) {
            let (w, h) = (image.width(), image.height());
            let quadrant_of: Vec<usize> = matrix
                .positions()
                .iter()
                .map(|p| quadrant(p.rect.center(), w, h))
                .collect();
            let best = self.packed.map_columns(&matrix, parallel, |d, scores| {
                let t = self.packed.threshold(d);
                let mut q = [f32::NEG_INFINITY; 4];
                for (row, &s) in scores.iter().enumerate() {
                    if s > t && s > q[quadrant_of[row]] {
                        q[quadrant_of[row]] = s;
                    }
                }
                q
            });
            for (d, q) in best.iter().enumerate() {
                let c = self.class_of[d];
                for (r, &s) in q.iter().enumerate() {
                    let slot = &mut values[(r + 1) * l + c];
                    if s > *slot {
                        *slot = s;
                    }
                    if s > values[c] {
                        values[c] = s;
                    }
                }
            }
        }
        let v = FeatureVector {
            values,
            mode: EncodingMode::Pyramid,
            num_classes: l,
            floor: self.floor,
        };
        match mode {
            EncodingMode::Pyramid => v,
            EncodingMode::Whole => v.whole(),
        }
    }
}

/// Two-step max pooling of a detection list into a feature vector for a
/// `width x height` image: per class, the best detection score overall and
/// within each quadrant (by detection center), `floor` where nothing fired.
pub fn pool(
    detections: &[Detection],
    num_classes: usize,
    mode: EncodingMode,
    floor: f32,
    width: usize,
    height: usize,
) -> FeatureVector {
    let mut values = vec![floor; mode.len(num_classes)];
    for d in detections {
        let mut raise = |i: usize| {
            if d.score > values[i] {
                values[i] = d.score;
            }
        };
        raise(d.class_id);
        if mode == EncodingMode::Pyramid {
            raise((1 + quadrant(d.center, width, height)) * num_classes + d.class_id);
        }
    }
    FeatureVector {
        values,
        mode,
        num_classes,
        floor,
    }
}

/// Class whose best region bin is highest (lowest index on ties), or `None`
/// when every bin sits at the floor.
pub fn highest_score_class(vector: &FeatureVector) -> Option<usize> {
    let l = vector.num_classes;
    let regions = vector.values.len() / l.max(1);
    let mut best: Option<(usize, f32)> = None;
    for c in 0..l {
        let v = (0..regions)
            .map(|r| vector.values[r * l + c])
            .fold(f32::NEG_INFINITY, f32::max);
        if v > vector.floor && best.is_none_or(|(_, b)| v > b) {
            best = Some((c, v));
        }
    }
    best.map(|(c, _)| c)
}

/// Writes one CSV row per vector: image ref, mode, then the values.
pub fn write_features_csv<W: Write>(out: W, rows: &[(String, FeatureVector)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let width = rows.iter().map(|(_, v)| v.values.len()).max().unwrap_or(0);
    let mut header = vec!["image".to_string(), "mode".to_string()];
    header.extend((0..width).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for (image, v) in rows {
        let mut rec = vec![image.clone(), v.mode.as_str().to_string()];
        rec.extend(v.values.iter().map(|x| x.to_string()));
        rec.resize(width + 2, String::new());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
