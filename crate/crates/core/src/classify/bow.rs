//! Bag-of-visual-words baseline: 128-dimensional gradient-histogram
//! descriptors at Hessian blob points, a k-means vocabulary and normalized
//! word histograms.

use serde::{Deserialize, Serialize};

use super::{train_ovr, SvmModel, SvmParams};
use crate::encoder::EncodingMode;
use crate::error::{Error, Result};
use crate::imagecore::GrayImage;
use crate::kmeans::{kmeans, KMeans, MAX_ITERATIONS};
use crate::seed::rng_for;

pub const DESCRIPTOR_LEN: usize = 128;
pub const DEFAULT_VOCAB_SIZE: usize = 200;
const GRID: usize = 4;
const ORIENTATIONS: usize = 8;
const VOCAB_SAMPLE_TAG: u64 = 0xb0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BowParams {
    pub vocab_size: usize,
    /// Blob detection scales (Gaussian sigma, pixels).
    pub scales: Vec<f32>,
    /// Scale-normalized Hessian determinant needed for a keypoint.
    pub min_response: f32,
    pub max_keypoints: usize,
    /// Descriptors sampled for vocabulary building.
    pub vocab_sample: usize,
    pub seed: u64,
}

impl Default for BowParams {
    fn default() -> Self {
        Self {
            vocab_size: DEFAULT_VOCAB_SIZE,
            scales: vec![1.6, 2.26, 3.2, 4.53, 6.4],
            min_response: 1e-4,
            max_keypoints: 400,
            vocab_sample: 30_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    pub sigma: f32,
    pub response: f32,
}

/// Local maxima of the scale-normalized Hessian determinant over space and
/// scale, strongest first.
pub fn detect_keypoints(image: &GrayImage, params: &BowParams) -> Vec<Keypoint> {
    let (w, h) = (image.width(), image.height());
    if w < 3 || h < 3 || params.scales.is_empty() {
        return Vec::new();
    }
    let responses: Vec<Vec<f32>> = params
        .scales
        .iter()
        .map(|&s| {
            let g = image.gaussian_blur(s);
            let mut r = vec![0.0f32; w * h];
            let norm = s.powi(4);
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let at = |dx: isize, dy: isize| g.get((x as isize + dx) as usize, (y as isize + dy) as usize);
                    let c = at(0, 0);
                    let dxx = at(1, 0) - 2.0 * c + at(-1, 0);
                    let dyy = at(0, 1) - 2.0 * c + at(0, -1);
                    let dxy = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / 4.0;
                    r[y * w + x] = norm * (dxx * dyy - dxy * dxy);
                }
            }
            r
        })
        .collect();
    let mut points = Vec::new();
    for (si, r) in responses.iter().enumerate() {
        let s = params.scales[si];
        let margin = (s.ceil() as usize).max(1);
        if w <= 2 * margin || h <= 2 * margin {
            continue;
        }
        for y in margin..h - margin {
            for x in margin..w - margin {
                let v = r[y * w + x];
                if v <= params.min_response {
                    continue;
                }
                let mut is_max = true;
                'scan: for layer in si.saturating_sub(1)..(si + 2).min(responses.len()) {
                    for dy in -1isize..=1 {
                        for dx in -1isize..=1 {
                            if layer == si && dx == 0 && dy == 0 {
                                continue;
                            }
                            let (nx, ny) = ((x as isize + dx) as usize, (y as isize + dy) as usize);
                            if responses[layer][ny * w + nx] >= v {
                                is_max = false;
                                break 'scan;
                            }
                        }
                    }
                }
                if is_max {
                    points.push(Keypoint {
                        x: x as f32,
                        y: y as f32,
                        sigma: s,
                        response: v,
                    });
                }
            }
        }
    }
    points.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    points.truncate(params.max_keypoints);
    points
}

/// Upright 4x4 x 8-orientation gradient histogram over a square of side
/// `12 sigma` around the keypoint, normalized with clipping at 0.2.
pub fn describe(image: &GrayImage, kp: &Keypoint) -> [f32; DESCRIPTOR_LEN] {
    let mut d = [0.0f32; DESCRIPTOR_LEN];
    let side = 12.0 * kp.sigma;
    let step = (kp.sigma / 2.0).max(1.0);
    let samples = (side / step).round() as usize;
    let (w, h) = (image.width() as isize, image.height() as isize);
    let px = |x: f32, y: f32| {
        let xi = (x.round() as isize).clamp(0, w - 1) as usize;
        let yi = (y.round() as isize).clamp(0, h - 1) as usize;
        image.get(xi, yi)
    };
    for sy in 0..samples {
        for sx in 0..samples {
            let u = (sx as f32 + 0.5) / samples as f32;
            let v = (sy as f32 + 0.5) / samples as f32;
            let x = kp.x + (u - 0.5) * side;
            let y = kp.y + (v - 0.5) * side;
            let gx = px(x + step, y) - px(x - step, y);
            let gy = px(x, y + step) - px(x, y - step);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag <= 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).rem_euclid(std::f32::consts::TAU);
            let bin = ((angle / std::f32::consts::TAU * ORIENTATIONS as f32) as usize).min(ORIENTATIONS - 1);
            let cx = ((u * GRID as f32) as usize).min(GRID - 1);
            let cy = ((v * GRID as f32) as usize).min(GRID - 1);
            d[(cy * GRID + cx) * ORIENTATIONS + bin] += mag;
        }
    }
    normalize_clip(&mut d);
    d
}

fn normalize_clip(d: &mut [f32]) {
    let norm = |d: &[f32]| d.iter().map(|v| v * v).sum::<f32>().sqrt();
    let n = norm(d);
    if n <= 0.0 {
        return;
    }
    d.iter_mut().for_each(|v| *v = (*v / n).min(0.2));
    let n = norm(d);
    d.iter_mut().for_each(|v| *v /= n);
}

/// Descriptors of an image, one 128-value row per keypoint.
pub fn extract_descriptors(image: &GrayImage, params: &BowParams) -> Vec<f32> {
    detect_keypoints(image, params)
        .iter()
        .flat_map(|kp| describe(image, kp))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BowVocabulary {
    pub params: BowParams,
    words: KMeans,
}

impl BowVocabulary {
    pub fn build(images: &[GrayImage], params: &BowParams) -> Result<Self> {
        let per_image = crate::par::map(images.len(), true, |i| extract_descriptors(&images[i], params));
        let all: Vec<f32> = per_image.concat();
        let n = all.len() / DESCRIPTOR_LEN;
        if n < params.vocab_size {
            return Err(Error::TooFewDescriptors {
                got: n,
                needed: params.vocab_size,
            });
        }
        let sample: Vec<f32> = if n > params.vocab_sample {
            let mut rng = rng_for(params.seed, VOCAB_SAMPLE_TAG, 0);
            let mut idx = rand::seq::index::sample(&mut rng, n, params.vocab_sample).into_vec();
            idx.sort_unstable();
            idx.iter()
                .flat_map(|&i| all[i * DESCRIPTOR_LEN..(i + 1) * DESCRIPTOR_LEN].iter().copied())
                .collect()
        } else {
            all
        };
        let mut words = kmeans(&sample, DESCRIPTOR_LEN, params.vocab_size, params.seed, MAX_ITERATIONS)?;
        words.assignments = Vec::new();
        Ok(Self {
            params: params.clone(),
            words,
        })
    }

    pub fn size(&self) -> usize {
        self.words.k()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let vocab: Self = serde_json::from_str(text)?;
        if vocab.words.dim != DESCRIPTOR_LEN
            || vocab.words.centroids.is_empty()
            || vocab.words.centroids.len() % DESCRIPTOR_LEN != 0
        {
            return Err(Error::Format("vocabulary centroids must be 128-dimensional".into()));
        }
        Ok(vocab)
    }

    pub fn word(&self, i: usize) -> &[f32] {
        self.words.centroid(i)
    }

    /// Word histogram normalized to sum to 1 (uniform when the image has no
    /// keypoints).
    pub fn histogram(&self, image: &GrayImage) -> Vec<f64> {
        let desc = extract_descriptors(image, &self.params);
        let k = self.size();
        if desc.is_empty() {
            return vec![1.0 / k as f64; k];
        }
        let mut counts = vec![0.0f64; k];
        for a in self.words.assign(&desc) {
            counts[a] += 1.0;
        }
        let total: f64 = counts.iter().sum();
        counts.iter().map(|&c| c / total).collect()
    }

    /// `histogram` as an SVM feature.
    pub fn feature(&self, image: &GrayImage) -> Vec<f32> {
        self.histogram(image).into_iter().map(|v| v as f32).collect()
    }
}

/// Vocabulary from the training images, then one-vs-rest SVMs on their
/// histograms.
pub fn bow_baseline_train(
    images: &[GrayImage],
    labels: &[usize],
    classes: &[String],
    bow: &BowParams,
    svm: &SvmParams,
) -> Result<(BowVocabulary, SvmModel)> {
    let vocab = BowVocabulary::build(images, bow)?;
    let hists = crate::par::map(images.len(), true, |i| vocab.feature(&images[i]));
    let refs: Vec<&[f32]> = hists.iter().map(Vec::as_slice).collect();
    let model = train_ovr(&refs, labels, classes, EncodingMode::Whole, svm)?;
    Ok((vocab, model))
}
