use image::{ImageBuffer, Luma, RgbImage};

use crate::error::{Error, Result};

/// Single-channel image with row-major intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("image", "width and height must be at least 1"));
        }
        if data.len() != width * height {
            return Err(Error::param(
                "image",
                format!("{} values for a {width}x{height} image", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("image", "non-finite intensity"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        assert!(width > 0 && height > 0);
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_luma8(img: &image::GrayImage) -> Self {
        let (w, h) = img.dimensions();
        let data = img.as_raw().iter().map(|&v| f32::from(v) / 255.0).collect();
        Self {
            width: w as usize,
            height: h as usize,
            data,
        }
    }

    pub fn from_dynamic(img: &image::DynamicImage) -> Self {
        match img {
            image::DynamicImage::ImageLuma8(g) => Self::from_luma8(g),
            other => to_grayscale(&other.to_rgb8()),
        }
    }

    /// Quantizes to 8 bits, clamping to `[0, 1]`.
    pub fn to_luma8(&self) -> image::GrayImage {
        let raw = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        image::GrayImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Sub-image; the rectangle is clipped to the image bounds.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> GrayImage {
        let x1 = (x + w).min(self.width);
        let y1 = (y + h).min(self.height);
        let x0 = x.min(x1.saturating_sub(1));
        let y0 = y.min(y1.saturating_sub(1));
        GrayImage::from_fn(x1 - x0, y1 - y0, |cx, cy| self.get(x0 + cx, y0 + cy))
    }

    /// Resamples with a triangle filter (antialiased when shrinking).
    pub fn resize(&self, width: usize, height: usize) -> GrayImage {
        assert!(width > 0 && height > 0);
        if width == self.width && height == self.height {
            return self.clone();
        }
        let buf: ImageBuffer<Luma<f32>, Vec<f32>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, self.data.clone())
                .expect("buffer length matches dimensions");
        let out = image::imageops::resize(
            &buf,
            width as u32,
            height as u32,
            image::imageops::FilterType::Triangle,
        );
        GrayImage {
            width,
            height,
            data: out.into_raw(),
        }
    }

    /// Separable Gaussian blur with replicated borders.
    pub fn gaussian_blur(&self, sigma: f32) -> GrayImage {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as i64;
        let mut kernel: Vec<f32> = (-radius..=radius)
            .map(|i| (-((i * i) as f32) / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f32 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= total);
        let (w, h) = (self.width as i64, self.height as i64);
        let mut tmp = vec![0.0f32; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, i) in kernel.iter().zip(-radius..=radius) {
                    let sx = (x + i).clamp(0, w - 1);
                    acc += k * self.data[(y * w + sx) as usize];
                }
                tmp[(y * w + x) as usize] = acc;
            }
        }
        let mut out = vec![0.0f32; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, i) in kernel.iter().zip(-radius..=radius) {
                    let sy = (y + i).clamp(0, h - 1);
                    acc += k * tmp[(sy * w + x) as usize];
                }
                out[(y * w + x) as usize] = acc;
            }
        }
        GrayImage {
            width: self.width,
            height: self.height,
            data: out,
        }
    }

    /// Scales so the height does not exceed `max_height`, preserving aspect.
    pub fn limit_height(&self, max_height: usize) -> GrayImage {
        if self.height <= max_height {
            return self.clone();
        }
        let ratio = max_height as f64 / self.height as f64;
        let w = ((self.width as f64 * ratio).round() as usize).max(1);
        self.resize(w, max_height)
    }
}

/// Rec.601 luma.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let (w, h) = img.dimensions();
    let data = img
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            (0.299 * f32::from(r) + 0.587 * f32::from(g) + 0.114 * f32::from(b)) / 255.0
        })
        .collect();
    GrayImage {
        width: w as usize,
        height: h as usize,
        data,
    }
}

/// Zero-mean, unit-variance copy of an image.
#[derive(Clone, Debug)]
pub struct NormalizedGrid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// Set when the input was constant; `values` is then all zeros.
    pub degenerate: bool,
}

pub fn zscore_normalize(image: &GrayImage) -> NormalizedGrid {
    let n = image.data.len() as f64;
    let mean = image.data.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = image
        .data
        .iter()
        .map(|&v| (f64::from(v) - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    if std <= f64::EPSILON * mean.abs().max(1.0) {
        return NormalizedGrid {
            width: image.width,
            height: image.height,
            values: vec![0.0; image.data.len()],
            degenerate: true,
        };
    }
    NormalizedGrid {
        width: image.width,
        height: image.height,
        values: image
            .data
            .iter()
            .map(|&v| (f64::from(v) - mean) / std)
            .collect(),
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gray_rgb_maps_to_same_level() {
        let img = RgbImage::from_pixel(4, 4, image::Rgb([128, 128, 128]));
        let g = to_grayscale(&img);
        assert!(g.data().iter().all(|&v| (v - 128.0 / 255.0).abs() < 1e-6));
        assert!((g.get(0, 0) - 0.502).abs() < 1e-3);
    }

    #[test]
    fn red_is_brighter_than_blue() {
        let red = to_grayscale(&RgbImage::from_pixel(1, 1, image::Rgb([255, 0, 0])));
        let blue = to_grayscale(&RgbImage::from_pixel(1, 1, image::Rgb([0, 0, 255])));
        assert!(red.get(0, 0) > blue.get(0, 0));
    }

    #[test]
    fn grayscale_preserves_shape() {
        let g = to_grayscale(&RgbImage::new(3, 2));
        assert_eq!((g.width(), g.height()), (3, 2));
    }

    #[test]
    fn zscore_two_pixels() {
        let img = GrayImage::new(2, 1, vec![0.0, 1.0]).unwrap();
        let z = zscore_normalize(&img);
        assert!(!z.degenerate);
        assert!((z.values[0] + 1.0).abs() < 1e-12);
        assert!((z.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zscore_constant_is_degenerate() {
        let z = zscore_normalize(&GrayImage::filled(5, 5, 0.3));
        assert!(z.degenerate);
        assert!(z.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zscore_random_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = GrayImage::from_fn(100, 100, |_, _| rng.random::<f32>());
        let z = zscore_normalize(&img);
        let n = z.values.len() as f64;
        let mean = z.values.iter().sum::<f64>() / n;
        let std = (z.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() <= 1e-6);
        assert!((std - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(GrayImage::new(0, 3, vec![]).is_err());
        assert!(GrayImage::new(2, 2, vec![0.0; 3]).is_err());
        assert!(GrayImage::new(1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn limit_height_keeps_aspect() {
        let img = GrayImage::filled(400, 2000, 0.5);
        let small = img.limit_height(1080);
        assert_eq!(small.height(), 1080);
        assert_eq!(small.width(), 216);
    }
}
