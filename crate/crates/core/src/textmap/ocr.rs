use crate::error::{Error, Result};
use crate::font::{glyphs, ink, GLYPH_GAP, GLYPH_H, GLYPH_W};
use crate::geometry::Rect;
use crate::imagecore::GrayImage;

/// Reads the text inside one rectangle of an image.
pub trait OcrAdapter: Send + Sync {
    fn name(&self) -> &str;

    /// Fails when the engine cannot be used at all.
    fn check_available(&self) -> Result<()> {
        Ok(())
    }

    fn recognize(&self, image: &GrayImage, region: Rect) -> Result<String>;
}

/// One string per region; a region the adapter fails on yields `""`.
pub fn recognize_words(image: &GrayImage, regions: &[Rect], ocr: &dyn OcrAdapter) -> Result<Vec<String>> {
    ocr.check_available()?;
    for r in regions {
        if r.right() > image.width() || r.bottom() > image.height() {
            return Err(Error::param("regions", format!("{r:?} lies outside the image")));
        }
    }
    Ok(regions
        .iter()
        .map(|&r| match ocr.recognize(image, r) {
            Ok(s) => s,
            Err(e) => {
                log::debug!("{}: region {r:?} failed: {e}", ocr.name());
                String::new()
            }
        })
        .collect())
}

/// Reads text printed in the built-in 5x7 bitmap font at any integer
/// scale, as on synthetic packaging. Lines are found by row projection of
/// the binarized region; a line decodes only if every glyph matches the
/// font exactly, so logos and pictures read as nothing.
#[derive(Clone, Copy, Debug, Default)]
pub struct FontOcr;

impl OcrAdapter for FontOcr {
    fn name(&self) -> &str {
        "font"
    }

    fn recognize(&self, image: &GrayImage, region: Rect) -> Result<String> {
        let crop = image.crop(region.x, region.y, region.w, region.h);
        let Some(bits) = binarize(&crop) else {
            return Ok(String::new());
        };
        let (w, h) = (crop.width(), crop.height());
        let row_ink: Vec<bool> = (0..h).map(|y| (0..w).any(|x| bits[y * w + x])).collect();
        let mut words = Vec::new();
        for (y0, y1) in runs(&row_ink) {
            let band = y1 - y0;
            if band % GLYPH_H != 0 {
                continue;
            }
            if let Some(line) = read_line(&bits, w, y0, band / GLYPH_H) {
                words.extend(line);
            }
        }
        Ok(words.join(" "))
    }
}

/// Ink mask: pixels on the minority side of the midpoint between the
/// darkest and brightest pixel. `None` for flat regions.
fn binarize(img: &GrayImage) -> Option<Vec<bool>> {
    let (lo, hi) = img
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi - lo > 0.1) {
        return None;
    }
    let mid = (lo + hi) / 2.0;
    let dark: Vec<bool> = img.data().iter().map(|&v| v < mid).collect();
    let n_dark = dark.iter().filter(|&&d| d).count();
    Some(if 2 * n_dark <= dark.len() {
        dark
    } else {
        dark.into_iter().map(|d| !d).collect()
    })
}

/// Half-open index ranges of consecutive `true` values.
fn runs(v: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &b) in v.iter().chain([&false]).enumerate() {
        match (b, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    out
}

fn read_line(bits: &[bool], w: usize, y0: usize, scale: usize) -> Option<Vec<String>> {
    let col_ink: Vec<bool> = (0..w)
        .map(|x| (0..GLYPH_H * scale).any(|dy| bits[(y0 + dy) * w + x]))
        .collect();
    let pitch = (GLYPH_W + GLYPH_GAP) * scale;
    let mut words = Vec::new();
    let mut word = String::new();
    let mut prev_end: Option<usize> = None;
    for (a, b) in runs(&col_ink) {
        if (b - a) > GLYPH_W * scale || (b - a) % scale != 0 {
            return None;
        }
        if let Some(end) = prev_end {
            // A blank glyph cell between runs separates words.
            if a - end >= pitch && !word.is_empty() {
                words.push(std::mem::take(&mut word));
            }
        }
        word.push(decode_glyph(bits, w, y0, a, b, scale)?);
        prev_end = Some(b);
    }
    if !word.is_empty() {
        words.push(word);
    }
    Some(words)
}

/// Tries every horizontal placement of the 5-column cell that covers the
/// ink run and returns the first exact font match.
fn decode_glyph(bits: &[bool], w: usize, y0: usize, a: usize, b: usize, scale: usize) -> Option<char> {
    let span = (b - a) / scale;
    for lead in 0..=GLYPH_W - span {
        let Some(x0) = a.checked_sub(lead * scale) else { continue };
        let sample = |col: usize, row: usize| {
            let x = x0 + col * scale + scale / 2;
            x < w && bits[(y0 + row * scale + scale / 2) * w + x]
        };
        if let Some((c, _)) = glyphs().find(|(_, rows)| {
            (0..GLYPH_H).all(|row| (0..GLYPH_W).all(|col| ink(rows, col, row) == sample(col, row)))
        }) {
            return Some(c);
        }
    }
    None
}
