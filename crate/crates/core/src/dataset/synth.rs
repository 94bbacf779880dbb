//! Desk-scale stand-in for a grocery dataset. Each class is a packaging
//! design: a block-pattern logo, a larger motif (block pattern, stripes,
//! rings or a polygon) and a printed brand word. Training images are single clean products; test images are
//! shelves of several products of one class with blur, noise, occlusion and
//! lighting changes.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Catalog, ImageRef, TestImage, TRAIN_DIR};
use crate::error::{Error, Result};
use crate::font;
use crate::imagecore::GrayImage;
use crate::seed::rng_for;

pub const PRODUCT_WIDTH: usize = 96;
pub const PRODUCT_HEIGHT: usize = 144;

const MOTIF_BLOCKS: usize = 5;
const MOTIF_PX: usize = 44;
const LOGO_BLOCKS: usize = 4;
const BLOCK_PX: usize = 8;
const TEXT_SCALE: usize = 2;

const STYLE_TAG: u64 = 1;
const TRAIN_TAG: u64 = 2;
const TEST_TAG: u64 = 3;

const GROCERY_CLASSES: [&str; 26] = [
    "bakery", "beer", "biscuits", "candy", "cereals", "cheese", "chips", "coffee", "flour",
    "honey", "jam", "juice", "milk", "nuts", "oil", "pasta", "rice", "sauces", "snacks", "soups",
    "spices", "sugar", "tea", "water", "wine", "yoghurt",
];

/// `n` distinct class names in lexicographic order: grocery categories when
/// there are enough of them, numbered names otherwise.
pub fn class_names(n: usize) -> Vec<String> {
    if n <= GROCERY_CLASSES.len() {
        GROCERY_CLASSES[..n].iter().map(|s| s.to_string()).collect()
    } else {
        (0..n).map(|i| format!("class{i:04}")).collect()
    }
}

/// Visual identity of one synthetic class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassStyle {
    pub name: String,
    pub logo: [[bool; LOGO_BLOCKS]; LOGO_BLOCKS],
    pub motif: Motif,
    /// Words printed on packaging; training image `i` carries
    /// `words[i % words.len()]`.
    pub words: Vec<String>,
}

/// The large central graphic of a package.
#[derive(Clone, Debug, PartialEq)]
pub enum Motif {
    Blocks {
        pattern: [[bool; MOTIF_BLOCKS]; MOTIF_BLOCKS],
        block: usize,
    },
    Stripes { angle_deg: f32, period: f32 },
    Rings { period: f32 },
    Polygon { sides: usize, rotation_deg: f32, filled: bool },
}

impl Motif {
    fn size(&self) -> usize {
        match self {
            Motif::Blocks { block, .. } => MOTIF_BLOCKS * block,
            _ => MOTIF_PX,
        }
    }

    /// Whether local point (u, v) is inked.
    fn covers(&self, u: f32, v: f32) -> bool {
        let half = self.size() as f32 / 2.0;
        match self {
            Motif::Blocks { pattern, block } => {
                let (bx, by) = ((u / *block as f32) as usize, (v / *block as f32) as usize);
                bx < MOTIF_BLOCKS && by < MOTIF_BLOCKS && pattern[by][bx]
            }
            Motif::Stripes { angle_deg, period } => {
                let a = angle_deg.to_radians();
                let d = (u - half) * a.cos() + (v - half) * a.sin();
                (d / period).rem_euclid(1.0) < 0.5
            }
            Motif::Rings { period } => {
                let r = ((u - half).powi(2) + (v - half).powi(2)).sqrt();
                r < half && (r / period).rem_euclid(1.0) < 0.5
            }
            Motif::Polygon {
                sides,
                rotation_deg,
                filled,
            } => {
                let radius = half - 1.0;
                let inside = |r: f32| {
                    let (x, y) = (u - half, v - half);
                    let step = std::f32::consts::TAU / *sides as f32;
                    let apothem = r * (step / 2.0).cos();
                    (0..*sides).all(|k| {
                        let a = rotation_deg.to_radians() + (k as f32 + 0.5) * step;
                        x * a.cos() + y * a.sin() <= apothem
                    })
                };
                inside(radius) && (*filled || !inside(radius - 6.0))
            }
        }
    }

    fn similar(&self, other: &Motif) -> bool {
        match (self, other) {
            (Motif::Blocks { pattern: a, .. }, Motif::Blocks { pattern: b, .. }) => {
                let diff = a
                    .iter()
                    .flatten()
                    .zip(b.iter().flatten())
                    .filter(|(x, y)| x != y)
                    .count();
                diff < 8
            }
            (
                Motif::Stripes {
                    angle_deg: a,
                    period: p,
                },
                Motif::Stripes {
                    angle_deg: b,
                    period: q,
                },
            ) => {
                let d = (a - b).rem_euclid(180.0);
                d.min(180.0 - d) < 25.0 && (p - q).abs() < 3.0
            }
            (Motif::Rings { period: p }, Motif::Rings { period: q }) => (p - q).abs() < 3.0,
            (
                Motif::Polygon {
                    sides: a,
                    filled: fa,
                    ..
                },
                Motif::Polygon {
                    sides: b,
                    filled: fb,
                    ..
                },
            ) => a == b && fa == fb,
            _ => false,
        }
    }

    fn random(rng: &mut ChaCha8Rng) -> Motif {
        match rng.random_range(0..4) {
            0 => {
                let mut pattern = [[false; MOTIF_BLOCKS]; MOTIF_BLOCKS];
                loop {
                    for v in pattern.iter_mut().flatten() {
                        *v = rng.random_bool(0.5);
                    }
                    let ink = pattern.iter().flatten().filter(|&&v| v).count();
                    if (8..=17).contains(&ink) {
                        break;
                    }
                }
                Motif::Blocks {
                    pattern,
                    block: rng.random_range(6..=10),
                }
            }
            1 => Motif::Stripes {
                angle_deg: 15.0 * rng.random_range(0..12) as f32,
                period: rng.random_range(7.0..14.0),
            },
            2 => Motif::Rings {
                period: rng.random_range(6.0..14.0),
            },
            _ => Motif::Polygon {
                sides: rng.random_range(3..=6),
                rotation_deg: rng.random_range(0.0..360.0),
                filled: rng.random_bool(0.5),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    /// Inclusive range of products per shelf image.
    pub products_per_image: (usize, usize),
    /// Product scales relative to training images; one is drawn per shelf.
    pub product_scales: Vec<f64>,
    pub noise_sigma: (f32, f32),
    pub blur_sigma: (f32, f32),
    pub occlusion_prob: f32,
    /// Contrast multiplier range applied around mid-gray.
    pub contrast: (f32, f32),
    /// Classes that all reuse the logo of the first listed class.
    pub shared_logo: Vec<usize>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            products_per_image: (6, 30),
            product_scales: vec![1.0, std::f64::consts::FRAC_1_SQRT_2],
            noise_sigma: (0.004, 0.015),
            blur_sigma: (0.4, 0.9),
            occlusion_prob: 0.3,
            contrast: (0.75, 1.0),
            shared_logo: Vec::new(),
        }
    }
}

impl SynthOptions {
    /// Stronger degradations and smaller shelves: a test domain that differs
    /// markedly from the clean training images.
    pub fn domain_shifted() -> Self {
        Self {
            products_per_image: (6, 10),
            product_scales: vec![std::f64::consts::FRAC_1_SQRT_2],
            noise_sigma: (0.04, 0.07),
            blur_sigma: (0.9, 1.4),
            occlusion_prob: 0.5,
            contrast: (0.45, 0.7),
            shared_logo: Vec::new(),
        }
    }
}

pub(crate) struct Renderer {
    seed: u64,
    styles: Vec<ClassStyle>,
    options: SynthOptions,
    items: BTreeMap<ImageRef, Item>,
}

#[derive(Clone, Copy)]
enum Item {
    Train { class: usize, index: usize },
    Test { class: usize, index: usize },
}

impl Renderer {
    pub(crate) fn render(&self, image: &str) -> Result<GrayImage> {
        let item = self
            .items
            .get(image)
            .ok_or_else(|| Error::param("image", format!("unknown image `{image}`")))?;
        let img = match *item {
            Item::Train { class, index } => {
                let style = &self.styles[class];
                let word = &style.words[index % style.words.len()];
                let mut rng = rng_for(self.seed, TRAIN_TAG, (class * 1_000_003 + index) as u64);
                render_product(style, Some(word.as_str()), &mut rng)
            }
            Item::Test { class, index } => {
                let mut rng = rng_for(self.seed, TEST_TAG, index as u64);
                render_shelf(&self.styles[class], &self.options, &mut rng)
            }
        };
        // Quantize exactly as a PNG round trip would.
        Ok(GrayImage::from_luma8(&img.to_luma8()))
    }
}

pub fn generate_synthetic(
    num_classes: usize,
    per_class: usize,
    shelf_images: usize,
    seed: u64,
) -> Result<Catalog> {
    generate_synthetic_with(num_classes, per_class, shelf_images, seed, &SynthOptions::default())
}

/// Synthetic catalog; images are rendered lazily and deterministically from
/// `seed`. Shelf image `i` shows class `i mod num_classes`.
pub fn generate_synthetic_with(
    num_classes: usize,
    per_class: usize,
    shelf_images: usize,
    seed: u64,
    options: &SynthOptions,
) -> Result<Catalog> {
    if num_classes < 2 {
        return Err(Error::param("num_classes", "at least 2 classes required"));
    }
    if per_class < 5 {
        return Err(Error::param("per_class", "at least 5 images per class required"));
    }
    let (lo, hi) = options.products_per_image;
    if lo == 0 || lo > hi {
        return Err(Error::param("products_per_image", "need 1 <= min <= max"));
    }
    if options.product_scales.is_empty() || options.product_scales.iter().any(|&s| s <= 0.0) {
        return Err(Error::param("product_scales", "need at least one positive scale"));
    }
    if options.shared_logo.iter().any(|&c| c >= num_classes) {
        return Err(Error::param("shared_logo", "class index out of range"));
    }

    let mut styles = make_styles(num_classes, seed);
    if let Some(&first) = options.shared_logo.first() {
        let logo = styles[first].logo;
        for &c in &options.shared_logo[1..] {
            styles[c].logo = logo;
        }
    }
    // Names are generated in lexicographic order so indices are stable.
    let mut order: Vec<usize> = (0..num_classes).collect();
    order.sort_by(|&a, &b| styles[a].name.cmp(&styles[b].name));
    debug_assert!(order.iter().enumerate().all(|(i, &o)| i == o));

    let mut items = BTreeMap::new();
    let mut train = Vec::with_capacity(num_classes);
    for (class, style) in styles.iter().enumerate() {
        let refs: Vec<ImageRef> = (0..per_class)
            .map(|i| format!("{TRAIN_DIR}/{0}/{0}_{i:04}.png", style.name))
            .collect();
        for (index, r) in refs.iter().enumerate() {
            items.insert(r.clone(), Item::Train { class, index });
        }
        train.push(refs);
    }
    let mut test = Vec::with_capacity(shelf_images);
    for index in 0..shelf_images {
        let class = index % num_classes;
        let r = format!("test/shelf_{index:05}.png");
        items.insert(r.clone(), Item::Test { class, index });
        test.push(TestImage { image: r, class });
    }

    let classes = styles.iter().map(|s| s.name.clone()).collect();
    Ok(Catalog::from_renderer(
        classes,
        train,
        test,
        Renderer {
            seed,
            styles,
            options: options.clone(),
            items,
        },
    ))
}

/// The class styles `generate_synthetic` uses for `seed`.
pub fn synthetic_styles(num_classes: usize, seed: u64) -> Vec<ClassStyle> {
    make_styles(num_classes, seed)
}

fn make_styles(num_classes: usize, seed: u64) -> Vec<ClassStyle> {
    let mut rng = rng_for(seed, STYLE_TAG, 0);
    let names = class_names(num_classes);
    let mut motifs: Vec<Motif> = Vec::new();
    let mut logos: Vec<[[bool; LOGO_BLOCKS]; LOGO_BLOCKS]> = Vec::new();
    let mut words = BTreeSet::new();
    let mut styles = Vec::with_capacity(num_classes);
    for name in names {
        let motif = loop {
            let m = Motif::random(&mut rng);
            if !motifs.iter().any(|o| o.similar(&m)) {
                break m;
            }
        };
        motifs.push(motif.clone());
        let logo = distinct_pattern(&mut rng, &logos, 5);
        logos.push(logo);
        let word = loop {
            let w = brand_word(&mut rng);
            if words.insert(w.clone()) {
                break w;
            }
        };
        styles.push(ClassStyle {
            name,
            logo,
            motif,
            words: vec![word],
        });
    }
    styles
}

fn distinct_pattern<const N: usize>(
    rng: &mut ChaCha8Rng,
    existing: &[[[bool; N]; N]],
    min_distance: usize,
) -> [[bool; N]; N] {
    let cells = N * N;
    let mut best = [[false; N]; N];
    let mut best_dist = 0;
    for _ in 0..2000 {
        let mut p = [[false; N]; N];
        for row in p.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.random_bool(0.5);
            }
        }
        let ink = p.iter().flatten().filter(|&&v| v).count();
        if ink < cells * 3 / 10 || ink > cells * 7 / 10 {
            continue;
        }
        let dist = existing
            .iter()
            .map(|e| {
                e.iter()
                    .flatten()
                    .zip(p.iter().flatten())
                    .filter(|(a, b)| a != b)
                    .count()
            })
            .min()
            .unwrap_or(cells);
        if dist >= min_distance {
            return p;
        }
        if dist > best_dist {
            best = p;
            best_dist = dist;
        }
    }
    best
}

fn brand_word(rng: &mut ChaCha8Rng) -> String {
    const CONSONANTS: &[u8] = b"bcdfghklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let len = rng.random_range(5..=6);
    (0..len)
        .map(|i| {
            let set = if i % 2 == 0 { CONSONANTS } else { VOWELS };
            set[rng.random_range(0..set.len())] as char
        })
        .collect()
}

fn fill_rect(img: &mut GrayImage, x: i64, y: i64, w: usize, h: usize, value: f32) {
    let x0 = x.max(0) as usize;
    let y0 = y.max(0) as usize;
    let x1 = ((x + w as i64).max(0) as usize).min(img.width());
    let y1 = ((y + h as i64).max(0) as usize).min(img.height());
    for yy in y0..y1 {
        for xx in x0..x1 {
            img.set(xx, yy, value);
        }
    }
}

fn draw_pattern<const N: usize>(
    img: &mut GrayImage,
    pattern: &[[bool; N]; N],
    x: i64,
    y: i64,
    value: f32,
) {
    for (by, row) in pattern.iter().enumerate() {
        for (bx, &on) in row.iter().enumerate() {
            if on {
                fill_rect(
                    img,
                    x + (bx * BLOCK_PX) as i64,
                    y + (by * BLOCK_PX) as i64,
                    BLOCK_PX,
                    BLOCK_PX,
                    value,
                );
            }
        }
    }
}

/// Anti-aliased (3x3 supersampled) motif with its top-left corner at (x, y).
fn draw_motif(img: &mut GrayImage, motif: &Motif, x: i64, y: i64, ink: f32) {
    let size = motif.size() as i64;
    for py in y.max(0)..(y + size).min(img.height() as i64) {
        for px in x.max(0)..(x + size).min(img.width() as i64) {
            let mut hits = 0;
            for sy in 0..3 {
                for sx in 0..3 {
                    let u = (px - x) as f32 + (sx as f32 + 0.5) / 3.0;
                    let v = (py - y) as f32 + (sy as f32 + 0.5) / 3.0;
                    hits += usize::from(motif.covers(u, v));
                }
            }
            if hits > 0 {
                let a = hits as f32 / 9.0;
                let (ux, uy) = (px as usize, py as usize);
                let bg = img.get(ux, uy);
                img.set(ux, uy, bg * (1.0 - a) + ink * a);
            }
        }
    }
}

/// One clean product of `style`, `PRODUCT_WIDTH` x `PRODUCT_HEIGHT`, with
/// per-instance tone, jitter and small decorations.
pub fn render_product(style: &ClassStyle, word: Option<&str>, rng: &mut ChaCha8Rng) -> GrayImage {
    let bg = rng.random_range(0.6..0.95f32);
    let ink = rng.random_range(0.05..0.3f32);
    let shade = rng.random_range(-0.08..0.08f32);
    let mut img = GrayImage::from_fn(PRODUCT_WIDTH, PRODUCT_HEIGHT, |_, y| {
        (bg + shade * (y as f32 / PRODUCT_HEIGHT as f32 - 0.5)).clamp(0.0, 1.0)
    });
    let mut jitter = || rng.random_range(-2i64..=2);

    let logo_px = (LOGO_BLOCKS * BLOCK_PX) as i64;
    let lx = (PRODUCT_WIDTH as i64 - logo_px) / 2 + jitter();
    let ly = 8 + jitter();
    draw_pattern(&mut img, &style.logo, lx, ly, ink);

    let motif_px = style.motif.size() as i64;
    let mx = (PRODUCT_WIDTH as i64 - motif_px) / 2 + jitter();
    let my = 48 + (50 - motif_px) / 2 + jitter();
    draw_motif(&mut img, &style.motif, mx, my, ink);

    if let Some(word) = word {
        let tw = font::text_width(word.chars().count(), TEXT_SCALE) as i64;
        let tx = (PRODUCT_WIDTH as i64 - tw) / 2 + jitter();
        let ty = 108 + jitter();
        font::draw_text(&mut img, word, tx, ty, TEXT_SCALE, ink);
    }

    // Instance-specific decorations in the side margins.
    for _ in 0..rng.random_range(1..=3) {
        let w = rng.random_range(3..=7);
        let h = rng.random_range(3..=10);
        let left = rng.random_bool(0.5);
        let x = if left {
            rng.random_range(2..(24 - w))
        } else {
            rng.random_range(72..(94 - w))
        };
        let y = rng.random_range(46..(92 - h));
        let tone = rng.random_range(0.0..1.0f32);
        fill_rect(&mut img, x as i64, y as i64, w, h, tone);
    }
    img
}

/// A shelf photo of several products of one class.
pub fn render_shelf(style: &ClassStyle, options: &SynthOptions, rng: &mut ChaCha8Rng) -> GrayImage {
    let (lo, hi) = options.products_per_image;
    let n = rng.random_range(lo..=hi);
    let scale = options.product_scales[rng.random_range(0..options.product_scales.len())];
    let pw = ((PRODUCT_WIDTH as f64 * scale).round() as usize).max(1);
    let ph = ((PRODUCT_HEIGHT as f64 * scale).round() as usize).max(1);
    let cols = ((n as f64 * 1.4).sqrt().ceil() as usize).clamp(1, n);
    let rows = n.div_ceil(cols);
    let gap = rng.random_range(4..=10usize);
    let shelf = 10usize;
    let width = gap + cols * (pw + gap);
    let height = gap + rows * (ph + gap + shelf);

    let bg = rng.random_range(0.3..0.7f32);
    let tilt = rng.random_range(-0.15..0.15f32);
    let mut img = GrayImage::from_fn(width, height, |x, _| {
        (bg + tilt * (x as f32 / width as f32 - 0.5)).clamp(0.0, 1.0)
    });

    for k in 0..n {
        let (row, col) = (k / cols, k % cols);
        let word = &style.words[rng.random_range(0..style.words.len())];
        let product = render_product(style, Some(word.as_str()), rng);
        let mut product = product.resize(pw, ph);
        if rng.random::<f32>() < options.occlusion_prob {
            let ow = rng.random_range(pw * 3 / 10..=pw * 6 / 10).max(1);
            let oh = rng.random_range(ph * 2 / 10..=ph * 4 / 10).max(1);
            let ox = rng.random_range(0..=pw - ow) as i64;
            let oy = rng.random_range(0..=ph - oh) as i64;
            let tone = rng.random_range(0.0..1.0f32);
            fill_rect(&mut product, ox, oy, ow, oh, tone);
        }
        let x0 = gap + col * (pw + gap);
        let y0 = gap + row * (ph + gap + shelf);
        let dx = rng.random_range(0..=2usize);
        let dy = rng.random_range(0..=2usize);
        for y in 0..ph {
            for x in 0..pw {
                let (tx, ty) = (x0 + x + dx, y0 + y + dy);
                if tx < width && ty < height {
                    img.set(tx, ty, product.get(x, y));
                }
            }
        }
    }

    // Shelf edges with price tags.
    for row in 0..rows {
        let y = gap + row * (ph + gap + shelf) + ph + gap / 2;
        let tone = rng.random_range(0.05..0.25f32);
        fill_rect(&mut img, 0, y as i64, width, shelf, tone);
        let tags = rng.random_range(1..=cols);
        for _ in 0..tags {
            let tx = rng.random_range(0..width.saturating_sub(20).max(1));
            fill_rect(&mut img, tx as i64, y as i64 + 2, 16, shelf - 4, 0.95);
        }
    }

    let contrast = rng.random_range(options.contrast.0..=options.contrast.1);
    let brightness = rng.random_range(-0.1..0.1f32);
    for v in img.data_mut() {
        *v = (contrast * (*v - 0.5) + 0.5 + brightness).clamp(0.0, 1.0);
    }
    let blur = rng.random_range(options.blur_sigma.0..=options.blur_sigma.1);
    let mut img = img.gaussian_blur(blur);
    let sigma = rng.random_range(options.noise_sigma.0..=options.noise_sigma.1);
    let noise = Normal::new(0.0f32, sigma.max(1e-6)).expect("finite sigma");
    for v in img.data_mut() {
        *v = (*v + noise.sample(rng)).clamp(0.0, 1.0);
    }
    img
}
