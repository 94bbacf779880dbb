use super::{compute_hog_at_scale, GrayImage, HogGrid, CELL_SIZE};

pub const DEFAULT_PYRAMID_LEVELS: usize = 7;
/// One half-octave per level.
pub const DEFAULT_PYRAMID_FACTOR: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Level `i` has dimensions `round(dim * factor^i)`; levels smaller than one
/// HOG cell are dropped.
pub fn build_pyramid(image: &GrayImage, levels: usize, factor: f64) -> Vec<GrayImage> {
    assert!(levels >= 1, "pyramid needs at least one level");
    assert!(factor > 0.0 && factor < 1.0, "pyramid factor must be in (0, 1)");
    let mut out = vec![image.clone()];
    for i in 1..levels {
        let s = factor.powi(i as i32);
        let w = (image.width() as f64 * s).round() as usize;
        let h = (image.height() as f64 * s).round() as usize;
        if w < CELL_SIZE || h < CELL_SIZE {
            break;
        }
        out.push(image.resize(w, h));
    }
    out
}

/// HOG grid of every pyramid level, each tagged with its scale.
pub fn hog_pyramid(image: &GrayImage, levels: usize, factor: f64) -> Vec<HogGrid> {
    build_pyramid(image, levels, factor)
        .iter()
        .map(|lvl| {
            let scale = lvl.height() as f32 / image.height() as f32;
            compute_hog_at_scale(lvl, scale).expect("levels are at least one cell")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_half_octaves_from_1080() {
        let img = GrayImage::filled(720, 1080, 0.5);
        let p = build_pyramid(&img, 7, DEFAULT_PYRAMID_FACTOR);
        assert_eq!(p.len(), 7);
        assert_eq!(p[6].height(), 135);
        assert_eq!(p[0], img);
    }

    #[test]
    fn single_level_is_input() {
        let img = GrayImage::filled(20, 30, 0.1);
        let p = build_pyramid(&img, 1, 0.5);
        assert_eq!(p, vec![img]);
    }

    #[test]
    fn small_levels_are_dropped() {
        let p = build_pyramid(&GrayImage::filled(16, 16, 0.0), 7, DEFAULT_PYRAMID_FACTOR);
        assert!(p.len() < 7);
        assert!(p.iter().all(|l| l.width() >= 8 && l.height() >= 8));
    }

    #[test]
    fn dimensions_strictly_decrease() {
        let p = build_pyramid(&GrayImage::filled(300, 200, 0.0), 7, DEFAULT_PYRAMID_FACTOR);
        for pair in p.windows(2) {
            assert!(pair[1].width() < pair[0].width());
            assert!(pair[1].height() < pair[0].height());
        }
    }

    #[test]
    fn hog_levels_carry_scale() {
        let grids = hog_pyramid(&GrayImage::filled(128, 128, 0.0), 3, 0.5);
        assert_eq!(grids.len(), 3);
        assert_eq!(grids[0].scale(), 1.0);
        assert_eq!(grids[2].scale(), 0.25);
    }
}
