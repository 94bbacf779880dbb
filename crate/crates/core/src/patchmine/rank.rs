/// A detector's best response on one validation image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankedFiring {
    pub score: f32,
    /// Whether the image belongs to the detector's class.
    pub on_class: bool,
}

/// Purity plus `lambda` times discriminativeness over the `top` strongest
/// firings. Purity is the mean score of the class firings among them;
/// discriminativeness is the fraction of them on class images. A detector
/// with no class firings in its top list scores negative infinity.
pub fn rank_score(firings: &[RankedFiring], top: usize, lambda: f64) -> f64 {
    let mut sorted: Vec<RankedFiring> = firings.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    sorted.truncate(top);
    let hits: Vec<f64> = sorted
        .iter()
        .filter(|f| f.on_class)
        .map(|f| f64::from(f.score))
        .collect();
    if hits.is_empty() {
        return f64::NEG_INFINITY;
    }
    let purity = hits.iter().sum::<f64>() / hits.len() as f64;
    let discriminativeness = hits.len() as f64 / sorted.len() as f64;
    purity + lambda * discriminativeness
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(score: f32, on_class: bool) -> RankedFiring {
        RankedFiring { score, on_class }
    }

    #[test]
    fn worked_table() {
        let mut table: Vec<RankedFiring> = (0..5).map(|_| f(2.0, true)).collect();
        table.extend((0..5).map(|i| f(1.0 + 0.1 * i as f32, false)));
        let s = rank_score(&table, 10, 1.0);
        assert!((s - 2.5).abs() < 1e-12);
    }

    #[test]
    fn only_class_firings() {
        let table = [f(1.25, true), f(0.75, true)];
        assert!((rank_score(&table, 10, 1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn no_firings_or_only_negatives() {
        assert_eq!(rank_score(&[], 10, 1.0), f64::NEG_INFINITY);
        assert_eq!(rank_score(&[f(3.0, false)], 10, 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn only_top_firings_count() {
        // The weak class firing falls outside the top 2.
        let table = [f(1.0, true), f(2.0, false), f(3.0, true)];
        assert!((rank_score(&table, 2, 1.0) - 3.5).abs() < 1e-12);
    }
}
