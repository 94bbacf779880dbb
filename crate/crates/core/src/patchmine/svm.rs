//! Hinge-loss linear SVM trained by dual coordinate descent with shrinking.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PatchDetector;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSvmParams {
    pub c: f64,
    /// Multiplies `c` for positive examples.
    pub positive_weight: f64,
    /// Stopping tolerance on the projected-gradient spread.
    pub eps: f64,
    pub max_epochs: usize,
    /// Value of the constant feature that carries the bias.
    pub bias_feature: f64,
}

impl Default for LinearSvmParams {
    fn default() -> Self {
        Self {
            c: 0.1,
            positive_weight: 1.0,
            eps: 0.01,
            max_epochs: 500,
            bias_feature: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSvm {
    pub weights: Vec<f32>,
    pub bias: f32,
    pub epochs: usize,
}

impl LinearSvm {
    pub fn decision(&self, x: &[f32]) -> f32 {
        crate::linalg::dot(&self.weights, x) + self.bias
    }
}

pub fn train_linear_svm(
    positives: &[&[f32]],
    negatives: &[&[f32]],
    params: &LinearSvmParams,
) -> Result<LinearSvm> {
    let dim = positives
        .first()
        .or(negatives.first())
        .map(|x| x.len())
        .ok_or(Error::Empty("training set"))?;
    if positives.iter().chain(negatives).any(|x| x.len() != dim) {
        return Err(Error::param("descriptors", "all descriptors must share a length"));
    }
    let xs: Vec<&[f32]> = positives.iter().chain(negatives).copied().collect();
    let ys: Vec<f64> = std::iter::repeat_n(1.0, positives.len())
        .chain(std::iter::repeat_n(-1.0, negatives.len()))
        .collect();
    let upper: Vec<f64> = ys
        .iter()
        .map(|&y| if y > 0.0 { params.c * params.positive_weight } else { params.c })
        .collect();
    let b = params.bias_feature;
    let qd: Vec<f64> = xs
        .iter()
        .map(|x| x.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>() + b * b)
        .collect();

    let l = xs.len();
    let mut w = vec![0.0f64; dim];
    let mut wb = 0.0f64;
    let mut alpha = vec![0.0f64; l];
    let mut index: Vec<usize> = (0..l).collect();
    let mut active = l;
    let mut pg_max_old = f64::INFINITY;
    let mut pg_min_old = f64::NEG_INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut epochs = 0;

    while epochs < params.max_epochs {
        epochs += 1;
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        index[..active].shuffle(&mut rng);
        let mut s = 0;
        while s < active {
            let i = index[s];
            let x = xs[i];
            let y = ys[i];
            let margin: f64 = x
                .iter()
                .zip(&w)
                .map(|(&v, wi)| f64::from(v) * wi)
                .sum::<f64>()
                + wb * b;
            let g = y * margin - 1.0;
            let mut pg = 0.0;
            if alpha[i] == 0.0 {
                if g > pg_max_old {
                    active -= 1;
                    index.swap(s, active);
                    continue;
                } else if g < 0.0 {
                    pg = g;
                }
            } else if alpha[i] == upper[i] {
                if g < pg_min_old {
                    active -= 1;
                    index.swap(s, active);
                    continue;
                } else if g > 0.0 {
                    pg = g;
                }
            } else {
                pg = g;
            }
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).clamp(0.0, upper[i]);
                let d = (alpha[i] - old) * y;
                for (wi, &v) in w.iter_mut().zip(x) {
                    *wi += d * f64::from(v);
                }
                wb += d * b;
            }
            s += 1;
        }
        if pg_max - pg_min <= params.eps {
            if active == l {
                break;
            }
            active = l;
            pg_max_old = f64::INFINITY;
            pg_min_old = f64::NEG_INFINITY;
            continue;
        }
        pg_max_old = if pg_max <= 0.0 { f64::INFINITY } else { pg_max };
        pg_min_old = if pg_min >= 0.0 { f64::NEG_INFINITY } else { pg_min };
    }

    Ok(LinearSvm {
        weights: w.iter().map(|&v| v as f32).collect(),
        bias: (wb * b) as f32,
        epochs,
    })
}

/// Linear detector separating one patch cluster from negative windows.
/// Fails when the positives cannot be told apart from the negatives.
pub fn train_detector(
    class_id: usize,
    window: (usize, usize),
    fire_threshold: f32,
    positives: &[&[f32]],
    negatives: &[&[f32]],
    params: &LinearSvmParams,
) -> Result<PatchDetector> {
    if positives.len() < 2 || negatives.len() < 2 {
        return Err(Error::Degenerate(format!(
            "need at least 2 positives and 2 negatives, got {} and {}",
            positives.len(),
            negatives.len()
        )));
    }
    if positives.iter().all(|p| negatives.iter().any(|n| n == p)) {
        return Err(Error::Degenerate("positives duplicate the negatives".into()));
    }
    let svm = train_linear_svm(positives, negatives, params)?;
    let mean = |set: &[&[f32]]| {
        set.iter().map(|x| f64::from(svm.decision(x))).sum::<f64>() / set.len() as f64
    };
    if mean(positives) <= mean(negatives) {
        return Err(Error::Degenerate("positives do not outscore negatives".into()));
    }
    Ok(PatchDetector {
        weights: svm.weights,
        bias: svm.bias,
        class_id,
        window,
        fire_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn refs(v: &[Vec<f32>]) -> Vec<&[f32]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn separable_toy_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pos: Vec<Vec<f32>> = (0..10)
            .map(|_| vec![2.0 + rng.random::<f32>(), 1.0 + rng.random::<f32>()])
            .collect();
        let neg: Vec<Vec<f32>> = (0..30)
            .map(|_| vec![-1.0 - rng.random::<f32>(), rng.random::<f32>() - 2.0])
            .collect();
        let params = LinearSvmParams {
            c: 10.0,
            ..Default::default()
        };
        let svm = train_linear_svm(&refs(&pos), &refs(&neg), &params).unwrap();
        let min_pos = pos.iter().map(|x| svm.decision(x)).fold(f32::INFINITY, f32::min);
        let max_neg = neg
            .iter()
            .map(|x| svm.decision(x))
            .fold(f32::NEG_INFINITY, f32::max);
        assert!(min_pos > 0.0 && max_neg < 0.0);
        assert!(min_pos - max_neg > 0.0);
    }

    #[test]
    fn dual_solution_satisfies_kkt() {
        // Oracle: at the optimum, points strictly outside the margin have
        // zero dual weight, so their functional margin must exceed 1 - tol,
        // and no point can have margin below 1 unless its alpha is at C.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pos: Vec<Vec<f32>> = (0..20)
            .map(|_| (0..4).map(|_| rng.random_range(0.0..1.0f32) + 0.3).collect())
            .collect();
        let neg: Vec<Vec<f32>> = (0..40)
            .map(|_| (0..4).map(|_| rng.random_range(0.0..1.0f32) - 0.3).collect())
            .collect();
        let params = LinearSvmParams {
            c: 1.0,
            eps: 1e-6,
            max_epochs: 100_000,
            ..Default::default()
        };
        let svm = train_linear_svm(&refs(&pos), &refs(&neg), &params).unwrap();
        // Primal objective should not improve under small perturbations of w.
        let objective = |w: &[f32], b: f32| {
            let reg: f64 = w.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>()
                + f64::from(b).powi(2);
            let hinge: f64 = pos
                .iter()
                .map(|x| (1.0, x))
                .chain(neg.iter().map(|x| (-1.0, x)))
                .map(|(y, x)| {
                    let f = crate::linalg::dot(w, x) + b;
                    (1.0 - y * f64::from(f)).max(0.0)
                })
                .sum();
            0.5 * reg + params.c * hinge
        };
        let base = objective(&svm.weights, svm.bias);
        for d in 0..5 {
            for delta in [-1e-3f32, 1e-3] {
                let mut w = svm.weights.clone();
                let mut b = svm.bias;
                if d < 4 {
                    w[d] += delta;
                } else {
                    b += delta;
                }
                assert!(objective(&w, b) >= base - 1e-4, "dim {d} delta {delta}");
            }
        }
    }

    #[test]
    fn identical_sets_are_degenerate() {
        let set = vec![vec![1.0f32, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]];
        let r = train_detector(0, (1, 1), -1.5, &refs(&set), &refs(&set), &Default::default());
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn too_few_examples() {
        let set = vec![vec![1.0f32, 0.0]];
        let neg = vec![vec![0.0f32, 1.0], vec![0.0, 2.0]];
        assert!(train_detector(0, (1, 1), -1.5, &refs(&set), &refs(&neg), &Default::default()).is_err());
    }
}
