//! Sequential minimal optimization for the soft-margin SVM dual with a
//! precomputed kernel matrix, using second-order working-set selection.

const TAU: f64 = 1e-12;

/// Dual solution: decision(x) = sum_i alpha_i y_i K(x_i, x) - rho.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    /// Final maximal KKT violation.
    pub violation: f64,
}

/// Solves `min 1/2 a'Qa - e'a` s.t. `0 <= a <= c`, `y'a = 0`, where
/// `Q_ij = y_i y_j K_ij` and `kernel` is the row-major `n x n` matrix K.
pub fn solve(kernel: &[f64], y: &[f64], c: f64, eps: f64, max_iterations: usize) -> DualSolution {
    let n = y.len();
    assert_eq!(kernel.len(), n * n);
    let k = |i: usize, j: usize| kernel[i * n + j];
    let mut alpha = vec![0.0f64; n];
    let mut grad = vec![-1.0f64; n];
    let up = |a: f64, yi: f64| if yi > 0.0 { a < c } else { a > 0.0 };
    let low = |a: f64, yi: f64| if yi > 0.0 { a > 0.0 } else { a < c };

    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    while iterations < max_iterations {
        // First index: maximal violating pair's "up" side.
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v >= gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best_obj = f64::INFINITY;
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let yg = y[t] * grad[t];
            gmax2 = gmax2.max(yg);
            if i == usize::MAX {
                continue;
            }
            let diff = gmax + yg;
            if diff > 0.0 {
                let mut quad = k(i, i) + k(t, t) - 2.0 * k(i, t);
                if quad <= 0.0 {
                    quad = TAU;
                }
                let obj = -diff * diff / quad;
                if obj <= best_obj {
                    best_obj = obj;
                    j = t;
                }
            }
        }
        violation = gmax + gmax2;
        if violation < eps || i == usize::MAX || j == usize::MAX {
            break;
        }
        iterations += 1;

        let (yi, yj) = (y[i], y[j]);
        let qij = yi * yj * k(i, j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if yi != yj {
            let mut quad = k(i, i) + k(j, j) + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = k(i, i) + k(j, j) - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (yi * k(i, t) * di + yj * k(j, t) * dj);
        }
    }

    // Offset from free variables, or the middle of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0f64);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 {
        sum_free / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else {
        0.0
    };
    DualSolution {
        alpha,
        rho,
        iterations,
        violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rbf_matrix(x: &[Vec<f64>], gamma: f64) -> Vec<f64> {
        let n = x.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b).powi(2)).sum();
                k[i * n + j] = (-gamma * d).exp();
            }
        }
        k
    }

    /// Primal objective at the dual's weight vector (with the best offset
    /// for it) minus the dual objective: an independent certificate of
    /// suboptimality.
    fn duality_gap(k: &[f64], y: &[f64], c: f64, sol: &DualSolution) -> (f64, f64) {
        let n = y.len();
        let mut quad = 0.0;
        let mut g = vec![0.0; n];
        for i in 0..n {
            g[i] = (0..n).map(|j| sol.alpha[j] * y[j] * k[j * n + i]).sum::<f64>();
            for j in 0..n {
                quad += sol.alpha[i] * sol.alpha[j] * y[i] * y[j] * k[i * n + j];
            }
        }
        let hinge = |b: f64| (0..n).map(|i| (1.0 - y[i] * (g[i] - b)).max(0.0)).sum::<f64>();
        // The hinge sum is piecewise linear in b with kinks at g_i - y_i.
        let best = (0..n)
            .map(|i| g[i] - y[i])
            .chain([sol.rho])
            .map(hinge)
            .fold(f64::INFINITY, f64::min);
        let dual = sol.alpha.iter().sum::<f64>() - 0.5 * quad;
        let primal = 0.5 * quad + c * best;
        (primal - dual, dual)
    }

    fn problem(n: usize, dim: usize, overlap: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = if i % 3 == 0 { 1.0 } else { -1.0 };
            x.push(
                (0..dim)
                    .map(|_| rng.random_range(-1.0..1.0) + label * (1.0 - overlap))
                    .collect(),
            );
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn objective_gap_is_small() {
        for (c, gamma, overlap, seed) in [(2048.0, 0.5, 0.8, 1), (1.0, 2.0, 0.5, 2), (10.0, 0.1, 0.9, 3)] {
            let (x, y) = problem(90, 5, overlap, seed);
            let k = rbf_matrix(&x, gamma);
            let sol = solve(&k, &y, c, 1e-7, 10_000_000);
            let (gap, dual) = duality_gap(&k, &y, c, &sol);
            assert!(gap >= -1e-9);
            assert!(gap <= 1e-4 * dual.abs().max(1.0), "gap {gap} dual {dual} c {c}");
            assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
            let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
            assert!(balance.abs() < 1e-6 * c);
        }
    }

    #[test]
    fn separable_data_classified() {
        let (x, y) = problem(60, 3, 0.0, 4);
        let k = rbf_matrix(&x, 0.5);
        let sol = solve(&k, &y, 100.0, 1e-5, 1_000_000);
        let n = y.len();
        for i in 0..n {
            let f: f64 = (0..n).map(|j| sol.alpha[j] * y[j] * k[j * n + i]).sum::<f64>() - sol.rho;
            assert!(f * y[i] > 0.0);
        }
    }
}
