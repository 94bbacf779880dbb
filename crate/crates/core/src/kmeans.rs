//! Seeded k-means++ / Lloyd iterations over flat row-major f32 points.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{matmul_abt, squared_norm};
use crate::seed::rng_for;

pub const MAX_ITERATIONS: usize = 100;
const KMEANS_TAG: u64 = 0x6b6d;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KMeans {
    pub dim: usize,
    /// `k x dim`, row-major.
    pub centroids: Vec<f32>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

impl KMeans {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim.max(1)
    }

    pub fn centroid(&self, i: usize) -> &[f32] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    /// Index of the nearest centroid for each point (ties to the lowest).
    pub fn assign(&self, points: &[f32]) -> Vec<usize> {
        nearest(points, self.dim, &self.centroids)
    }
}

pub fn kmeans(points: &[f32], dim: usize, k: usize, seed: u64, max_iterations: usize) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::param("points", "length must be a multiple of dim"));
    }
    let n = points.len() / dim;
    if k > n {
        return Err(Error::param("k", format!("{k} clusters for {n} points")));
    }
    let mut rng = rng_for(seed, KMEANS_TAG, 0);
    let row = |i: usize| &points[i * dim..(i + 1) * dim];

    // k-means++ seeding.
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(row(first));
    let mut best_d2: Vec<f64> = (0..n).map(|i| dist2(row(i), row(first))).collect();
    for _ in 1..k {
        let total: f64 = best_d2.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in best_d2.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        };
        centroids.extend_from_slice(row(pick));
        for (i, d) in best_d2.iter_mut().enumerate() {
            *d = d.min(dist2(row(i), row(pick)));
        }
    }

    let mut assignments = vec![usize::MAX; n];
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        let next = nearest(points, dim, &centroids);
        let changed = next != assignments;
        assignments = next;
        if !changed {
            break;
        }
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            for (s, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row(i)) {
                *s += f64::from(v);
            }
        }
        for c in 0..k {
            // Empty clusters keep their previous centroid.
            if counts[c] > 0 {
                for (dst, s) in centroids[c * dim..(c + 1) * dim]
                    .iter_mut()
                    .zip(&sums[c * dim..(c + 1) * dim])
                {
                    *dst = (s / counts[c] as f64) as f32;
                }
            }
        }
    }
    Ok(KMeans {
        dim,
        centroids,
        assignments,
        iterations,
    })
}

fn dist2(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = f64::from(*x) - f64::from(*y);
            d * d
        })
        .sum()
}

/// Nearest centroid per point via `|x|^2 - 2 x.c + |c|^2`.
fn nearest(points: &[f32], dim: usize, centroids: &[f32]) -> Vec<usize> {
    let n = points.len() / dim;
    let k = centroids.len() / dim;
    let c_norms: Vec<f32> = centroids.chunks_exact(dim).map(squared_norm).collect();
    let mut out = Vec::with_capacity(n);
    // Bounded scratch: process points in blocks.
    const BLOCK: usize = 512;
    let mut scratch = vec![0.0f32; BLOCK * k];
    for start in (0..n).step_by(BLOCK) {
        let m = BLOCK.min(n - start);
        let block = &points[start * dim..(start + m) * dim];
        let prod = &mut scratch[..m * k];
        matmul_abt(block, centroids, m, dim, k, prod);
        for i in 0..m {
            let mut best = 0;
            let mut best_d = f32::INFINITY;
            for c in 0..k {
                let d = c_norms[c] - 2.0 * prod[i * k + c];
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            out.push(best);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn blobs(seed: u64) -> (Vec<f32>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [[0.0f32, 0.0, 0.0], [10.0, 0.0, 5.0], [0.0, 12.0, -6.0]];
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (g, c) in centers.iter().enumerate() {
            for _ in 0..30 {
                for d in c {
                    pts.push(d + rng.random_range(-1.0..1.0f32));
                }
                truth.push(g);
            }
        }
        (pts, truth)
    }

    #[test]
    fn recovers_separated_groups() {
        let (pts, truth) = blobs(1);
        let km = kmeans(&pts, 3, 3, 9, MAX_ITERATIONS).unwrap();
        // Oracle: every point is closer to its own group's centroid than to
        // any other centroid, and the partition matches the generator's.
        for i in 0..truth.len() {
            for j in 0..truth.len() {
                assert_eq!(
                    truth[i] == truth[j],
                    km.assignments[i] == km.assignments[j]
                );
            }
            let p = &pts[i * 3..i * 3 + 3];
            let own = dist2(p, km.centroid(km.assignments[i]));
            for c in 0..3 {
                assert!(own <= dist2(p, km.centroid(c)));
            }
        }
    }

    #[test]
    fn deterministic() {
        let (pts, _) = blobs(2);
        assert_eq!(
            kmeans(&pts, 3, 5, 4, MAX_ITERATIONS).unwrap(),
            kmeans(&pts, 3, 5, 4, MAX_ITERATIONS).unwrap()
        );
    }

    #[test]
    fn rejects_bad_k() {
        let (pts, _) = blobs(3);
        assert!(kmeans(&pts, 3, 0, 0, 10).is_err());
        assert!(kmeans(&pts, 3, 91, 0, 10).is_err());
    }
}
