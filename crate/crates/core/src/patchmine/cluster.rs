use super::PatchCandidate;
use crate::error::{Error, Result};
use crate::kmeans::{kmeans, MAX_ITERATIONS};

/// k-means over candidate descriptors. Returns member index lists in cluster
/// order; clusters with fewer than two members are dropped.
pub fn cluster_candidates(candidates: &[PatchCandidate], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    let Some(first) = candidates.first() else {
        return Err(Error::Empty("candidates"));
    };
    let dim = first.descriptor.len();
    if candidates.iter().any(|c| c.descriptor.len() != dim) {
        return Err(Error::param("candidates", "descriptors differ in length"));
    }
    let points: Vec<f32> = candidates.iter().flat_map(|c| c.descriptor.iter().copied()).collect();
    let km = kmeans(&points, dim, k, seed, MAX_ITERATIONS)?;
    let mut groups = vec![Vec::new(); k];
    for (i, &a) in km.assignments.iter().enumerate() {
        groups[a].push(i);
    }
    groups.retain(|g| g.len() >= 2);
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cand(descriptor: Vec<f32>) -> PatchCandidate {
        PatchCandidate {
            image: 0,
            level: 0,
            x: 0,
            y: 0,
            w: 1,
            h: 1,
            descriptor,
        }
    }

    fn groups() -> (Vec<PatchCandidate>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let centers = [[0.0f32, 0.0, 0.0], [10.0, 0.0, 0.0], [0.0, 10.0, 5.0]];
        let mut cands = Vec::new();
        let mut truth = Vec::new();
        for i in 0..30 {
            let c = centers[i % 3];
            cands.push(cand(c.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect()));
            truth.push(i % 3);
        }
        (cands, truth)
    }

    #[test]
    fn separated_groups_are_recovered() {
        let (cands, truth) = groups();
        let clusters = cluster_candidates(&cands, 3, 1).unwrap();
        assert_eq!(clusters.len(), 3);
        for members in &clusters {
            let label = truth[members[0]];
            assert!(members.iter().all(|&m| truth[m] == label));
            assert_eq!(members.len(), 10);
        }
        // Oracle: each member's nearest group center (by brute force over
        // member means) is its own cluster.
        let means: Vec<Vec<f32>> = clusters
            .iter()
            .map(|m| {
                (0..3)
                    .map(|d| m.iter().map(|&i| cands[i].descriptor[d]).sum::<f32>() / m.len() as f32)
                    .collect()
            })
            .collect();
        for (ci, members) in clusters.iter().enumerate() {
            for &i in members {
                let d2 = |c: &Vec<f32>| {
                    c.iter()
                        .zip(&cands[i].descriptor)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f32>()
                };
                let best = (0..3).min_by(|&a, &b| d2(&means[a]).total_cmp(&d2(&means[b]))).unwrap();
                assert_eq!(best, ci);
            }
        }
    }

    #[test]
    fn k_equal_to_n_drops_singletons() {
        let (cands, _) = groups();
        let clusters = cluster_candidates(&cands, cands.len(), 1).unwrap();
        assert!(clusters.iter().all(|c| c.len() >= 2));
    }

    #[test]
    fn deterministic_and_validated() {
        let (cands, _) = groups();
        assert_eq!(
            cluster_candidates(&cands, 5, 4).unwrap(),
            cluster_candidates(&cands, 5, 4).unwrap()
        );
        assert!(cluster_candidates(&cands, 0, 4).is_err());
    }
}
