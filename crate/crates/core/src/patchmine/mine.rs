use rand::seq::index::sample;
use rand::seq::SliceRandom;

use super::detect::PackedDetectors;
use super::{
    cluster_candidates, detect_pyramid, rank_score, sample_seeds, select_top, train_detector,
    DetectorBank, Firing, GridPyramid, LinearSvmParams, MiningParams, PatchDetector,
    RankedFiring, WindowMatrix,
};
use crate::dataset::Catalog;
use crate::error::{Error, Result};
use crate::imagecore::hog_pyramid;
use crate::seed::{derive_seed, rng_for};

const HALF_TAG: u64 = 0x4a1f;
const NEG_HALF_TAG: u64 = 0x4a20;
const NEG_TAG: u64 = 0x6e65;
const SEED_TAG: u64 = 0x5eed;
const CLUSTER_TAG: u64 = 0xc1;
// Detectors whose class firings coincide this much are duplicates.
const DUPLICATE_IOU: f32 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct RankedDetector {
    pub detector: PatchDetector,
    pub score: f64,
}

/// Random disjoint halves covering `0..n`, each sorted; the first half gets
/// the extra element when `n` is odd.
pub fn split_halves(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, HALF_TAG, n as u64));
    let mut b = order.split_off(n.div_ceil(2));
    order.sort_unstable();
    b.sort_unstable();
    (order, b)
}

/// Up to `per_class` random training images of every class other than
/// `class_id`, as (class, index) pairs.
pub fn negative_sample(counts: &[usize], class_id: usize, per_class: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (c, &n) in counts.iter().enumerate() {
        if c == class_id {
            continue;
        }
        let mut rng = rng_for(derive_seed(seed, NEG_TAG, class_id as u64), NEG_TAG, c as u64);
        let mut picks = sample(&mut rng, n, per_class.min(n)).into_vec();
        picks.sort_unstable();
        out.extend(picks.into_iter().map(|i| (c, i)));
    }
    out
}

struct Trained {
    detector: PatchDetector,
}

fn svm_params(params: &MiningParams) -> LinearSvmParams {
    LinearSvmParams {
        c: params.detector_c,
        bias_feature: params.detector_bias_feature,
        ..LinearSvmParams::default()
    }
}

fn train_clusters(
    class_id: usize,
    clusters: &[Vec<Vec<f32>>],
    negatives: &[&[f32]],
    params: &MiningParams,
) -> Vec<Trained> {
    let svm = svm_params(params);
    let window = (params.window, params.window);
    let results = crate::par::map(clusters.len(), true, |i| {
        let pos: Vec<&[f32]> = clusters[i].iter().map(Vec::as_slice).collect();
        train_detector(class_id, window, params.fire_threshold, &pos, negatives, &svm)
    });
    results
        .into_iter()
        .filter_map(|r| match r {
            Ok(detector) => Some(Trained { detector }),
            Err(e) => {
                log::debug!("class {class_id}: cluster discarded: {e}");
                None
            }
        })
        .collect()
}

/// Best firing of each detector on each image in `images`, as
/// `per_detector[d] = [(image, firing)]` in image order.
fn best_firings(
    matrices: &[&WindowMatrix],
    packed: &PackedDetectors,
    params: &MiningParams,
) -> Vec<Vec<Firing>> {
    let mut out = vec![Vec::new(); packed.len()];
    for (i, m) in matrices.iter().enumerate() {
        let per_det = detect_pyramid(m, i, packed, params.nms_overlap, params.firings_per_image, true);
        for (d, firings) in per_det.into_iter().enumerate() {
            if let Some(best) = firings.into_iter().next() {
                out[d].push(best);
            }
        }
    }
    out
}

/// Runs the cluster / train / cross-validate loop for one class and returns
/// its surviving detectors, best first.
///
/// `positives` are the class's training pyramids, `negatives` those of the
/// sampled other-class images.
pub fn mine_class(
    class_id: usize,
    positives: &[GridPyramid],
    negatives: &[GridPyramid],
    params: &MiningParams,
) -> Result<Vec<RankedDetector>> {
    if positives.len() < 4 {
        return Err(Error::param(
            "class images",
            format!("class {class_id} has {} training images, need at least 4", positives.len()),
        ));
    }
    if negatives.len() < 2 {
        return Err(Error::param("negatives", "need at least 2 negative images"));
    }
    let class_seed = derive_seed(params.seed, class_id as u64, 0);
    let (mut train, mut val) = split_halves(positives.len(), class_seed);
    let (mut neg_train, mut neg_val) = split_halves(negatives.len(), derive_seed(class_seed, NEG_HALF_TAG, 0));

    let pos_m: Vec<WindowMatrix> = positives
        .iter()
        .map(|p| WindowMatrix::from_pyramid(p, params.window))
        .collect();
    let neg_m: Vec<WindowMatrix> = negatives
        .iter()
        .map(|p| WindowMatrix::from_pyramid(p, params.window))
        .collect();
    let neg_m = &neg_m;
    let neg_rows = |half: &[usize]| -> Vec<&[f32]> {
        half.iter()
            .flat_map(|&i| (0..neg_m[i].rows()).map(move |r| neg_m[i].row(r)))
            .collect()
    };

    let seed_images: Vec<GridPyramid> = train.iter().map(|&i| positives[i].clone()).collect();
    let seeds = sample_seeds(
        &seed_images,
        params.seeds_per_image,
        params.window,
        params.min_seed_energy,
        derive_seed(class_seed, SEED_TAG, 0),
    )?;
    if seeds.len() < 2 {
        log::warn!("class {class_id}: too few textured seed windows");
        return Ok(Vec::new());
    }
    let k = (seeds.len() / 4).max(4).min(seeds.len());
    let mut clusters: Vec<Vec<Vec<f32>>> = cluster_candidates(&seeds, k, derive_seed(class_seed, CLUSTER_TAG, 0))?
        .into_iter()
        .map(|members| members.into_iter().map(|i| seeds[i].descriptor.clone()).collect())
        .collect();
    log::debug!("class {class_id}: {} seeds, {} initial clusters", seeds.len(), clusters.len());

    for round in 0..params.rounds {
        let negs = neg_rows(&neg_train);
        let trained = train_clusters(class_id, &clusters, &negs, params);
        let packed = PackedDetectors::new(trained.iter().map(|t| &t.detector))?;
        let val_m: Vec<&WindowMatrix> = val.iter().map(|&i| &pos_m[i]).collect();
        let best = best_firings(&val_m, &packed, params);
        clusters = best
            .into_iter()
            .filter_map(|mut firings| {
                if firings.len() < params.min_cluster_images {
                    return None;
                }
                firings.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.image.cmp(&b.image)));
                firings.truncate(params.cluster_size);
                Some(
                    firings
                        .iter()
                        .map(|f| val_m[f.image].row(f.row).to_vec())
                        .collect(),
                )
            })
            .collect();
        log::debug!("class {class_id}: round {round}: {} clusters survive", clusters.len());
        std::mem::swap(&mut train, &mut val);
        std::mem::swap(&mut neg_train, &mut neg_val);
    }

    // Final detectors are trained on the current half and ranked on the other.
    let negs = neg_rows(&neg_train);
    let trained = train_clusters(class_id, &clusters, &negs, params);
    let packed = PackedDetectors::new(trained.iter().map(|t| &t.detector))?;
    let val_m: Vec<&WindowMatrix> = val.iter().map(|&i| &pos_m[i]).collect();
    let neg_val_m: Vec<&WindowMatrix> = neg_val.iter().map(|&i| &neg_m[i]).collect();
    let class_best = best_firings(&val_m, &packed, params);
    let neg_best = best_firings(&neg_val_m, &packed, params);

    let mut ranked: Vec<(RankedDetector, Vec<Firing>)> = Vec::new();
    for ((t, class_f), neg_f) in trained.into_iter().zip(class_best).zip(neg_best) {
        if class_f.len() < params.min_cluster_images {
            continue;
        }
        let table: Vec<RankedFiring> = class_f
            .iter()
            .map(|f| RankedFiring {
                score: f.score,
                on_class: true,
            })
            .chain(neg_f.iter().map(|f| RankedFiring {
                score: f.score,
                on_class: false,
            }))
            .collect();
        let score = rank_score(&table, params.rank_top, params.rank_lambda);
        if score == f64::NEG_INFINITY {
            continue;
        }
        ranked.push((
            RankedDetector {
                detector: t.detector,
                score,
            },
            class_f,
        ));
    }
    // Stable: equal scores keep cluster order.
    ranked.sort_by(|a, b| b.0.score.total_cmp(&a.0.score));

    let mut kept: Vec<(RankedDetector, Vec<Firing>)> = Vec::new();
    for (det, firings) in ranked {
        if !kept.iter().any(|(_, k)| duplicates(&firings, k)) {
            kept.push((det, firings));
        }
    }
    log::debug!("class {class_id}: {} detectors after ranking", kept.len());
    Ok(kept.into_iter().map(|(d, _)| d).collect())
}

/// Whether at least half of `a`'s class firings coincide with one of `b`'s.
fn duplicates(a: &[Firing], b: &[Firing]) -> bool {
    let shared = a
        .iter()
        .filter(|fa| {
            b.iter()
                .any(|fb| fb.image == fa.image && fb.rect.iou(&fa.rect) > DUPLICATE_IOU)
        })
        .count();
    2 * shared >= a.len()
}

/// HOG pyramids of every training image, per class.
pub(crate) fn train_pyramids(catalog: &Catalog, params: &MiningParams) -> Result<Vec<Vec<GridPyramid>>> {
    let jobs: Vec<(usize, usize)> = (0..catalog.num_classes())
        .flat_map(|c| (0..catalog.train_images(c).len()).map(move |i| (c, i)))
        .collect();
    let pyramids = crate::par::map(jobs.len(), true, |j| -> Result<GridPyramid> {
        let (c, i) = jobs[j];
        let img = catalog.train_image(c, i)?;
        Ok(hog_pyramid(&img, params.pyramid_levels, params.pyramid_factor))
    });
    let mut out: Vec<Vec<GridPyramid>> = vec![Vec::new(); catalog.num_classes()];
    for ((c, _), p) in jobs.into_iter().zip(pyramids) {
        out[c].push(p?);
    }
    Ok(out)
}

/// Mines every class of the catalog and keeps the top `params.top_k`
/// detectors of each.
pub fn mine_bank(catalog: &Catalog, params: &MiningParams) -> Result<DetectorBank> {
    if params.window == 0 || params.top_k == 0 {
        return Err(Error::param("window", "window and top_k must be positive"));
    }
    let pyramids = train_pyramids(catalog, params)?;
    let counts: Vec<usize> = pyramids.iter().map(Vec::len).collect();
    let slots = crate::par::map(catalog.num_classes(), true, |c| {
        let negatives: Vec<GridPyramid> = negative_sample(&counts, c, params.negatives_per_class, params.seed)
            .into_iter()
            .map(|(nc, i)| pyramids[nc][i].clone())
            .collect();
        let ranked = mine_class(c, &pyramids[c], &negatives, params)?;
        log::info!("class {}: {} detectors", catalog.classes()[c], ranked.len());
        Ok(select_top(ranked, params.top_k))
    });
    DetectorBank::new(slots.into_iter().collect::<Result<_>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn halves_are_disjoint_and_cover(n in 0usize..200, seed in any::<u64>()) {
            let (a, b) = split_halves(n, seed);
            prop_assert_eq!(a.len(), n.div_ceil(2));
            let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn negatives_skip_own_class() {
        let neg = negative_sample(&[20, 3, 20], 0, 5, 1);
        assert_eq!(neg.len(), 3 + 5);
        assert!(neg.iter().all(|&(c, _)| c != 0));
        assert_eq!(neg, negative_sample(&[20, 3, 20], 0, 5, 1));
    }

    #[test]
    fn too_few_class_images() {
        let p = vec![GridPyramid::new(); 3];
        assert!(mine_class(0, &p, &p, &MiningParams::default()).is_err());
    }
}
