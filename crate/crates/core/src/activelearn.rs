//! Uncertainty sampling: pick the test-domain images the classifier is least
//! sure about, have them labeled, retrain, and measure learning curves.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classify::{argmax, evaluate, train_ovr, SvmModel, SvmParams};
use crate::dataset::{split_indices, SplitSpec};
use crate::error::{Error, Result};
use crate::seed::rng_for;

const RANDOM_PICK_TAG: u64 = 0xa1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceMode {
    /// `|d|` of the winning class's decision value.
    #[default]
    Absolute,
    /// Winning decision value minus the runner-up.
    Margin,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    #[default]
    Uncertainty,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "class")]
pub enum LabelStatus {
    Pending,
    Labeled(usize),
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelQuery {
    pub image: String,
    pub predicted: usize,
    pub confidence: f64,
    pub status: LabelStatus,
}

pub fn confidence(decision_values: &[f64], mode: ConfidenceMode) -> f64 {
    let (best, top) = argmax(decision_values);
    match mode {
        ConfidenceMode::Absolute => top.abs(),
        ConfidenceMode::Margin => {
            let second = decision_values
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != best)
                .map(|(_, &v)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            if second.is_finite() {
                top - second
            } else {
                top.abs()
            }
        }
    }
}

/// Unlabeled image: its reference and its feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolItem {
    pub image: String,
    pub feature: Vec<f32>,
}

/// The `k` least confident pool items, ascending by confidence; ties by
/// image reference.
pub fn select_uncertain(model: &SvmModel, pool: &[PoolItem], k: usize, mode: ConfidenceMode) -> Result<Vec<LabelQuery>> {
    if pool.is_empty() {
        return Err(Error::Empty("selection pool"));
    }
    if k > pool.len() {
        return Err(Error::param("k", format!("{k} exceeds the pool of {}", pool.len())));
    }
    let mut scored = pool
        .iter()
        .map(|item| {
            let values = model.decision_values(&item.feature)?;
            Ok(LabelQuery {
                image: item.image.clone(),
                predicted: argmax(&values).0,
                confidence: confidence(&values, mode),
                status: LabelStatus::Pending,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| a.confidence.total_cmp(&b.confidence).then_with(|| a.image.cmp(&b.image)));
    scored.truncate(k);
    Ok(scored)
}

/// Hyperparameters a model was trained with.
pub fn params_of(model: &SvmModel) -> SvmParams {
    SvmParams {
        c: model.c,
        kernel: model.kernel,
        rbf_width: model.rbf_width,
        ..SvmParams::default()
    }
}

/// Retrains from scratch on the base set plus the new labels, with the
/// original model's hyperparameters.
pub fn retrain(
    model: &SvmModel,
    base: (&[Vec<f32>], &[usize]),
    added: (&[Vec<f32>], &[usize]),
) -> Result<SvmModel> {
    let l = model.num_classes();
    if let Some(&bad) = added.1.iter().chain(base.1).find(|&&y| y >= l) {
        return Err(Error::LabelOutOfRange { label: bad, classes: l });
    }
    let features: Vec<&[f32]> = base.0.iter().chain(added.0).map(Vec::as_slice).collect();
    let labels: Vec<usize> = base.1.iter().chain(added.1).copied().collect();
    train_ovr(&features, &labels, &model.classes, model.mode, &params_of(model))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub labeled: usize,
    pub mean: f64,
    pub std: f64,
    pub runs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub spec: SplitSpec,
    pub selection: SelectionMode,
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["count", "mean", "std"])?;
        for p in &self.points {
            w.write_record([p.labeled.to_string(), p.mean.to_string(), p.std.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("csv", e))?;
        Ok(())
    }
}

/// Base training set, test-domain pool with hidden labels, and the starting
/// model.
pub struct ProtocolData<'a> {
    pub base_features: &'a [Vec<f32>],
    pub base_labels: &'a [usize],
    /// Indexed like the catalog's test images.
    pub pool: &'a [PoolItem],
    pub pool_labels: &'a [usize],
    pub model: &'a SvmModel,
}

/// What one run saw; kept so callers can audit the protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub learning: Vec<usize>,
    pub testing: Vec<usize>,
    /// Pool indices in the order they were labeled.
    pub labeled: Vec<usize>,
    pub accuracies: Vec<f64>,
}

pub fn run_protocol(
    data: &ProtocolData<'_>,
    spec: &SplitSpec,
    selection: SelectionMode,
    confidence_mode: ConfidenceMode,
) -> Result<LearningCurve> {
    run_protocol_traced(data, spec, selection, confidence_mode).map(|(c, _)| c)
}

/// As [`run_protocol`], also returning each run's split and labeling order.
pub fn run_protocol_traced(
    data: &ProtocolData<'_>,
    spec: &SplitSpec,
    selection: SelectionMode,
    confidence_mode: ConfidenceMode,
) -> Result<(LearningCurve, Vec<RunTrace>)> {
    if data.pool.len() != data.pool_labels.len() {
        return Err(Error::LengthMismatch {
            expected: data.pool.len(),
            got: data.pool_labels.len(),
        });
    }
    spec.validate(data.pool.len())?;
    let traces = crate::par::map(spec.runs, true, |run| one_run(data, spec, run, selection, confidence_mode));
    let traces = traces.into_iter().collect::<Result<Vec<_>>>()?;
    let counts: Vec<usize> = (0..=spec.learning_size).step_by(spec.step).collect();
    let points = counts
        .iter()
        .enumerate()
        .map(|(i, &labeled)| {
            let runs: Vec<f64> = traces.iter().map(|t| t.accuracies[i]).collect();
            let mean = runs.iter().sum::<f64>() / runs.len() as f64;
            let var = runs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / runs.len() as f64;
            CurvePoint {
                labeled,
                mean,
                std: var.sqrt(),
                runs,
            }
        })
        .collect();
    Ok((
        LearningCurve {
            spec: *spec,
            selection,
            points,
        },
        traces,
    ))
}

fn one_run(
    data: &ProtocolData<'_>,
    spec: &SplitSpec,
    run: usize,
    selection: SelectionMode,
    confidence_mode: ConfidenceMode,
) -> Result<RunTrace> {
    let (learning, testing) = split_indices(data.pool.len(), spec, run)?;
    let test_truth: Vec<usize> = testing.iter().map(|&i| data.pool_labels[i]).collect();
    let accuracy = |model: &SvmModel| -> Result<f64> {
        let predicted = testing
            .iter()
            .map(|&i| model.predict(&data.pool[i].feature).map(|p| p.0))
            .collect::<Result<Vec<_>>>()?;
        Ok(evaluate(&predicted, &test_truth, &model.classes)?.accuracy)
    };
    let mut model = data.model.clone();
    let mut remaining = learning.clone();
    let mut labeled: Vec<usize> = Vec::new();
    let mut accuracies = vec![accuracy(&model)?];
    let mut rng = rng_for(spec.seed, RANDOM_PICK_TAG, run as u64);
    let mut budget = 0;
    while budget + spec.step <= spec.learning_size {
        budget += spec.step;
        let take = spec.step.min(remaining.len());
        let picked: Vec<usize> = match selection {
            SelectionMode::Uncertainty => {
                let pool: Vec<PoolItem> = remaining.iter().map(|&i| data.pool[i].clone()).collect();
                let queries = select_uncertain(&model, &pool, take, confidence_mode)?;
                let by_ref: std::collections::HashMap<&str, usize> =
                    remaining.iter().map(|&i| (data.pool[i].image.as_str(), i)).collect();
                queries.iter().map(|q| by_ref[q.image.as_str()]).collect()
            }
            SelectionMode::Random => {
                remaining.shuffle(&mut rng);
                remaining[..take].to_vec()
            }
        };
        remaining.retain(|i| !picked.contains(i));
        labeled.extend(&picked);
        let features: Vec<Vec<f32>> = labeled.iter().map(|&i| data.pool[i].feature.clone()).collect();
        let labels: Vec<usize> = labeled.iter().map(|&i| data.pool_labels[i]).collect();
        model = retrain(data.model, (data.base_features, data.base_labels), (&features, &labels))?;
        accuracies.push(accuracy(&model)?);
    }
    Ok(RunTrace {
        learning,
        testing,
        labeled,
        accuracies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncodingMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(n: usize, shift: f32, seed: u64) -> (Vec<Vec<f32>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 3;
            let mut f: Vec<f32> = (0..3).map(|_| rng.random_range(-0.6..0.6)).collect();
            f[c] += 2.0;
            f[(c + 1) % 3] += shift;
            x.push(f);
            y.push(c);
        }
        (x, y)
    }

    fn model_on(x: &[Vec<f32>], y: &[usize]) -> SvmModel {
        let refs: Vec<&[f32]> = x.iter().map(Vec::as_slice).collect();
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        train_ovr(&refs, y, &names, EncodingMode::Whole, &SvmParams::default()).unwrap()
    }

    #[test]
    fn confidence_modes() {
        assert_eq!(confidence(&[-0.2, -0.9, -1.4], ConfidenceMode::Absolute), 0.2);
        assert!((confidence(&[0.5, 0.3, -1.0], ConfidenceMode::Margin) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn selection_order_and_errors() {
        let (x, y) = blobs(30, 0.0, 1);
        let model = model_on(&x, &y);
        let pool: Vec<PoolItem> = x
            .iter()
            .enumerate()
            .map(|(i, f)| PoolItem {
                image: format!("img{i:02}"),
                feature: f.clone(),
            })
            .collect();
        let all = select_uncertain(&model, &pool, pool.len(), ConfidenceMode::Absolute).unwrap();
        assert_eq!(all.len(), pool.len());
        assert!(all.windows(2).all(|w| w[0].confidence <= w[1].confidence));
        let one = select_uncertain(&model, &pool, 1, ConfidenceMode::Absolute).unwrap();
        assert_eq!(one[0], all[0]);
        assert_eq!(select_uncertain(&model, &pool, 3, ConfidenceMode::Absolute).unwrap(), all[..3].to_vec());
        assert!(select_uncertain(&model, &[], 0, ConfidenceMode::Absolute).is_err());
        assert!(select_uncertain(&model, &pool, 31, ConfidenceMode::Absolute).is_err());
    }

    #[test]
    fn retrain_without_new_labels_is_a_no_op() {
        let (x, y) = blobs(30, 0.0, 2);
        let model = model_on(&x, &y);
        let again = retrain(&model, (&x, &y), (&[], &[])).unwrap();
        let (probe, _) = blobs(10, 0.3, 9);
        for f in &probe {
            let a = model.decision_values(f).unwrap();
            let b = again.decision_values(f).unwrap();
            assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-6));
        }
        assert!(retrain(&model, (&x, &y), (&[vec![0.0; 3]], &[3])).is_err());
    }

    #[test]
    fn protocol_accounting() {
        let (x, y) = blobs(30, 0.0, 3);
        let model = model_on(&x, &y);
        let (px, py) = blobs(60, 1.6, 4);
        let pool: Vec<PoolItem> = px
            .iter()
            .enumerate()
            .map(|(i, f)| PoolItem {
                image: format!("p{i:03}"),
                feature: f.clone(),
            })
            .collect();
        let data = ProtocolData {
            base_features: &x,
            base_labels: &y,
            pool: &pool,
            pool_labels: &py,
            model: &model,
        };
        let spec = SplitSpec {
            learning_size: 20,
            testing_size: 30,
            step: 5,
            runs: 3,
            seed: 1,
        };
        for selection in [SelectionMode::Uncertainty, SelectionMode::Random] {
            let (curve, traces) = run_protocol_traced(&data, &spec, selection, ConfidenceMode::Absolute).unwrap();
            assert_eq!(curve.points.iter().map(|p| p.labeled).collect::<Vec<_>>(), vec![0, 5, 10, 15, 20]);
            for t in &traces {
                assert_eq!(t.labeled.len(), 20);
                assert!(t.labeled.iter().all(|i| t.learning.contains(i) && !t.testing.contains(i)));
            }
            let again = run_protocol(&data, &spec, selection, ConfidenceMode::Absolute).unwrap();
            assert_eq!(again, curve);
        }
        let empty = SplitSpec { learning_size: 0, ..spec };
        let curve = run_protocol(&data, &empty, SelectionMode::Uncertainty, ConfidenceMode::Absolute).unwrap();
        assert_eq!(curve.points.len(), 1);
        let mut csv = Vec::new();
        curve.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("count,mean,std\n0,"));
    }
}
