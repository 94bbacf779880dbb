use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: String,
    /// Correctly classified images of this class.
    pub correct: usize,
    pub total: usize,
    /// `correct / total`, absent when the class has no images.
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean of the per-class accuracies over classes with images.
    pub accuracy: f64,
    pub per_class: Vec<ClassRow>,
    /// Row = truth, column = prediction, rows normalized to sum to 1
    /// (all-zero rows for classes without images).
    pub confusion: Vec<Vec<f64>>,
    /// Classes left out of the mean because they have no images.
    pub empty_classes: Vec<String>,
}

/// Mean per-class accuracy and the row-normalized confusion matrix.
pub fn evaluate(predictions: &[usize], truth: &[usize], classes: &[String]) -> Result<EvalReport> {
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: predictions.len(),
        });
    }
    let l = classes.len();
    if let Some(&bad) = predictions.iter().chain(truth).find(|&&c| c >= l) {
        return Err(Error::LabelOutOfRange { label: bad, classes: l });
    }
    let mut counts = vec![vec![0usize; l]; l];
    for (&p, &t) in predictions.iter().zip(truth) {
        counts[t][p] += 1;
    }
    let mut per_class = Vec::with_capacity(l);
    let mut confusion = Vec::with_capacity(l);
    let mut empty_classes = Vec::new();
    let mut sum = 0.0;
    let mut present = 0usize;
    for (c, row) in counts.iter().enumerate() {
        let total: usize = row.iter().sum();
        let correct = row[c];
        let accuracy = (total > 0).then(|| correct as f64 / total as f64);
        if let Some(a) = accuracy {
            sum += a;
            present += 1;
        } else {
            empty_classes.push(classes[c].clone());
        }
        confusion.push(
            row.iter()
                .map(|&v| if total > 0 { v as f64 / total as f64 } else { 0.0 })
                .collect(),
        );
        per_class.push(ClassRow {
            class: classes[c].clone(),
            correct,
            total,
            accuracy,
        });
    }
    Ok(EvalReport {
        accuracy: sum / present as f64,
        per_class,
        confusion,
        empty_classes,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Confusion matrix as CSV with class names on both axes.
    pub fn write_confusion_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["truth\\predicted".to_string()];
        header.extend(self.per_class.iter().map(|r| r.class.clone()));
        w.write_record(&header)?;
        for (row, values) in self.per_class.iter().zip(&self.confusion) {
            let mut rec = vec![row.class.clone()];
            rec.extend(values.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub tau: f64,
    /// Images whose score exceeds `tau`.
    pub attempted: usize,
    pub correct: usize,
    /// `correct / attempted`, 1.0 when nothing is attempted.
    pub precision: f64,
    /// `correct / all images`.
    pub recall: f64,
}

/// Precision and recall of thresholded predictions at every `tau`, given
/// each image's (predicted class, score) and true class.
pub fn pr_curve(predictions: &[(usize, f64)], truth: &[usize], taus: &[f64]) -> Result<Vec<PrPoint>> {
    if predictions.is_empty() {
        return Err(Error::Empty("test set"));
    }
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: predictions.len(),
        });
    }
    if taus.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::param("taus", "must be sorted ascending"));
    }
    let total = predictions.len() as f64;
    Ok(taus
        .iter()
        .map(|&tau| {
            let (mut attempted, mut correct) = (0usize, 0usize);
            for (&(c, s), &t) in predictions.iter().zip(truth) {
                if s > tau {
                    attempted += 1;
                    correct += usize::from(c == t);
                }
            }
            PrPoint {
                tau,
                attempted,
                correct,
                precision: if attempted == 0 {
                    1.0
                } else {
                    correct as f64 / attempted as f64
                },
                recall: correct as f64 / total,
            }
        })
        .collect())
}

/// `-inf` followed by every distinct score, ascending: the thresholds at
/// which the curve can change.
pub fn tau_grid(predictions: &[(usize, f64)]) -> Vec<f64> {
    let mut taus: Vec<f64> = predictions.iter().map(|p| p.1).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    taus.insert(0, f64::NEG_INFINITY);
    taus
}

pub fn write_pr_csv<W: Write>(out: W, points: &[PrPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau", "attempted", "correct", "precision", "recall"])?;
    for p in points {
        w.write_record(&[
            p.tau.to_string(),
            p.attempted.to_string(),
            p.correct.to_string(),
            p.precision.to_string(),
            p.recall.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Smallest threshold whose precision reaches `target`, if any.
pub fn operating_point(points: &[PrPoint], target: f64) -> Option<f64> {
    points.iter().find(|p| p.attempted > 0 && p.precision >= target).map(|p| p.tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn worked_two_class_case() {
        let r = evaluate(&[0, 1, 1, 1], &[0, 0, 1, 1], &names(2)).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.confusion[0], vec![0.5, 0.5]);
        assert_eq!(evaluate(&[0, 1], &[0, 1], &names(2)).unwrap().accuracy, 1.0);
    }

    #[test]
    fn empty_classes_are_excluded() {
        let r = evaluate(&[0, 1], &[0, 0], &names(3)).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.empty_classes, vec!["c1".to_string(), "c2".to_string()]);
        assert_eq!(r.confusion[2], vec![0.0; 3]);
    }

    #[test]
    fn input_errors() {
        assert!(evaluate(&[], &[], &names(2)).is_err());
        assert!(evaluate(&[0], &[0, 1], &names(2)).is_err());
        assert!(evaluate(&[2], &[0], &names(2)).is_err());
    }

    #[test]
    fn random_guessing_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth: Vec<usize> = (0..1000).map(|i| i % 4).collect();
        let pred: Vec<usize> = (0..1000).map(|_| rng.random_range(0..4)).collect();
        let a = evaluate(&pred, &truth, &names(4)).unwrap().accuracy;
        assert!((a - 0.25).abs() <= 0.05);
    }

    proptest! {
        #[test]
        fn matches_independent_recount_and_diagonal(
            pairs in prop::collection::vec((0usize..5, 0usize..5), 1..200),
            perm in Just([3usize, 0, 4, 1, 2]),
        ) {
            let pred: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let truth: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let r = evaluate(&pred, &truth, &names(5)).unwrap();
            let mut accs = Vec::new();
            for c in 0..5 {
                let n = truth.iter().filter(|&&t| t == c).count();
                if n > 0 {
                    let k = pairs.iter().filter(|p| p.1 == c && p.0 == c).count();
                    accs.push(k as f64 / n as f64);
                }
            }
            let expected = accs.iter().sum::<f64>() / accs.len() as f64;
            prop_assert!((r.accuracy - expected).abs() < 1e-12);
            let diag: f64 = (0..5).filter(|&c| r.per_class[c].total > 0).map(|c| r.confusion[c][c]).sum();
            prop_assert!((diag / accs.len() as f64 - r.accuracy).abs() < 1e-12);
            for (c, row) in r.confusion.iter().enumerate() {
                if r.per_class[c].total > 0 {
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
            let rp: Vec<usize> = pred.iter().map(|&c| perm[c]).collect();
            let rt: Vec<usize> = truth.iter().map(|&c| perm[c]).collect();
            let r2 = evaluate(&rp, &rt, &names(5)).unwrap();
            prop_assert!((r2.accuracy - r.accuracy).abs() < 1e-12);
        }

        #[test]
        fn pr_is_monotone(scores in prop::collection::vec((0usize..3, -5.0f64..5.0, 0usize..3), 1..100)) {
            let preds: Vec<(usize, f64)> = scores.iter().map(|s| (s.0, s.1)).collect();
            let truth: Vec<usize> = scores.iter().map(|s| s.2).collect();
            let pts = pr_curve(&preds, &truth, &tau_grid(&preds)).unwrap();
            for w in pts.windows(2) {
                prop_assert!(w[1].recall <= w[0].recall);
                prop_assert!(w[1].attempted <= w[0].attempted);
            }
            let plain = preds.iter().zip(&truth).filter(|(p, &t)| p.0 == t).count() as f64 / preds.len() as f64;
            prop_assert_eq!(pts[0].recall, plain);
            prop_assert_eq!(pts[0].precision, plain);
            let last = pts.last().unwrap();
            prop_assert_eq!(last.attempted, 0);
            prop_assert_eq!(last.precision, 1.0);
        }
    }

    #[test]
    fn unsorted_taus_rejected() {
        assert!(pr_curve(&[(0, 1.0)], &[0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn exports() {
        let r = evaluate(&[0, 1], &[0, 1], &names(2)).unwrap();
        let mut buf = Vec::new();
        r.write_confusion_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "truth\\predicted,c0,c1\nc0,1,0\nc1,0,1\n");
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(v["accuracy"], 1.0);
    }
}
