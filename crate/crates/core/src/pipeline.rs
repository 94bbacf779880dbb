//! End-to-end runs: mine (or build a vocabulary), train, classify and
//! evaluate one variant on a catalog.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{
    argmax, bow_baseline_train, evaluate, pr_curve, region_vote_class, tau_grid, train_ovr,
    BowParams, BowVocabulary, DecisionRule, EvalReport, PrPoint, SvmModel, SvmParams, Variant,
};
use crate::dataset::Catalog;
use crate::encoder::{highest_score_class, EncodingMode, Encoder, FeatureVector};
use crate::error::{Error, Result};
use crate::imagecore::GrayImage;
use crate::patchmine::{mine_bank, DetectorBank, MiningParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub mining: MiningParams,
    pub svm: SvmParams,
    pub bow: BowParams,
    /// Notification threshold on the classification score.
    pub tau: f64,
    /// Evaluate detectors and images in parallel. Results do not depend on
    /// this flag.
    pub parallel: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Full,
            mining: MiningParams::default(),
            svm: SvmParams::default(),
            bow: BowParams::default(),
            tau: 0.0,
            parallel: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.svm.validate()?;
        if !self.tau.is_finite() {
            return Err(Error::param("tau", "must be finite"));
        }
        if !self.mining.fire_threshold.is_finite() {
            return Err(Error::param("fire_threshold", "must be finite"));
        }
        if self.mining.top_k == 0 {
            return Err(Error::param("top_k", "must be at least 1"));
        }
        if self.bow.vocab_size == 0 {
            return Err(Error::param("vocab_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// How one image was classified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub score: f64,
    /// Per-class SVM decision values, empty for the highest-score rules.
    pub decision_values: Vec<f64>,
}

#[derive(Clone, Debug)]
enum Stage {
    Patches {
        encoder: Encoder,
        mode: EncodingMode,
        model: Option<SvmModel>,
    },
    Words {
        vocab: BowVocabulary,
        model: SvmModel,
    },
}

/// A trained variant, ready to classify images.
#[derive(Clone, Debug)]
pub struct Classifier {
    variant: Variant,
    classes: Vec<String>,
    stage: Stage,
}

impl Classifier {
    /// Trains on the catalog's training images, mining a fresh detector bank
    /// for the patch variants.
    pub fn train(catalog: &Catalog, config: &PipelineConfig) -> Result<Self> {
        config.validate()?;
        match config.variant.encoding() {
            Some(_) => {
                let bank = mine_bank(catalog, &config.mining)?;
                Self::train_with_bank(catalog, bank, config)
            }
            None => {
                let (images, labels) = training_images(catalog)?;
                let (vocab, model) =
                    bow_baseline_train(&images, &labels, catalog.classes(), &config.bow, &config.svm)?;
                Ok(Self {
                    variant: config.variant,
                    classes: catalog.classes().to_vec(),
                    stage: Stage::Words { vocab, model },
                })
            }
        }
    }

    /// Patch variants from an existing bank.
    pub fn train_with_bank(catalog: &Catalog, bank: DetectorBank, config: &PipelineConfig) -> Result<Self> {
        let mode = config
            .variant
            .encoding()
            .ok_or_else(|| Error::param("variant", "the baseline does not use a detector bank"))?;
        if bank.num_classes() != catalog.num_classes() {
            return Err(Error::LengthMismatch {
                expected: catalog.num_classes(),
                got: bank.num_classes(),
            });
        }
        let encoder = Encoder::new(bank)?;
        let model = match config.variant.rule() {
            DecisionRule::Svm => {
                let (features, labels) = encode_training(catalog, &encoder, mode, config.parallel)?;
                let refs: Vec<&[f32]> = features.iter().map(Vec::as_slice).collect();
                Some(train_ovr(&refs, &labels, catalog.classes(), mode, &config.svm)?)
            }
            _ => None,
        };
        Ok(Self {
            variant: config.variant,
            classes: catalog.classes().to_vec(),
            stage: Stage::Patches { encoder, mode, model },
        })
    }

    /// Reassembles a patch classifier from saved artifacts.
    pub fn from_parts(variant: Variant, bank: DetectorBank, model: Option<SvmModel>) -> Result<Self> {
        let mode = variant
            .encoding()
            .ok_or_else(|| Error::param("variant", "the baseline does not use a detector bank"))?;
        let needs_model = variant.rule() == DecisionRule::Svm;
        if needs_model != model.is_some() {
            return Err(Error::param("variant", format!("{variant} model presence mismatch")));
        }
        let encoder = Encoder::new(bank)?;
        let classes = match &model {
            Some(m) => {
                if m.mode != mode || m.classes.len() != encoder.num_classes() {
                    return Err(Error::param("variant", "model does not match the bank and variant"));
                }
                m.classes.clone()
            }
            None => (0..encoder.num_classes()).map(|i| format!("class_{i}")).collect(),
        };
        Ok(Self {
            variant,
            classes,
            stage: Stage::Patches { encoder, mode, model },
        })
    }

    pub fn from_baseline(vocab: BowVocabulary, model: SvmModel) -> Self {
        Self {
            variant: Variant::Baseline,
            classes: model.classes.clone(),
            stage: Stage::Words { vocab, model },
        }
    }

    /// Replaces the class names; the count must not change.
    pub fn with_classes(mut self, classes: Vec<String>) -> Result<Self> {
        if classes.len() != self.classes.len() {
            return Err(Error::LengthMismatch {
                expected: self.classes.len(),
                got: classes.len(),
            });
        }
        self.classes = classes;
        Ok(self)
    }

    /// Same features and rule, new decision model (after retraining).
    pub fn with_model(&self, model: SvmModel) -> Result<Self> {
        let mut next = self.clone();
        match &mut next.stage {
            Stage::Patches { model: slot @ Some(_), mode, .. } => {
                if model.mode != *mode || model.num_classes() != self.classes.len() {
                    return Err(Error::param("model", "does not match the classifier"));
                }
                *slot = Some(model);
            }
            Stage::Patches { model: None, .. } => {
                return Err(Error::param("variant", format!("{} has no decision model", self.variant)));
            }
            Stage::Words { model: slot, .. } => {
                if model.num_classes() != self.classes.len() || model.dim() != slot.dim() {
                    return Err(Error::param("model", "does not match the classifier"));
                }
                *slot = model;
            }
        }
        Ok(next)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn bank(&self) -> Option<&DetectorBank> {
        match &self.stage {
            Stage::Patches { encoder, .. } => Some(encoder.bank()),
            Stage::Words { .. } => None,
        }
    }

    pub fn model(&self) -> Option<&SvmModel> {
        match &self.stage {
            Stage::Patches { model, .. } => model.as_ref(),
            Stage::Words { model, .. } => Some(model),
        }
    }

    pub fn vocabulary(&self) -> Option<&BowVocabulary> {
        match &self.stage {
            Stage::Words { vocab, .. } => Some(vocab),
            Stage::Patches { .. } => None,
        }
    }

    /// The feature the decision rule sees: a pooled patch vector or a word
    /// histogram.
    pub fn features(&self, image: &GrayImage, parallel: bool) -> Vec<f32> {
        match &self.stage {
            Stage::Patches { encoder, mode, .. } => encoder.encode(image, *mode, parallel).values,
            Stage::Words { vocab, .. } => vocab.feature(image),
        }
    }

    pub fn classify(&self, image: &GrayImage, parallel: bool) -> Result<Prediction> {
        self.classify_features(&self.features(image, parallel))
    }

    /// Applies the decision rule to a vector from [`Classifier::features`].
    pub fn classify_features(&self, features: &[f32]) -> Result<Prediction> {
        match &self.stage {
            Stage::Patches { encoder, mode, model } => match model {
                Some(m) => svm_prediction(m, features),
                None => {
                    let l = encoder.num_classes();
                    if features.len() != mode.len(l) {
                        return Err(Error::LengthMismatch {
                            expected: mode.len(l),
                            got: features.len(),
                        });
                    }
                    let v = FeatureVector {
                        values: features.to_vec(),
                        mode: *mode,
                        num_classes: l,
                        floor: encoder.floor(),
                    };
                    Ok(highest_score_prediction(&v, self.variant.rule()))
                }
            },
            Stage::Words { model, .. } => svm_prediction(model, features),
        }
    }

    /// Hash over every artifact the classifier holds.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.variant.as_str());
        if let Some(bank) = self.bank() {
            h.update(bank.content_hash());
        }
        if let Some(model) = self.model() {
            h.update(model.content_hash());
        }
        if let Some(vocab) = self.vocabulary() {
            h.update(vocab.to_json().unwrap_or_default());
        }
        hex::encode(h.finalize())
    }
}

fn svm_prediction(model: &SvmModel, feature: &[f32]) -> Result<Prediction> {
    let values = model.decision_values(feature)?;
    let (class, score) = argmax(&values);
    Ok(Prediction {
        class,
        score,
        decision_values: values,
    })
}

/// Highest-score rules; with no firing at all the image falls to class 0
/// at the floor score.
fn highest_score_prediction(v: &FeatureVector, rule: DecisionRule) -> Prediction {
    let class = match rule {
        DecisionRule::RegionVote => region_vote_class(v),
        _ => highest_score_class(v),
    };
    let l = v.num_classes;
    let score = |c: usize| {
        (0..v.values.len() / l.max(1))
            .map(|r| v.values[r * l + c])
            .fold(f32::NEG_INFINITY, f32::max)
    };
    let class = class.unwrap_or(0);
    Prediction {
        class,
        score: f64::from(score(class)),
        decision_values: Vec::new(),
    }
}

fn training_images(catalog: &Catalog) -> Result<(Vec<GrayImage>, Vec<usize>)> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for c in 0..catalog.num_classes() {
        for i in 0..catalog.train_images(c).len() {
            images.push(catalog.train_image(c, i)?);
            labels.push(c);
        }
    }
    if images.is_empty() {
        return Err(Error::Empty("training images"));
    }
    Ok((images, labels))
}

fn encode_training(
    catalog: &Catalog,
    encoder: &Encoder,
    mode: EncodingMode,
    parallel: bool,
) -> Result<(Vec<Vec<f32>>, Vec<usize>)> {
    let refs: Vec<(usize, usize)> = (0..catalog.num_classes())
        .flat_map(|c| (0..catalog.train_images(c).len()).map(move |i| (c, i)))
        .collect();
    let features = crate::par::map(refs.len(), parallel, |j| -> Result<Vec<f32>> {
        let (c, i) = refs[j];
        Ok(encoder.encode(&catalog.train_image(c, i)?, mode, false).values)
    });
    let features = features.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((features, refs.into_iter().map(|(c, _)| c).collect()))
}

/// Features and labels of every training image, as the classifier sees them.
pub fn training_features(
    catalog: &Catalog,
    classifier: &Classifier,
    parallel: bool,
) -> Result<(Vec<Vec<f32>>, Vec<usize>)> {
    let refs: Vec<(usize, usize)> = (0..catalog.num_classes())
        .flat_map(|c| (0..catalog.train_images(c).len()).map(move |i| (c, i)))
        .collect();
    let features = crate::par::map(refs.len(), parallel, |j| -> Result<Vec<f32>> {
        let (c, i) = refs[j];
        Ok(classifier.features(&catalog.train_image(c, i)?, false))
    });
    let features = features.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((features, refs.into_iter().map(|(c, _)| c).collect()))
}

/// Predictions on every test image of the catalog, plus Eq.-style mean
/// per-class accuracy and the precision/recall sweep over all scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: Variant,
    pub classifier_hash: String,
    pub eval: EvalReport,
    pub predictions: Vec<Prediction>,
    pub truth: Vec<usize>,
    pub pr: Vec<PrPoint>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn content_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(self)?)))
    }
}

pub fn evaluate_on_test(catalog: &Catalog, classifier: &Classifier, parallel: bool) -> Result<RunReport> {
    let tests = catalog.test_images();
    if tests.is_empty() {
        return Err(Error::Empty("test images"));
    }
    let predictions = crate::par::map(tests.len(), parallel, |i| -> Result<Prediction> {
        classifier.classify(&catalog.test_image(i)?, false)
    });
    let predictions = predictions.into_iter().collect::<Result<Vec<_>>>()?;
    let truth: Vec<usize> = tests.iter().map(|t| t.class).collect();
    let classes: Vec<usize> = predictions.iter().map(|p| p.class).collect();
    let eval = evaluate(&classes, &truth, catalog.classes())?;
    let scored: Vec<(usize, f64)> = predictions.iter().map(|p| (p.class, p.score)).collect();
    let pr = pr_curve(&scored, &truth, &tau_grid(&scored))?;
    Ok(RunReport {
        variant: classifier.variant(),
        classifier_hash: classifier.content_hash(),
        eval,
        predictions,
        truth,
        pr,
    })
}

/// Trains and evaluates one variant.
pub fn run(catalog: &Catalog, config: &PipelineConfig) -> Result<(Classifier, RunReport)> {
    let classifier = Classifier::train(catalog, config)?;
    let report = evaluate_on_test(catalog, &classifier, config.parallel)?;
    Ok((classifier, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic;

    fn quick() -> PipelineConfig {
        let mut c = PipelineConfig::default();
        c.mining.rounds = 1;
        c.mining.seeds_per_image = 4;
        c.mining.top_k = 8;
        c
    }

    #[test]
    fn defaults_follow_the_documented_constants() {
        let c = PipelineConfig::default();
        assert_eq!(c.svm.c, 2048.0);
        assert_eq!(c.svm.rbf_width, 2.0);
        assert_eq!(c.mining.fire_threshold, -1.5);
        assert_eq!(c.mining.top_k, 210);
        c.validate().unwrap();
        let bad = PipelineConfig {
            tau: f64::NAN,
            ..PipelineConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn variants_share_one_bank() {
        let cat = generate_synthetic(2, 6, 4, 3).unwrap();
        let config = quick();
        let bank = mine_bank(&cat, &config.mining).unwrap();
        for v in [Variant::Full, Variant::DpSvm, Variant::DpHs, Variant::DpPyrHs] {
            let cfg = PipelineConfig { variant: v, ..config.clone() };
            let clf = Classifier::train_with_bank(&cat, bank.clone(), &cfg).unwrap();
            assert_eq!(clf.model().is_some(), v.rule() == DecisionRule::Svm);
            let report = evaluate_on_test(&cat, &clf, true).unwrap();
            assert_eq!(report.predictions.len(), 4);
            assert_eq!(report.pr[0].recall, report.eval.per_class.iter().map(|r| r.correct).sum::<usize>() as f64 / 4.0);
        }
    }

    #[test]
    fn baseline_rejects_a_bank() {
        let cat = generate_synthetic(2, 6, 2, 3).unwrap();
        let config = PipelineConfig {
            variant: Variant::Baseline,
            ..quick()
        };
        let bank = mine_bank(&cat, &config.mining).unwrap();
        assert!(Classifier::train_with_bank(&cat, bank, &config).is_err());
    }
}
