//! One-vs-rest SVM classification of encoded images, the bag-of-words
//! baseline and evaluation metrics.

mod bow;
mod eval;
mod model;
mod smo;

use serde::{Deserialize, Serialize};

use crate::encoder::{highest_score_class, EncodingMode, FeatureVector, REGIONS};

pub use bow::{
    bow_baseline_train, describe, detect_keypoints, extract_descriptors, BowParams, BowVocabulary,
    Keypoint, DEFAULT_VOCAB_SIZE, DESCRIPTOR_LEN,
};
pub use eval::{
    evaluate, operating_point, pr_curve, tau_grid, write_pr_csv, ClassRow, EvalReport, PrPoint,
};
pub use model::{argmax, train_ovr, KernelKind, SvmModel, SvmParams, DEFAULT_C, DEFAULT_RBF_WIDTH};
pub use smo::{solve as solve_dual, DualSolution};

/// Rows of the results table: how an image is represented and how the
/// class is decided.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    /// Patch histograms over the 2-level pyramid, SVM.
    Full,
    /// Whole-image patch histogram, SVM.
    DpSvm,
    /// Class of the single highest-scoring patch.
    DpHs,
    /// Majority over the 5 regions' highest-scoring classes.
    DpPyrHs,
    /// Bag of visual words, SVM.
    Baseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecisionRule {
    Svm,
    HighestScore,
    RegionVote,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::DpSvm,
        Variant::DpHs,
        Variant::DpPyrHs,
        Variant::Baseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "FULL",
            Variant::DpSvm => "DP_SVM",
            Variant::DpHs => "DP_HS",
            Variant::DpPyrHs => "DP_PYR_HS",
            Variant::Baseline => "BASELINE",
        }
    }

    /// Encoder mode for the patch variants, `None` for the baseline.
    pub fn encoding(self) -> Option<EncodingMode> {
        match self {
            Variant::Full | Variant::DpPyrHs => Some(EncodingMode::Pyramid),
            Variant::DpSvm | Variant::DpHs => Some(EncodingMode::Whole),
            Variant::Baseline => None,
        }
    }

    pub fn rule(self) -> DecisionRule {
        match self {
            Variant::Full | Variant::DpSvm | Variant::Baseline => DecisionRule::Svm,
            Variant::DpHs => DecisionRule::HighestScore,
            Variant::DpPyrHs => DecisionRule::RegionVote,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == norm)
            .ok_or_else(|| crate::Error::param("variant", format!("unknown variant `{s}`")))
    }
}

/// Each region above the floor votes for its best class; most votes wins,
/// ties go to the higher best score, then the lower index. Falls back to
/// `highest_score_class` for whole-image vectors.
pub fn region_vote_class(vector: &FeatureVector) -> Option<usize> {
    let l = vector.num_classes;
    if vector.mode == EncodingMode::Whole || l == 0 {
        return highest_score_class(vector);
    }
    let mut votes = vec![0usize; l];
    let mut best = vec![f32::NEG_INFINITY; l];
    for r in 0..REGIONS {
        let row = &vector.values[r * l..(r + 1) * l];
        let mut top: Option<(usize, f32)> = None;
        for (c, &v) in row.iter().enumerate() {
            if v > vector.floor && top.is_none_or(|(_, b)| v > b) {
                top = Some((c, v));
            }
        }
        if let Some((c, v)) = top {
            votes[c] += 1;
            best[c] = best[c].max(v);
        }
    }
    (0..l)
        .filter(|&c| votes[c] > 0)
        .fold(None, |acc: Option<usize>, c| match acc {
            Some(a) if (votes[a], best[a]) >= (votes[c], best[c]) => Some(a),
            _ => Some(c),
        })
}
