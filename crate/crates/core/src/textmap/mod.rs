//! Text on packaging: score maps, region segmentation, OCR adapters and the
//! word-to-class index behind the shopping list.

mod index;
mod ocr;
mod segment;

pub use index::{
    build_word_index, normalize_token, query_word, RankedClass, WordClassIndex, WordMatch,
    MIN_TOKEN_LEN,
};
pub use ocr::{recognize_words, FontOcr, OcrAdapter};
pub use segment::{
    segment_text_regions, GradientDensityScorer, TextScoreMap, TextScorer, DILATIONS,
    MIN_REGION_AREA, SCORE_THRESHOLD,
};
