use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{recognize_words, segment_text_regions, OcrAdapter, TextScorer};
use crate::dataset::Catalog;
use crate::error::{Error, Result};

pub const MIN_TOKEN_LEN: usize = 3;

/// Lowercases, trims non-alphanumeric characters from both ends, and
/// rejects short tokens and tokens that are at least half digits (weights
/// and prices).
pub fn normalize_token(raw: &str) -> Option<String> {
    let t = raw
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    let len = t.chars().count();
    if len < MIN_TOKEN_LEN {
        return None;
    }
    let digits = t.chars().filter(char::is_ascii_digit).count();
    if 2 * digits >= len {
        return None;
    }
    Some(t)
}

/// Per-class token histograms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WordClassIndex {
    classes: Vec<String>,
    counts: Vec<BTreeMap<String, u64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedClass {
    pub class: usize,
    pub name: String,
    pub count: u64,
    /// Share of the token's occurrences that fall in this class.
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordMatch {
    /// The token occurs in exactly one class.
    AutoMapped { class: usize, name: String },
    /// Descending by count, ties to the lower class index.
    Ranked(Vec<RankedClass>),
    Unknown,
}

impl WordClassIndex {
    pub fn new(classes: Vec<String>) -> Self {
        let counts = vec![BTreeMap::new(); classes.len()];
        Self { classes, counts }
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(BTreeMap::is_empty)
    }

    /// Records one raw word seen on an image of `class`; returns whether it
    /// survived normalization.
    pub fn add(&mut self, class: usize, raw: &str) -> Result<bool> {
        if class >= self.classes.len() {
            return Err(Error::LabelOutOfRange {
                label: class,
                classes: self.classes.len(),
            });
        }
        Ok(match normalize_token(raw) {
            Some(t) => {
                *self.counts[class].entry(t).or_insert(0) += 1;
                true
            }
            None => false,
        })
    }

    pub fn count(&self, class: usize, token: &str) -> u64 {
        self.counts[class].get(token).copied().unwrap_or(0)
    }

    pub fn histogram(&self, class: usize) -> &BTreeMap<String, u64> {
        &self.counts[class]
    }

    pub fn total(&self, class: usize) -> u64 {
        self.counts[class].values().sum()
    }

    /// Adds every count of `other`, which must cover the same classes.
    pub fn merge(&mut self, other: &WordClassIndex) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::param("index", "class lists differ"));
        }
        for (mine, theirs) in self.counts.iter_mut().zip(&other.counts) {
            for (t, &n) in theirs {
                *mine.entry(t.clone()).or_insert(0) += n;
            }
        }
        Ok(())
    }

    pub fn query(&self, raw: &str) -> WordMatch {
        let Some(token) = normalize_token(raw) else {
            return WordMatch::Unknown;
        };
        let mut hits: Vec<(usize, u64)> = (0..self.classes.len())
            .map(|c| (c, self.count(c, &token)))
            .filter(|&(_, n)| n > 0)
            .collect();
        match hits.len() {
            0 => WordMatch::Unknown,
            1 => WordMatch::AutoMapped {
                class: hits[0].0,
                name: self.classes[hits[0].0].clone(),
            },
            _ => {
                hits.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                let total: u64 = hits.iter().map(|h| h.1).sum();
                WordMatch::Ranked(
                    hits.into_iter()
                        .map(|(c, n)| RankedClass {
                            class: c,
                            name: self.classes[c].clone(),
                            count: n,
                            confidence: n as f64 / total as f64,
                        })
                        .collect(),
                )
            }
        }
    }

    /// `{ class_name: { token: count } }`.
    pub fn to_json(&self) -> Result<String> {
        let map: BTreeMap<&str, &BTreeMap<String, u64>> = self
            .classes
            .iter()
            .map(String::as_str)
            .zip(&self.counts)
            .collect();
        Ok(serde_json::to_string_pretty(&map)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, BTreeMap<String, u64>> = serde_json::from_str(text)?;
        for (class, hist) in &map {
            if let Some((t, _)) = hist.iter().find(|(t, &n)| n == 0 || normalize_token(t).as_deref() != Some(t)) {
                return Err(Error::Format(format!("class `{class}`: bad entry for token `{t}`")));
            }
        }
        let (classes, counts) = map.into_iter().unzip();
        Ok(Self { classes, counts })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Free function form of [`WordClassIndex::query`].
pub fn query_word(index: &WordClassIndex, raw: &str) -> WordMatch {
    index.query(raw)
}

/// Reads the words on every training image and counts them per class.
/// Images that fail to load are logged and skipped.
pub fn build_word_index(
    catalog: &Catalog,
    scorer: &dyn TextScorer,
    ocr: &dyn OcrAdapter,
    parallel: bool,
) -> Result<WordClassIndex> {
    ocr.check_available()?;
    let jobs: Vec<(usize, usize)> = (0..catalog.num_classes())
        .flat_map(|c| (0..catalog.train_images(c).len()).map(move |i| (c, i)))
        .collect();
    let partial = crate::par::map(jobs.len(), parallel, |j| {
        let (c, i) = jobs[j];
        let mut local = WordClassIndex::new(catalog.classes().to_vec());
        match catalog.train_image(c, i) {
            Ok(img) => {
                let regions = segment_text_regions(&scorer.score(&img));
                match recognize_words(&img, &regions, ocr) {
                    Ok(texts) => {
                        for word in texts.iter().flat_map(|t| t.split_whitespace()) {
                            // Class index comes from the catalog, so it is in range.
                            let _ = local.add(c, word);
                        }
                    }
                    Err(e) => log::warn!("{}: {e}", catalog.train_images(c)[i]),
                }
            }
            Err(e) => log::warn!("skipping {}: {e}", catalog.train_images(c)[i]),
        }
        local
    });
    let mut index = WordClassIndex::new(catalog.classes().to_vec());
    for p in &partial {
        index.merge(p)?;
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize_token("Coffee,").as_deref(), Some("coffee"));
        assert_eq!(normalize_token("500g"), None);
        assert_eq!(normalize_token("a"), None);
        assert_eq!(normalize_token("...ab!"), None);
        assert_eq!(normalize_token("7up!"), Some("7up".into()));
        assert_eq!(normalize_token("1234"), None);
    }

    fn constructed() -> WordClassIndex {
        let mut idx = WordClassIndex::new(vec!["coffee".into(), "tea".into(), "water".into()]);
        for _ in 0..8 {
            idx.add(0, "arabica").unwrap();
            idx.add(0, "Mocha").unwrap();
        }
        for _ in 0..2 {
            idx.add(1, "mocha").unwrap();
        }
        idx.add(2, "500ml").unwrap();
        idx
    }

    #[test]
    fn queries() {
        let idx = constructed();
        assert_eq!(
            idx.query("Arabica"),
            WordMatch::AutoMapped {
                class: 0,
                name: "coffee".into()
            }
        );
        let WordMatch::Ranked(r) = idx.query("mocha") else { panic!() };
        assert_eq!(
            r.iter().map(|c| (c.name.as_str(), c.count, c.confidence)).collect::<Vec<_>>(),
            vec![("coffee", 8, 0.8), ("tea", 2, 0.2)]
        );
        assert_eq!(idx.query("zzzz"), WordMatch::Unknown);
        assert_eq!(idx.query("500ml"), WordMatch::Unknown);
        assert_eq!(idx.total(0), 16);
        assert_eq!(idx.total(2), 0);
    }

    #[test]
    fn ranked_ties_go_to_lower_index() {
        let mut idx = WordClassIndex::new(vec!["a".into(), "b".into(), "c".into()]);
        idx.add(2, "dup").unwrap();
        idx.add(1, "dup").unwrap();
        let WordMatch::Ranked(r) = idx.query("dup") else { panic!() };
        assert_eq!(r.iter().map(|c| c.class).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn json_round_trip() {
        let idx = constructed();
        let text = idx.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["coffee"]["arabica"], 8);
        assert_eq!(v["water"], serde_json::json!({}));
        assert_eq!(WordClassIndex::from_json(&text).unwrap(), idx);
        assert!(WordClassIndex::from_json(r#"{"a": {"x": 1}}"#).is_err());
        assert!(WordClassIndex::from_json(r#"{"a": {"word": 0}}"#).is_err());
    }

    #[test]
    fn built_from_rendered_packaging() {
        use crate::dataset::{generate_synthetic, render_product, synthetic_styles, Catalog};
        use crate::seed::rng_for;
        use crate::textmap::{FontOcr, GradientDensityScorer};

        let cat = generate_synthetic(3, 6, 0, 5).unwrap();
        let idx = build_word_index(&cat, &GradientDensityScorer::default(), &FontOcr, true).unwrap();
        let styles = synthetic_styles(3, 5);
        for (c, style) in styles.iter().enumerate() {
            assert_eq!(idx.count(c, &style.words[0]), 6, "{:?}", idx.histogram(c));
            assert_eq!(idx.total(c), 6);
        }

        // coffee: 8 images, tea: 2, with "mocha" on all of them and
        // "arabica" on coffee only.
        let style = &styles[0];
        let mut rng = rng_for(1, 2, 3);
        let mut render = |words: &str, n: usize, class: &str| -> Vec<(String, crate::imagecore::GrayImage)> {
            (0..n)
                .map(|i| {
                    let mut img = render_product(style, None, &mut rng);
                    for (k, w) in words.split(' ').enumerate() {
                        crate::font::draw_text(&mut img, w, 8, 104 + 18 * k as i64, 2, 0.1);
                    }
                    (format!("train/{class}/{i}.png"), img)
                })
                .collect()
        };
        let coffee = render("arabica mocha", 8, "coffee");
        let tea = render("mocha", 2, "tea");
        let cat = Catalog::from_memory(vec!["coffee".into(), "tea".into()], vec![coffee, tea], Vec::new()).unwrap();
        let idx = build_word_index(&cat, &GradientDensityScorer::default(), &FontOcr, false).unwrap();
        assert_eq!(idx.count(0, "arabica"), 8);
        assert_eq!(idx.count(0, "mocha"), 8);
        assert_eq!(idx.count(1, "mocha"), 2);
        assert!(matches!(idx.query("arabica"), WordMatch::AutoMapped { class: 0, .. }));
    }

    #[test]
    fn empty_catalog_gives_empty_index() {
        let cat = crate::dataset::Catalog::from_memory(Vec::new(), Vec::new(), Vec::new()).unwrap();
        let idx = build_word_index(
            &cat,
            &crate::textmap::GradientDensityScorer::default(),
            &crate::textmap::FontOcr,
            true,
        )
        .unwrap();
        assert!(idx.is_empty());
        assert!(idx.classes().is_empty());
    }

    #[test]
    fn out_of_range_class() {
        let mut idx = WordClassIndex::new(vec!["a".into()]);
        assert!(idx.add(1, "word").is_err());
    }
}
