//! Flat TOML configuration with `SHELF_<KEY>` environment overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use shelfscan::activelearn::{ConfidenceMode, SelectionMode};
use shelfscan::classify::{KernelKind, SvmParams, Variant, DEFAULT_C, DEFAULT_RBF_WIDTH};
use shelfscan::patchmine::{MiningParams, DEFAULT_FIRE_THRESHOLD, DEFAULT_TOP_K};
use shelfscan::pipeline::PipelineConfig;

pub const ENV_PREFIX: &str = "SHELF_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Catalog root (train/, test/, manifest.csv).
    pub dataset: PathBuf,
    /// Where banks, models, indexes and reports are written.
    pub artifacts: PathBuf,
    pub variant: Variant,
    pub svm_c: f64,
    pub kernel: KernelKind,
    pub rbf_width: f64,
    pub fire_threshold: f32,
    pub top_k: usize,
    /// Notification threshold on the classification score.
    pub tau: f64,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub mining_rounds: usize,
    pub seeds_per_image: usize,
    pub negatives_per_class: usize,
    pub detector_c: f64,
    pub vocab_size: usize,
    pub confidence: ConfidenceMode,
    pub selection: SelectionMode,
    pub ocr: String,
    pub bind: String,
}

impl Default for Config {
    fn default() -> Self {
        let mining = MiningParams::default();
        Self {
            dataset: PathBuf::from("data"),
            artifacts: PathBuf::from("artifacts"),
            variant: Variant::Full,
            svm_c: DEFAULT_C,
            kernel: KernelKind::Rbf,
            rbf_width: DEFAULT_RBF_WIDTH,
            fire_threshold: DEFAULT_FIRE_THRESHOLD,
            top_k: DEFAULT_TOP_K,
            tau: 0.0,
            seed: 0,
            workers: 0,
            mining_rounds: mining.rounds,
            seeds_per_image: mining.seeds_per_image,
            negatives_per_class: mining.negatives_per_class,
            detector_c: mining.detector_c,
            vocab_size: shelfscan::classify::DEFAULT_VOCAB_SIZE,
            confidence: ConfidenceMode::Absolute,
            selection: SelectionMode::Uncertainty,
            ocr: "font".into(),
            bind: "127.0.0.1:8080".into(),
        }
    }
}

fn key_names() -> Vec<String> {
    match toml::Value::try_from(Config::default()) {
        Ok(toml::Value::Table(t)) => t.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

/// Parses an override as a TOML scalar, falling back to a plain string.
fn env_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

impl Config {
    /// Reads `path` when given (missing file is an error), then applies
    /// environment overrides from `env`.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        let keys = key_names();
        for (name, raw) in env {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else { continue };
            let key = key.to_ascii_lowercase();
            if !keys.contains(&key) {
                bail!("unknown config key `{key}` (from environment variable {name})");
            }
            let value = match key.as_str() {
                // Paths and names stay strings even when they look numeric.
                "dataset" | "artifacts" | "ocr" | "bind" | "variant" | "kernel" | "confidence" | "selection" => {
                    toml::Value::String(raw)
                }
                _ => env_value(&raw),
            };
            table.insert(key, value);
        }
        if let Some(unknown) = table.keys().find(|k| !keys.contains(k)) {
            bail!("unknown config key `{unknown}`");
        }
        // One key at a time so the error can name the culprit.
        for (key, value) in &table {
            let mut single = toml::Table::new();
            single.insert(key.clone(), value.clone());
            if let Err(e) = toml::Value::Table(single).try_into::<Config>() {
                bail!("config key `{key}`: {}", e.message());
            }
        }
        let config: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| anyhow::anyhow!("config: {}", e.message()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("svm_c", self.svm_c),
            ("rbf_width", self.rbf_width),
            ("fire_threshold", f64::from(self.fire_threshold)),
            ("tau", self.tau),
            ("detector_c", self.detector_c),
        ];
        for (key, v) in finite {
            if !v.is_finite() {
                bail!("config key `{key}` must be finite");
            }
        }
        for (key, v) in [("svm_c", self.svm_c), ("rbf_width", self.rbf_width), ("detector_c", self.detector_c)] {
            if v <= 0.0 {
                bail!("config key `{key}` must be positive");
            }
        }
        for (key, v) in [
            ("top_k", self.top_k),
            ("seeds_per_image", self.seeds_per_image),
            ("negatives_per_class", self.negatives_per_class),
            ("vocab_size", self.vocab_size),
        ] {
            if v == 0 {
                bail!("config key `{key}` must be at least 1");
            }
        }
        if self.ocr != "font" {
            bail!("config key `ocr`: unknown adapter `{}` (available: font)", self.ocr);
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let mut p = PipelineConfig {
            variant: self.variant,
            tau: self.tau,
            ..PipelineConfig::default()
        };
        p.svm = SvmParams {
            c: self.svm_c,
            kernel: self.kernel,
            rbf_width: self.rbf_width,
            ..SvmParams::default()
        };
        p.mining.fire_threshold = self.fire_threshold;
        p.mining.top_k = self.top_k;
        p.mining.seed = self.seed;
        p.mining.rounds = self.mining_rounds;
        p.mining.seeds_per_image = self.seeds_per_image;
        p.mining.negatives_per_class = self.negatives_per_class;
        p.mining.detector_c = self.detector_c;
        p.bow.vocab_size = self.vocab_size;
        p.bow.seed = self.seed;
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_carry_the_documented_constants() {
        let c = Config::load(None, Vec::new()).unwrap();
        assert_eq!((c.svm_c, c.rbf_width, c.fire_threshold, c.top_k), (2048.0, 2.0, -1.5, 210));
        assert_eq!(c.variant, Variant::Full);
    }

    #[test]
    fn file_then_environment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shelf.toml");
        std::fs::write(&path, "variant = \"DP_SVM\"\ntau = 0.25\ndataset = \"/data\"\n").unwrap();
        let c = Config::load(Some(&path), env(&[("SHELF_TAU", "0.5"), ("SHELF_TOP_K", "12"), ("OTHER", "x")])).unwrap();
        assert_eq!(c.variant, Variant::DpSvm);
        assert_eq!(c.tau, 0.5);
        assert_eq!(c.top_k, 12);
        assert_eq!(c.dataset, PathBuf::from("/data"));
    }

    #[test]
    fn errors_name_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "svm_cc = 3\n").unwrap();
        let e = Config::load(Some(&path), Vec::new()).unwrap_err().to_string();
        assert!(e.contains("svm_cc"), "{e}");
        let e = Config::load(None, env(&[("SHELF_TOP_K", "many")])).unwrap_err().to_string();
        assert!(e.contains("top_k"), "{e}");
        let e = Config::load(None, env(&[("SHELF_SVM_C", "-1")])).unwrap_err().to_string();
        assert!(e.contains("svm_c"), "{e}");
        let e = Config::load(None, env(&[("SHELF_NOPE", "1")])).unwrap_err().to_string();
        assert!(e.contains("nope"), "{e}");
        let e = Config::load(None, env(&[("SHELF_VARIANT", "SIFT")])).unwrap_err().to_string();
        assert!(e.contains("variant"), "{e}");
    }
}
