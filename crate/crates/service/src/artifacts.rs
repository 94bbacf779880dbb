//! On-disk layout of everything the CLI and server produce.
//!
//! ```text
//! <artifacts>/bank.bin
//! <artifacts>/<VARIANT>/classifier.json   variant, class names, version
//! <artifacts>/<VARIANT>/model.bin         SVM variants
//! <artifacts>/<VARIANT>/vocab.json        BASELINE
//! <artifacts>/index.json                  word index
//! <artifacts>/reports/*.json|csv
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shelfscan::classify::{BowVocabulary, SvmModel, Variant};
use shelfscan::patchmine::DetectorBank;
use shelfscan::pipeline::Classifier;

/// Short form of a classifier's content hash, echoed by the API.
pub fn model_version(classifier: &Classifier) -> String {
    classifier.content_hash()[..16].to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    variant: Variant,
    classes: Vec<String>,
    version: String,
    content_hash: String,
}

#[derive(Clone, Debug)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn bank(&self) -> PathBuf {
        self.root.join("bank.bin")
    }

    pub fn variant_dir(&self, variant: Variant) -> PathBuf {
        self.root.join(variant.as_str())
    }

    pub fn index(&self) -> PathBuf {
        self.root.join("index.json")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.reports().join(name)
    }

    pub fn save_classifier(&self, classifier: &Classifier) -> Result<Vec<PathBuf>> {
        let dir = self.variant_dir(classifier.variant());
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = Vec::new();
        if let Some(bank) = classifier.bank() {
            bank.save(&self.bank())?;
            written.push(self.bank());
        }
        if let Some(vocab) = classifier.vocabulary() {
            let path = dir.join("vocab.json");
            write_atomic(&path, vocab.to_json()?.as_bytes())?;
            written.push(path);
        }
        if let Some(model) = classifier.model() {
            let path = dir.join("model.bin");
            write_atomic(&path, &model.to_bytes())?;
            written.push(path);
        }
        let manifest = Manifest {
            variant: classifier.variant(),
            classes: classifier.classes().to_vec(),
            version: model_version(classifier),
            content_hash: classifier.content_hash(),
        };
        let path = dir.join("classifier.json");
        write_atomic(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        written.push(path);
        Ok(written)
    }

    pub fn load_classifier(&self, variant: Variant) -> Result<Classifier> {
        let dir = self.variant_dir(variant);
        let manifest_path = dir.join("classifier.json");
        let text = fs::read_to_string(&manifest_path).with_context(|| {
            format!("no trained {variant} classifier at {} (run `train` first)", dir.display())
        })?;
        let manifest: Manifest =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", manifest_path.display()))?;
        if manifest.variant != variant {
            bail!("{} describes {}, expected {variant}", manifest_path.display(), manifest.variant);
        }
        let classifier = if variant == Variant::Baseline {
            let vocab = BowVocabulary::from_json(&fs::read_to_string(dir.join("vocab.json"))?)?;
            let model = SvmModel::load(&dir.join("model.bin"))?;
            Classifier::from_baseline(vocab, model)
        } else {
            let bank = DetectorBank::load(&self.bank())?;
            let model_path = dir.join("model.bin");
            let model = if model_path.exists() { Some(SvmModel::load(&model_path)?) } else { None };
            Classifier::from_parts(variant, bank, model)?.with_classes(manifest.classes.clone())?
        };
        if classifier.content_hash() != manifest.content_hash {
            bail!(
                "{variant} artifacts in {} are inconsistent (bank.bin was replaced after training?)",
                dir.display()
            );
        }
        Ok(classifier)
    }
}

/// Writes through a temporary sibling so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(())
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Summary every subcommand leaves behind.
#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub tool_version: &'static str,
    pub config: crate::config::Config,
    pub dataset_fingerprint: Option<String>,
    /// Output file path to SHA-256 of its bytes.
    pub outputs: Vec<(String, String)>,
    pub summary: serde_json::Value,
}

impl RunRecord {
    pub fn new(command: &str, config: &crate::config::Config) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION"),
            config: config.clone(),
            dataset_fingerprint: None,
            outputs: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push((path.display().to_string(), file_hash(path)?));
        Ok(())
    }

    pub fn write(&self, layout: &Layout) -> Result<PathBuf> {
        let path = layout.report(&format!("run-{}.json", self.command));
        write_atomic(&path, serde_json::to_string_pretty(self)?.as_bytes())?;
        Ok(path)
    }
}
