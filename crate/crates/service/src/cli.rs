use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use shelfscan::activelearn::{run_protocol, PoolItem, ProtocolData, SelectionMode};
use shelfscan::classify::{write_pr_csv, Variant};
use shelfscan::dataset::{
    generate_synthetic_with, load_catalog, load_query_image, Catalog, SplitSpec, SynthOptions,
};
use shelfscan::patchmine::{mine_bank, DetectorBank};
use shelfscan::pipeline::{evaluate_on_test, training_features, Classifier};
use shelfscan::textmap::{build_word_index, FontOcr, GradientDensityScorer, WordClassIndex};

use crate::artifacts::{model_version, write_atomic, Layout, RunRecord};
use crate::config::{Config, ENV_PREFIX};
use crate::server::{self, word_match_json, AppState};

#[derive(Debug, Parser)]
#[command(name = "shelfscan", version, about = "Grocery product recognition on shelf images")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags mirroring config keys; they win over the file and the environment.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub dataset: Option<String>,
    #[arg(long, global = true)]
    pub artifacts: Option<String>,
    #[arg(long, global = true)]
    pub variant: Option<String>,
    #[arg(long, global = true)]
    pub svm_c: Option<String>,
    #[arg(long, global = true)]
    pub kernel: Option<String>,
    #[arg(long, global = true)]
    pub rbf_width: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub fire_threshold: Option<String>,
    #[arg(long, global = true)]
    pub top_k: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub tau: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    #[arg(long, global = true)]
    pub workers: Option<String>,
    #[arg(long, global = true)]
    pub mining_rounds: Option<String>,
    #[arg(long, global = true)]
    pub seeds_per_image: Option<String>,
    #[arg(long, global = true)]
    pub confidence: Option<String>,
    #[arg(long, global = true)]
    pub selection: Option<String>,
    #[arg(long, global = true)]
    pub bind: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(String, String)> {
        let fields = [
            ("dataset", &self.dataset),
            ("artifacts", &self.artifacts),
            ("variant", &self.variant),
            ("svm_c", &self.svm_c),
            ("kernel", &self.kernel),
            ("rbf_width", &self.rbf_width),
            ("fire_threshold", &self.fire_threshold),
            ("top_k", &self.top_k),
            ("tau", &self.tau),
            ("seed", &self.seed),
            ("workers", &self.workers),
            ("mining_rounds", &self.mining_rounds),
            ("seeds_per_image", &self.seeds_per_image),
            ("confidence", &self.confidence),
            ("selection", &self.selection),
            ("bind", &self.bind),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (format!("{ENV_PREFIX}{}", k.to_uppercase()), v.clone())))
            .collect()
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic catalog to disk.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        #[arg(long, default_value_t = 40)]
        shelves: usize,
        /// Use the degraded test domain.
        #[arg(long)]
        shifted: bool,
        /// Classes that share one logo, e.g. `--shared-logo 0,1`.
        #[arg(long, value_delimiter = ',')]
        shared_logo: Vec<usize>,
    },
    /// Mine the discriminative patch detector bank.
    Mine,
    /// Train the configured variant (mining first if no bank exists).
    Train,
    /// Classify one image.
    Classify { image: PathBuf },
    /// Accuracy and confusion matrix on the catalog's test images.
    Evaluate,
    /// Precision/recall over the tau grid.
    PrCurve {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the word-to-class index from the training images.
    BuildIndex,
    /// Look up one word in the index.
    QueryWord { word: String },
    /// Learning curves from uncertainty (or random) labeling of test images.
    ActiveLearn {
        #[arg(long, default_value_t = 180)]
        learning: usize,
        #[arg(long, default_value_t = 500)]
        testing: usize,
        #[arg(long, default_value_t = 20)]
        step: usize,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        /// Run both selection modes.
        #[arg(long)]
        compare: bool,
    },
    /// Start the HTTP API.
    Serve,
}

pub fn run(cli: Cli) -> Result<()> {
    let mut env: Vec<(String, String)> = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    env.extend(cli.overrides.pairs());
    let config = Config::load(cli.config.as_deref(), env)?;
    if config.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let layout = Layout::new(&config.artifacts);
    match cli.command {
        Command::Synth {
            out,
            classes,
            per_class,
            shelves,
            shifted,
            shared_logo,
        } => synth(&config, &out, classes, per_class, shelves, shifted, shared_logo),
        Command::Mine => mine(&config, &layout),
        Command::Train => train(&config, &layout),
        Command::Classify { image } => classify(&config, &layout, &image),
        Command::Evaluate => evaluate(&config, &layout),
        Command::PrCurve { out } => pr(&config, &layout, out),
        Command::BuildIndex => build_index(&config, &layout),
        Command::QueryWord { word } => query(&config, &layout, &word),
        Command::ActiveLearn {
            learning,
            testing,
            step,
            runs,
            compare,
        } => {
            let spec = SplitSpec {
                learning_size: learning,
                testing_size: testing,
                step,
                runs,
                seed: config.seed,
            };
            active_learn(&config, &layout, spec, compare)
        }
        Command::Serve => serve(config),
    }
}

fn catalog(config: &Config) -> Result<Catalog> {
    load_catalog(&config.dataset).with_context(|| format!("loading catalog {}", config.dataset.display()))
}

fn finish(mut record: RunRecord, layout: &Layout, catalog: Option<&Catalog>) -> Result<()> {
    if let Some(c) = catalog {
        record.dataset_fingerprint = Some(c.fingerprint()?);
    }
    let path = record.write(layout)?;
    log::info!("run report written to {}", path.display());
    Ok(())
}

fn synth(
    config: &Config,
    out: &Path,
    classes: usize,
    per_class: usize,
    shelves: usize,
    shifted: bool,
    shared_logo: Vec<usize>,
) -> Result<()> {
    let mut options = if shifted { SynthOptions::domain_shifted() } else { SynthOptions::default() };
    options.shared_logo = shared_logo;
    let catalog = generate_synthetic_with(classes, per_class, shelves, config.seed, &options)?;
    catalog.write(out)?;
    println!(
        "wrote {} classes, {} training images, {} shelf images to {}",
        catalog.num_classes(),
        catalog.num_train_images(),
        catalog.test_images().len(),
        out.display()
    );
    Ok(())
}

fn mine_or_load(config: &Config, layout: &Layout, catalog: &Catalog) -> Result<DetectorBank> {
    let path = layout.bank();
    if path.exists() {
        let bank = DetectorBank::load(&path)?;
        if bank.num_classes() != catalog.num_classes() {
            bail!("{} has {} classes, the catalog {}", path.display(), bank.num_classes(), catalog.num_classes());
        }
        log::info!("using existing bank {}", path.display());
        return Ok(bank);
    }
    let bank = mine_bank(catalog, &config.pipeline().mining)?;
    std::fs::create_dir_all(layout.root())?;
    bank.save(&path)?;
    Ok(bank)
}

fn mine(config: &Config, layout: &Layout) -> Result<()> {
    let catalog = catalog(config)?;
    let start = Instant::now();
    let bank = mine_bank(&catalog, &config.pipeline().mining)?;
    std::fs::create_dir_all(layout.root())?;
    bank.save(&layout.bank())?;
    let per_class: Vec<usize> = bank.slots().iter().map(Vec::len).collect();
    println!("mined {} detectors {:?} -> {}", bank.len(), per_class, layout.bank().display());
    let mut record = RunRecord::new("mine", config);
    record.output(&layout.bank())?;
    record.summary = json!({
        "detectors_per_class": per_class,
        "bank_hash": bank.content_hash(),
        "seconds": start.elapsed().as_secs_f64(),
    });
    finish(record, layout, Some(&catalog))
}

fn train(config: &Config, layout: &Layout) -> Result<()> {
    let catalog = catalog(config)?;
    let pipeline = config.pipeline();
    let start = Instant::now();
    let classifier = match config.variant {
        Variant::Baseline => Classifier::train(&catalog, &pipeline)?,
        _ => Classifier::train_with_bank(&catalog, mine_or_load(config, layout, &catalog)?, &pipeline)?,
    };
    let written = layout.save_classifier(&classifier)?;
    println!("trained {} model {}", classifier.variant(), model_version(&classifier));
    let mut record = RunRecord::new("train", config);
    for path in &written {
        record.output(path)?;
    }
    record.summary = json!({
        "variant": classifier.variant(),
        "model_version": model_version(&classifier),
        "content_hash": classifier.content_hash(),
        "support_vectors": classifier.model().map(|m| m.num_support()),
        "seconds": start.elapsed().as_secs_f64(),
    });
    finish(record, layout, Some(&catalog))
}

fn classify(config: &Config, layout: &Layout, image: &Path) -> Result<()> {
    let classifier = layout.load_classifier(config.variant)?;
    let img = load_query_image(image)?;
    let p = classifier.classify(&img, true)?;
    let name = &classifier.classes()[p.class];
    let notified = p.score > config.tau;
    if notified {
        println!("{name}\t{}", p.score);
    } else {
        println!("no confident product");
    }
    let mut record = RunRecord::new("classify", config);
    record.summary = json!({
        "image": image.display().to_string(),
        "class": name,
        "score": p.score,
        "notified": notified,
        "model_version": model_version(&classifier),
    });
    finish(record, layout, None)
}

fn evaluate(config: &Config, layout: &Layout) -> Result<()> {
    let catalog = catalog(config)?;
    let classifier = layout.load_classifier(config.variant)?;
    let report = evaluate_on_test(&catalog, &classifier, true)?;
    let v = config.variant.as_str();
    let report_path = layout.report(&format!("evaluate-{v}.json"));
    write_atomic(&report_path, report.to_json()?.as_bytes())?;
    let confusion_path = layout.report(&format!("confusion-{v}.csv"));
    let mut csv = Vec::new();
    report.eval.write_confusion_csv(&mut csv)?;
    write_atomic(&confusion_path, &csv)?;
    println!(
        "{v}: accuracy {:.4} over {} images ({})",
        report.eval.accuracy,
        report.truth.len(),
        report_path.display()
    );
    let mut record = RunRecord::new("evaluate", config);
    record.output(&report_path)?;
    record.output(&confusion_path)?;
    record.summary = json!({
        "variant": v,
        "accuracy": report.eval.accuracy,
        "model_version": model_version(&classifier),
        "report_hash": report.content_hash()?,
    });
    finish(record, layout, Some(&catalog))
}

fn pr(config: &Config, layout: &Layout, out: Option<PathBuf>) -> Result<()> {
    let catalog = catalog(config)?;
    let classifier = layout.load_classifier(config.variant)?;
    let report = evaluate_on_test(&catalog, &classifier, true)?;
    let path = out.unwrap_or_else(|| layout.report(&format!("pr-{}.csv", config.variant.as_str())));
    let mut csv = Vec::new();
    write_pr_csv(&mut csv, &report.pr)?;
    write_atomic(&path, &csv)?;
    println!("{} operating points -> {}", report.pr.len(), path.display());
    let mut record = RunRecord::new("pr-curve", config);
    record.output(&path)?;
    record.summary = json!({ "points": report.pr.len(), "model_version": model_version(&classifier) });
    finish(record, layout, Some(&catalog))
}

fn build_index(config: &Config, layout: &Layout) -> Result<()> {
    let catalog = catalog(config)?;
    let index = build_word_index(&catalog, &GradientDensityScorer::default(), &FontOcr, true)?;
    std::fs::create_dir_all(layout.root())?;
    index.save(&layout.index())?;
    let tokens: Vec<usize> = (0..catalog.num_classes()).map(|c| index.histogram(c).len()).collect();
    println!("indexed tokens per class {:?} -> {}", tokens, layout.index().display());
    let mut record = RunRecord::new("build-index", config);
    record.output(&layout.index())?;
    record.summary = json!({ "ocr": config.ocr, "tokens_per_class": tokens });
    finish(record, layout, Some(&catalog))
}

fn query(config: &Config, layout: &Layout, word: &str) -> Result<()> {
    let index = WordClassIndex::load(&layout.index())
        .with_context(|| format!("loading {} (run `build-index` first)", layout.index().display()))?;
    let answer = word_match_json(&index, word);
    println!("{}", serde_json::to_string_pretty(&answer)?);
    let mut record = RunRecord::new("query-word", config);
    record.summary = json!({ "word": word, "result": answer });
    finish(record, layout, None)
}

fn active_learn(config: &Config, layout: &Layout, spec: SplitSpec, compare: bool) -> Result<()> {
    let catalog = catalog(config)?;
    let classifier = layout.load_classifier(config.variant)?;
    let model = classifier
        .model()
        .with_context(|| format!("{} has no SVM model to retrain", config.variant))?;
    let (base_features, base_labels) = training_features(&catalog, &classifier, true)?;
    let pool = {
        use rayon::prelude::*;
        let tests = catalog.test_images();
        (0..tests.len())
            .into_par_iter()
            .map(|i| {
                Ok(PoolItem {
                    image: tests[i].image.clone(),
                    feature: classifier.features(&catalog.test_image(i)?, false),
                })
            })
            .collect::<shelfscan::Result<Vec<_>>>()?
    };
    let pool_labels: Vec<usize> = catalog.test_images().iter().map(|t| t.class).collect();
    let data = ProtocolData {
        base_features: &base_features,
        base_labels: &base_labels,
        pool: &pool,
        pool_labels: &pool_labels,
        model,
    };
    let modes = if compare {
        vec![SelectionMode::Uncertainty, SelectionMode::Random]
    } else {
        vec![config.selection]
    };
    let mut record = RunRecord::new("active-learn", config);
    let mut summary = serde_json::Map::new();
    for mode in modes {
        let curve = run_protocol(&data, &spec, mode, config.confidence)?;
        let tag = serde_json::to_value(mode)?.as_str().unwrap_or("curve").to_string();
        let json_path = layout.report(&format!("active-{tag}.json"));
        write_atomic(&json_path, curve.to_json()?.as_bytes())?;
        let csv_path = layout.report(&format!("active-{tag}.csv"));
        {
            let file = File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
            curve.write_csv(BufWriter::new(file))?;
        }
        println!("{tag}:");
        for p in &curve.points {
            println!("  {:>4} labeled  mean {:.4}  std {:.4}", p.labeled, p.mean, p.std);
        }
        record.output(&json_path)?;
        record.output(&csv_path)?;
        summary.insert(tag, json!(curve.points.iter().map(|p| p.mean).collect::<Vec<_>>()));
    }
    record.summary = summary.into();
    finish(record, layout, Some(&catalog))
}

fn serve(config: Config) -> Result<()> {
    let bind = config.bind.clone();
    let state = Arc::new(AppState::load(config)?);
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(server::serve(state, &bind))
}
