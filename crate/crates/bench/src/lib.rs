//! Benchmark harness behind the `wfp` binary: dataset discovery, the three
//! evaluation bank presets, train/eval drivers that emit JSON reports, and
//! the unit-count sweep.

pub mod report;
pub mod sweep;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use wfp_core::classifier::{self, Model};
use wfp_core::dataset::{self, Sample};
use wfp_core::model_io;
use wfp_core::perception::SeriesConfig;
use wfp_core::trainer::{self, TrainConfig, TrainTrace};
use wfp_core::transforms::{TransformBank, TransformSpec};

use crate::report::{EvalReport, ReportConfig};

pub const DATA_DIR_ENV: &str = "WFP_DATA_DIR";

/// Named transform banks, one per evaluation column of the benchmark table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum)]
pub enum BankPreset {
    /// Identity only.
    #[value(name = "none")]
    Identity,
    /// 3x3 grid of one-pixel shifts.
    #[value(name = "shift1")]
    Shift1,
    /// One-pixel shifts crossed with -10, 0 and +10 degree rotations.
    #[value(name = "shift1rot10")]
    Shift1Rot10,
}

impl BankPreset {
    pub const ALL: [BankPreset; 3] = [BankPreset::Identity, BankPreset::Shift1, BankPreset::Shift1Rot10];

    pub fn name(self) -> &'static str {
        match self {
            BankPreset::Identity => "none",
            BankPreset::Shift1 => "shift1",
            BankPreset::Shift1Rot10 => "shift1rot10",
        }
    }

    pub fn spec(self) -> TransformSpec {
        match self {
            BankPreset::Identity => TransformSpec::identity(),
            BankPreset::Shift1 => TransformSpec::shifts(1),
            BankPreset::Shift1Rot10 => TransformSpec::new(1, vec![-10.0, 0.0, 10.0]),
        }
    }

    pub fn bank(self) -> TransformBank {
        TransformBank::build(self.spec()).expect("presets are in range")
    }

    /// Column heading used in the Markdown table.
    pub fn heading(self) -> &'static str {
        match self {
            BankPreset::Identity => "Test error",
            BankPreset::Shift1 => "Test error (+/- 1 px)",
            BankPreset::Shift1Rot10 => "Test error (+/-10 degs & 1px)",
        }
    }
}

/// The four MNIST files. Missing entries fall back to `$WFP_DATA_DIR`.
#[derive(Debug, Clone, Default)]
pub struct DataPaths {
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
}

const STANDARD_NAMES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

fn find_in(dir: &Path, name: &str) -> Option<PathBuf> {
    [name.to_string(), format!("{name}.gz")]
        .into_iter()
        .map(|n| dir.join(n))
        .find(|p| p.is_file())
}

impl DataPaths {
    /// Fills unset paths from `data_dir` (or `$WFP_DATA_DIR`) using the
    /// standard MNIST file names, raw or gzipped.
    pub fn with_defaults(mut self, data_dir: Option<&Path>) -> Self {
        let env_dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
        let Some(dir) = data_dir.map(Path::to_path_buf).or(env_dir) else {
            return self;
        };
        let slots = [
            &mut self.train_images,
            &mut self.train_labels,
            &mut self.test_images,
            &mut self.test_labels,
        ];
        for (slot, name) in slots.into_iter().zip(STANDARD_NAMES) {
            if slot.is_none() {
                *slot = find_in(&dir, name);
            }
        }
        self
    }

    pub fn load_train(&self) -> Result<Vec<Sample>> {
        load_pair(&self.train_images, &self.train_labels, "training")
    }

    /// `None` when no test files were given or found.
    pub fn load_test(&self) -> Result<Option<Vec<Sample>>> {
        if self.test_images.is_none() && self.test_labels.is_none() {
            return Ok(None);
        }
        load_pair(&self.test_images, &self.test_labels, "test").map(Some)
    }
}

fn load_pair(images: &Option<PathBuf>, labels: &Option<PathBuf>, what: &str) -> Result<Vec<Sample>> {
    let (Some(images), Some(labels)) = (images, labels) else {
        bail!("{what} images and labels are both required (pass the paths or set {DATA_DIR_ENV})");
    };
    let samples = dataset::load_samples(images, labels)
        .with_context(|| format!("loading {what} set from {}", images.display()))?;
    eprintln!("loaded {} {what} samples", samples.len());
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub n_max: usize,
    pub alpha: f64,
    pub epochs: usize,
    pub train_bank: BankPreset,
    pub max_terms: Option<usize>,
    pub attract: bool,
    pub allow_negative: bool,
    pub update_top_k: Option<usize>,
    pub shuffle_seed: Option<u64>,
}

impl TrainOptions {
    pub fn new(n_max: usize) -> Self {
        TrainOptions {
            n_max,
            alpha: 0.1,
            epochs: 5,
            train_bank: BankPreset::Identity,
            max_terms: None,
            attract: false,
            allow_negative: false,
            update_top_k: None,
            shuffle_seed: None,
        }
    }

    pub fn series(&self) -> SeriesConfig {
        SeriesConfig::truncated(self.max_terms.unwrap_or(0))
    }

    pub fn to_config(&self) -> TrainConfig {
        TrainConfig {
            n_max: self.n_max,
            alpha: self.alpha,
            epochs: self.epochs,
            train_bank: self.train_bank.bank(),
            shuffle_seed: self.shuffle_seed,
            series: self.series(),
            attract: self.attract,
            allow_negative: self.allow_negative,
            update_top_k: self.update_top_k,
        }
    }
}

/// A trained model plus what is needed to describe it in reports.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Model,
    pub trace: TrainTrace,
    pub options: TrainOptions,
    pub bytes: Vec<u8>,
    pub sha256: String,
    /// Error of the final model over the training set, under the train bank.
    pub train_error_pct: f64,
    pub train_per_class_errors: [u64; 10],
    pub train_samples: usize,
    pub train_seconds: f64,
}

pub fn train_model(train: &[Sample], options: &TrainOptions) -> Result<TrainedModel> {
    let start = Instant::now();
    let (model, trace) = trainer::train(train, &options.to_config())?;
    let train_seconds = start.elapsed().as_secs_f64();
    eprintln!(
        "trained n={} alpha={} in {train_seconds:.1}s: {} units, {} updates",
        options.n_max,
        options.alpha,
        model.len(),
        trace.total_updates()
    );
    let cm = classifier::confusion(&model, train, &options.train_bank.bank())?;
    let bytes = model_io::serialize_model(&model);
    Ok(TrainedModel {
        sha256: report::sha256_hex(&bytes),
        model,
        trace,
        options: options.clone(),
        bytes,
        train_error_pct: report::pct(&cm),
        train_per_class_errors: cm.per_class_errors(),
        train_samples: train.len(),
        train_seconds,
    })
}

/// Evaluates a trained model under one bank and builds its report.
pub fn report_for(trained: &TrainedModel, test: Option<&[Sample]>, bank: BankPreset) -> Result<EvalReport> {
    let o = &trained.options;
    let start = Instant::now();
    let (test_error_pct, per_class_errors, split) = match test {
        Some(test) => {
            let cm = classifier::confusion(&trained.model, test, &bank.bank())?;
            (Some(report::pct(&cm)), cm.per_class_errors(), "test")
        }
        None => (None, trained.train_per_class_errors, "train"),
    };
    let eval_seconds = start.elapsed().as_secs_f64();
    Ok(EvalReport {
        config: ReportConfig {
            command: "train".into(),
            n_max: Some(o.n_max),
            alpha: Some(o.alpha),
            epochs: Some(o.epochs),
            bank: bank.name().into(),
            train_bank: Some(o.train_bank.name().into()),
            max_terms: o.max_terms,
            attract: o.attract,
            allow_negative: o.allow_negative,
            update_top_k: o.update_top_k,
            shuffle_seed: o.shuffle_seed,
            train_samples: Some(trained.train_samples),
            test_samples: test.map(<[Sample]>::len),
            per_class_split: split.into(),
        },
        units_used: trained.model.len(),
        train_error_pct: Some(trained.train_error_pct),
        test_error_pct,
        per_class_errors,
        wall_time_s: trained.train_seconds + eval_seconds,
        model_sha256: trained.sha256.clone(),
        trace: Some(report::epoch_traces(&trained.trace)),
        best_for_n: None,
    })
}

/// Report for a model loaded from disk.
pub fn eval_loaded(model: &Model, model_bytes: &[u8], test: &[Sample], bank: BankPreset) -> Result<EvalReport> {
    let start = Instant::now();
    let cm = classifier::confusion(model, test, &bank.bank())?;
    Ok(EvalReport {
        config: ReportConfig {
            command: "eval".into(),
            n_max: Some(model.n_max()),
            alpha: None,
            epochs: None,
            bank: bank.name().into(),
            train_bank: None,
            max_terms: model.series().max_terms(),
            attract: false,
            allow_negative: false,
            update_top_k: None,
            shuffle_seed: None,
            train_samples: None,
            test_samples: Some(test.len()),
            per_class_split: "test".into(),
        },
        units_used: model.len(),
        train_error_pct: None,
        test_error_pct: Some(report::pct(&cm)),
        per_class_errors: cm.per_class_errors(),
        wall_time_s: start.elapsed().as_secs_f64(),
        model_sha256: report::sha256_hex(model_bytes),
        trace: None,
        best_for_n: None,
    })
}

/// Sizes the global rayon pool. Only the first call has an effect.
pub fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // a second initialization is harmless; the first pool stays
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}
