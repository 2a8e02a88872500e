use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use wfp_bench::report::EvalReport;
use wfp_bench::sweep::{self, SweepPlan};
use wfp_bench::{eval_loaded, init_threads, report_for, train_model, BankPreset, DataPaths, TrainOptions};
use wfp_core::model_io;

#[derive(Parser)]
#[command(name = "wfp", version, about = "Log-series prototype classifier: train, evaluate and sweep on MNIST")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model, write it to --out and print a JSON report.
    Train(TrainCmd),
    /// Evaluate a saved model on the test set.
    Eval(EvalCmd),
    /// Train over a grid of unit counts and step sizes, evaluate every bank.
    Sweep(SweepCmd),
}

#[derive(Args)]
struct DataArgs {
    /// Training images (overrides --data-dir)
    #[arg(long)]
    train_images: Option<PathBuf>,
    /// Training labels (overrides --data-dir)
    #[arg(long)]
    train_labels: Option<PathBuf>,
    /// Test images (overrides --data-dir)
    #[arg(long)]
    test_images: Option<PathBuf>,
    /// Test labels (overrides --data-dir)
    #[arg(long)]
    test_labels: Option<PathBuf>,
    /// Directory holding the standard MNIST file names (raw or .gz).
    #[arg(long, env = "WFP_DATA_DIR")]
    data_dir: Option<PathBuf>,
}

impl DataArgs {
    fn paths(&self) -> DataPaths {
        DataPaths {
            train_images: self.train_images.clone(),
            train_labels: self.train_labels.clone(),
            test_images: self.test_images.clone(),
            test_labels: self.test_labels.clone(),
        }
        .with_defaults(self.data_dir.as_deref())
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Passes over the training set
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    /// Repulsion step size.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Train under this bank (the transform achieving each unit's similarity
    /// is used in the update).
    #[arg(long, value_enum, default_value = "none")]
    train_bank: BankPreset,
    /// Sum only the first N series terms per class (0 = all).
    #[arg(long)]
    max_terms: Option<usize>,
    /// Also pull the true class's units toward missed samples.
    #[arg(long)]
    attract: bool,
    /// Skip the non-negativity clamp after updates.
    #[arg(long)]
    allow_negative: bool,
    /// Update only the K best-ranked units of a class.
    #[arg(long)]
    update_top_k: Option<usize>,
    /// Shuffle the training order each epoch with this seed.
    #[arg(long)]
    shuffle_seed: Option<u64>,
}

impl TrainArgs {
    fn options(&self, n_max: usize) -> TrainOptions {
        TrainOptions {
            n_max,
            alpha: self.alpha,
            epochs: self.epochs,
            train_bank: self.train_bank,
            max_terms: self.max_terms.filter(|&m| m > 0),
            attract: self.attract,
            allow_negative: self.allow_negative,
            update_top_k: self.update_top_k,
            shuffle_seed: self.shuffle_seed,
        }
    }
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// Unit capacity.
    #[arg(long)]
    units: usize,
    /// Bank used for the test-set evaluation in the report.
    #[arg(long, value_enum, default_value = "none")]
    bank: BankPreset,
    /// Model output path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the report to this file.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Worker threads (defaults to all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct EvalCmd {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "none")]
    bank: BankPreset,
    /// Override the model's series truncation (0 = all terms).
    #[arg(long)]
    max_terms: Option<usize>,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Worker threads (defaults to all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SweepCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// Unit capacities to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = sweep::PAPER_UNITS)]
    units: Vec<usize>,
    /// Step sizes to try per capacity (defaults to --alpha).
    #[arg(long, value_delimiter = ',')]
    alpha_grid: Vec<f64>,
    /// Banks to evaluate (defaults to all three presets).
    #[arg(long, value_enum, value_delimiter = ',')]
    bank: Vec<BankPreset>,
    /// Save every trained model here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the JSON array of reports to this file too.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write one CSV row per report to this file
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the error table as Markdown to this file
    #[arg(long)]
    markdown: Option<PathBuf>,
    /// Worker threads (defaults to all cores)
    #[arg(long)]
    threads: Option<usize>,
}

fn emit<T: serde::Serialize>(value: &T, file: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    println!("{text}");
    if let Some(path) = file {
        std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_train(cmd: TrainCmd) -> Result<()> {
    init_threads(cmd.threads);
    let paths = cmd.data.paths();
    let train = paths.load_train()?;
    let test = paths.load_test()?;
    let trained = train_model(&train, &cmd.train.options(cmd.units))?;
    model_io::save_model(&trained.model, &cmd.out).with_context(|| format!("writing model to {}", cmd.out.display()))?;
    eprintln!("wrote {}", cmd.out.display());
    let report = report_for(&trained, test.as_deref(), cmd.bank)?;
    emit(&report, cmd.json.as_deref())
}

fn cmd_eval(cmd: EvalCmd) -> Result<()> {
    init_threads(cmd.threads);
    let bytes = std::fs::read(&cmd.model).with_context(|| format!("reading {}", cmd.model.display()))?;
    let mut model = model_io::deserialize_model(&bytes).with_context(|| format!("loading model {}", cmd.model.display()))?;
    if let Some(m) = cmd.max_terms {
        model.set_series(wfp_core::SeriesConfig::truncated(m));
    }
    let Some(test) = cmd.data.paths().load_test()? else {
        bail!("eval needs --test-images and --test-labels (or WFP_DATA_DIR)");
    };
    let report = eval_loaded(&model, &bytes, &test, cmd.bank)?;
    emit(&report, cmd.json.as_deref())
}

fn cmd_sweep(cmd: SweepCmd) -> Result<()> {
    init_threads(cmd.threads);
    let paths = cmd.data.paths();
    let train = paths.load_train()?;
    let test = paths.load_test()?;
    let plan = SweepPlan {
        units: cmd.units.clone(),
        alphas: if cmd.alpha_grid.is_empty() {
            vec![cmd.train.alpha]
        } else {
            cmd.alpha_grid.clone()
        },
        banks: if cmd.bank.is_empty() {
            BankPreset::ALL.to_vec()
        } else {
            cmd.bank.clone()
        },
        base: cmd.train.options(0),
    };
    let out = cmd.out.clone();
    let mut reports: Vec<EvalReport> = sweep::run_sweep(&plan, &train, test.as_deref(), |t| match &out {
        Some(dir) => sweep::save_to_dir(dir, t),
        None => Ok(()),
    })?;
    for r in reports.iter_mut() {
        r.config.command = "sweep".into();
    }
    let md = sweep::markdown_table(&reports, &plan.banks);
    eprintln!("\n{md}");
    if let Some(p) = &cmd.markdown {
        std::fs::write(p, &md)?;
    }
    if let Some(p) = &cmd.csv {
        std::fs::write(p, sweep::csv_table(&reports))?;
    }
    emit(&reports, cmd.json.as_deref())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Train(c) => cmd_train(c),
        Command::Eval(c) => cmd_eval(c),
        Command::Sweep(c) => cmd_sweep(c),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
