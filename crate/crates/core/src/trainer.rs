//! Greedy unit growth with rank-scaled repulsion.
//!
//! Each training sample is classified against the current model. A miss is
//! appended verbatim as a new unit while there is room; once the model is
//! full, every unit of the wrongly predicted class is pushed away from the
//! sample instead:
//!
//! ```text
//! v <- normalize(v - (alpha / k) (v . x*) x*)
//! ```
//!
//! where `k` is the unit's rank within its class for this sample and `x*` is
//! the transformed copy of the sample that achieved the unit's similarity
//! (plain `x` with the identity bank).

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::classifier::{self, Classification, ClassifyError, Model, ModelError, RankedUnit};
use crate::dataset::{Sample, NUM_CLASSES};
use crate::perception::SeriesConfig;
use crate::transforms::TransformBank;
use crate::vector;

/// Largest number of samples classified ahead of the training loop.
const LOOKAHEAD: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    ConfigError(String),
    #[error("no training samples")]
    EmptyDataset,
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub n_max: usize,
    pub alpha: f64,
    pub epochs: usize,
    /// Identity-only unless training under transforms.
    pub train_bank: TransformBank,
    /// `None` keeps dataset order.
    pub shuffle_seed: Option<u64>,
    pub series: SeriesConfig,
    /// Also pull the true class's units toward a missed sample.
    pub attract: bool,
    /// Skip the non-negativity clamp after each update.
    pub allow_negative: bool,
    /// Only update the best-ranked `k` units of a class.
    pub update_top_k: Option<usize>,
}

impl TrainConfig {
    pub fn new(n_max: usize) -> Self {
        TrainConfig {
            n_max,
            alpha: 0.1,
            epochs: 5,
            train_bank: TransformBank::identity(),
            shuffle_seed: None,
            series: SeriesConfig::all(),
            attract: false,
            allow_negative: false,
            update_top_k: None,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(TrainError::ConfigError(format!(
                "alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.n_max < NUM_CLASSES {
            return Err(TrainError::ConfigError(format!(
                "unit capacity must be at least {NUM_CLASSES}, got {}",
                self.n_max
            )));
        }
        if self.epochs == 0 {
            return Err(TrainError::ConfigError("epochs must be at least 1".into()));
        }
        if self.update_top_k == Some(0) {
            return Err(TrainError::ConfigError("update-top-k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Online error: misses while streaming the epoch, over the sample count.
    pub train_error: f64,
    pub units_added: usize,
    /// Number of missed samples that triggered an update pass.
    pub updates: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub epochs: Vec<EpochStats>,
    pub total_units: usize,
}

impl TrainTrace {
    pub fn total_updates(&self) -> usize {
        self.epochs.iter().map(|e| e.updates).sum()
    }
}

/// Direction of a rank-scaled step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Repel,
    Attract,
}

/// `v +/- step (v . x) x`, optionally clamped to the non-negative orthant,
/// then normalized. Returns `v` unchanged when the result would vanish.
pub fn update_vector(v: &[f64], x: &[f64], step: f64, direction: Step, allow_negative: bool) -> Vec<f64> {
    let p = vector::dot(v, x);
    let c = match direction {
        Step::Repel => -step * p,
        Step::Attract => step * p,
    };
    let mut out: Vec<f64> = v.iter().zip(x).map(|(&a, &b)| a + c * b).collect();
    if !allow_negative {
        for w in out.iter_mut() {
            if *w < 0.0 {
                *w = 0.0;
            }
        }
    }
    if vector::normalize_in_place(&mut out) == 0.0 {
        return v.to_vec();
    }
    out
}

/// Repulsion for a class's units already ranked by similarity to `x`
/// (rank 1 first). Unit at rank `k` moves by `alpha / k` against the
/// transformed copy of `x` that maximizes its similarity under `bank`.
pub fn update_units(ranked: &[&[f64]], x: &[f64], alpha: f64, bank: &TransformBank, allow_negative: bool) -> Vec<Vec<f64>> {
    ranked
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let (t, _) = bank.best_transform(v, x);
            let x_star = bank.transforms()[t].apply(x);
            update_vector(v, &x_star, alpha / (i + 1) as f64, Step::Repel, allow_negative)
        })
        .collect()
}

fn apply_ranked(
    model: &mut Model,
    ranked: &[RankedUnit],
    images: &[Vec<f64>],
    cfg: &TrainConfig,
    direction: Step,
) -> Result<(), TrainError> {
    let limit = cfg.update_top_k.unwrap_or(usize::MAX).min(ranked.len());
    for (i, r) in ranked[..limit].iter().enumerate() {
        let step = cfg.alpha / (i + 1) as f64;
        let updated = update_vector(
            model.unit(r.unit).v(),
            &images[r.transform],
            step,
            direction,
            cfg.allow_negative,
        );
        model.replace(r.unit, &updated)?;
    }
    Ok(())
}

/// Runs the training loop. Strictly sequential: each update is visible to the
/// next classification, and a fixed config and sample order give a
/// bit-identical model.
pub fn train(samples: &[Sample], cfg: &TrainConfig) -> Result<(Model, TrainTrace), TrainError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut model = Model::new(cfg.n_max, cfg.series);
    let mut trace = TrainTrace::default();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = cfg.shuffle_seed.map(ChaCha8Rng::seed_from_u64);

    for epoch in 1..=cfg.epochs {
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        let mut stats = EpochStats {
            epoch,
            train_error: 0.0,
            units_added: 0,
            updates: 0,
        };
        let mut misses = 0usize;
        // Look-ahead: upcoming samples are classified together against the
        // current model and their results used until the model next changes.
        // A change discards the rest, so every decision is exactly what a
        // one-at-a-time loop would make; the window grows while nothing
        // changes and collapses after each change.
        let mut pending: VecDeque<Option<Classification>> = VecDeque::new();
        let mut window = 1usize;
        let mut pos = 0usize;
        while pos < order.len() {
            if pending.is_empty() {
                let ahead = &order[pos..order.len().min(pos + window)];
                let images: Vec<Vec<Vec<f64>>> = ahead.iter().map(|&i| cfg.train_bank.images(samples[i].x())).collect();
                let refs: Vec<&[Vec<f64>]> = images.iter().map(Vec::as_slice).collect();
                match classifier::classify_batch(&model, &refs) {
                    Ok(cs) => pending.extend(cs.into_iter().map(Some)),
                    // an empty model gets everything wrong
                    Err(ClassifyError::EmptyModel) => pending.push_back(None),
                    Err(e) => return Err(e.into()),
                }
            }
            let sample = &samples[order[pos]];
            pos += 1;
            let label = sample.label();
            let outcome = pending.pop_front().expect("refilled above");
            if matches!(&outcome, Some(c) if c.predicted == label) {
                window = (window * 2).min(LOOKAHEAD);
                continue;
            }
            pending.clear();
            window = 1;
            misses += 1;
            if !model.is_full() {
                model.push(label, sample.x())?;
                stats.units_added += 1;
                continue;
            }
            let c = outcome.expect("a full model is non-empty");
            let images = cfg.train_bank.images(sample.x());
            apply_ranked(
                &mut model,
                &c.ranked(c.predicted as usize),
                &images,
                cfg,
                Step::Repel,
            )?;
            if cfg.attract {
                apply_ranked(
                    &mut model,
                    &c.ranked(label as usize),
                    &images,
                    cfg,
                    Step::Attract,
                )?;
            }
            stats.updates += 1;
        }
        stats.train_error = misses as f64 / samples.len() as f64;
        log_epoch(&stats, model.len());
        trace.epochs.push(stats);
    }
    trace.total_units = model.len();
    Ok((model, trace))
}

fn log_epoch(stats: &EpochStats, units: usize) {
    if std::env::var_os("WFP_QUIET").is_none() {
        eprintln!(
            "epoch {}: online error {:.3}%, +{} units ({} total), {} updates",
            stats.epoch,
            100.0 * stats.train_error,
            stats.units_added,
            units,
            stats.updates
        );
    }
}
