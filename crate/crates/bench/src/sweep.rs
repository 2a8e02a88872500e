//! Unit-count x step-size sweeps evaluated under every bank preset.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use wfp_core::dataset::Sample;
use wfp_core::model_io;

use crate::report::EvalReport;
use crate::{report_for, train_model, BankPreset, TrainOptions, TrainedModel};

pub const PAPER_UNITS: [usize; 5] = [300, 600, 1200, 2400, 4000];

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub units: Vec<usize>,
    pub alphas: Vec<f64>,
    pub banks: Vec<BankPreset>,
    /// Everything except `n_max` and `alpha`.
    pub base: TrainOptions,
}

/// Trains one model per `(n, alpha)` and reports it under every bank.
///
/// A run that never reached capacity made no updates, so its model does not
/// depend on alpha; later alphas for the same `n` reuse it. `on_model` sees
/// every model actually produced (e.g. to save it).
pub fn run_sweep(
    plan: &SweepPlan,
    train: &[Sample],
    test: Option<&[Sample]>,
    mut on_model: impl FnMut(&TrainedModel) -> Result<()>,
) -> Result<Vec<EvalReport>> {
    let mut reports = Vec::new();
    for &n in &plan.units {
        let mut alpha_free: Option<TrainedModel> = None;
        for &alpha in &plan.alphas {
            let options = TrainOptions {
                n_max: n,
                alpha,
                ..plan.base.clone()
            };
            let trained = match &alpha_free {
                Some(prev) => {
                    eprintln!("n={n}: no updates were made, reusing the model for alpha={alpha}");
                    TrainedModel {
                        options: options.clone(),
                        ..prev.clone()
                    }
                }
                None => {
                    let t = train_model(train, &options).with_context(|| format!("training n={n} alpha={alpha}"))?;
                    on_model(&t)?;
                    if t.trace.total_updates() == 0 {
                        alpha_free = Some(t.clone());
                    }
                    t
                }
            };
            for &bank in &plan.banks {
                let r = report_for(&trained, test, bank).with_context(|| format!("evaluating n={n} alpha={alpha} bank={}", bank.name()))?;
                eprintln!(
                    "n={n} alpha={alpha} bank={}: test error {}",
                    bank.name(),
                    r.test_error_pct.map_or("-".into(), |e| format!("{e:.2}%"))
                );
                reports.push(r);
            }
        }
    }
    mark_best(&mut reports);
    Ok(reports)
}

fn key(r: &EvalReport) -> (usize, u64) {
    (r.config.n_max.unwrap_or(0), r.config.alpha.unwrap_or(0.0).to_bits())
}

/// For each `n`, flags the reports of the alpha with the lowest mean test
/// error across banks (first alpha on ties; train error when no test set).
pub fn mark_best(reports: &mut [EvalReport]) {
    // n -> alpha bits -> (sum, count, first position)
    let mut means: BTreeMap<usize, Vec<(u64, f64, usize)>> = BTreeMap::new();
    for r in reports.iter() {
        let (n, a) = key(r);
        let err = r.test_error_pct.or(r.train_error_pct).unwrap_or(f64::INFINITY);
        let entry = means.entry(n).or_default();
        match entry.iter_mut().find(|(bits, _, _)| *bits == a) {
            Some(e) => {
                e.1 += err;
                e.2 += 1;
            }
            None => entry.push((a, err, 1)),
        }
    }
    let best: BTreeMap<usize, u64> = means
        .into_iter()
        .map(|(n, alphas)| {
            let mut best = alphas[0];
            for cand in &alphas[1..] {
                if cand.1 / (cand.2 as f64) < best.1 / (best.2 as f64) {
                    best = *cand;
                }
            }
            (n, best.0)
        })
        .collect();
    for r in reports.iter_mut() {
        let (n, a) = key(r);
        r.best_for_n = Some(best[&n] == a);
    }
}

/// Best-alpha error per `(n, bank)`, the shape of the benchmark table.
pub fn best_cells(reports: &[EvalReport]) -> BTreeMap<usize, (f64, BTreeMap<&str, f64>)> {
    let mut out: BTreeMap<usize, (f64, BTreeMap<&str, f64>)> = BTreeMap::new();
    for r in reports.iter().filter(|r| r.best_for_n == Some(true)) {
        let row = out
            .entry(r.config.n_max.unwrap_or(0))
            .or_insert_with(|| (r.config.alpha.unwrap_or(0.0), BTreeMap::new()));
        if let Some(e) = r.test_error_pct {
            row.1.insert(r.config.bank.as_str(), e);
        }
    }
    out
}

pub fn markdown_table(reports: &[EvalReport], banks: &[BankPreset]) -> String {
    let mut s = String::from("| # units | units used | alpha |");
    for b in banks {
        let _ = write!(s, " {} |", b.heading());
    }
    s.push_str("\n|---|---|---|");
    for _ in banks {
        s.push_str("---|");
    }
    s.push('\n');
    let cells = best_cells(reports);
    for (n, (alpha, row)) in &cells {
        let used = reports
            .iter()
            .find(|r| r.config.n_max == Some(*n) && r.best_for_n == Some(true))
            .map_or(0, |r| r.units_used);
        let _ = write!(s, "| {n} | {used} | {alpha} |");
        for b in banks {
            match row.get(b.name()) {
                Some(e) => {
                    let _ = write!(s, " {e:.2} |");
                }
                None => s.push_str(" - |"),
            }
        }
        s.push('\n');
    }
    s
}

pub fn csv_table(reports: &[EvalReport]) -> String {
    let mut s = String::from("n_max,alpha,bank,units_used,train_error_pct,test_error_pct,best_for_n,model_sha256\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.config.n_max.unwrap_or(0),
            r.config.alpha.unwrap_or(0.0),
            r.config.bank,
            r.units_used,
            opt(r.train_error_pct),
            opt(r.test_error_pct),
            r.best_for_n.unwrap_or(false),
            r.model_sha256
        );
    }
    s
}

/// Writes `m{n}_a{alpha}.wfc` under `dir`.
pub fn save_to_dir(dir: &Path, trained: &TrainedModel) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("m{}_a{}.wfc", trained.options.n_max, trained.options.alpha));
    model_io::save_model(&trained.model, &path)?;
    Ok(())
}
