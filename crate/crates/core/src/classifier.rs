//! Model storage and argmax classification over per-class perception scores.
//!
//! For an input `x` every unit reports `p = max_t v · T_t x`; each class sorts
//! its units' `p` in descending order, scores them with
//! [`perception::score_sorted`], and the class with the highest score wins
//! (lowest class index on ties). Classes with no units score 0.

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{Sample, NUM_CLASSES, PIXELS};
use crate::perception::{self, PerceptionError, SeriesConfig};
use crate::transforms::TransformBank;
use crate::vector;

/// Units per column-interleaved panel in the similarity kernel.
const LANES: usize = 16;

/// How far a raw similarity may exceed 1 before it is treated as corrupt.
/// Stored vectors are unit-norm to within 1e-6, so `v · x <= 1 + 2e-6`.
pub const SIMILARITY_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("model has no units")]
    EmptyModel,
    #[error("no samples to evaluate")]
    EmptyDataset,
    #[error(transparent)]
    Perception(#[from] PerceptionError),
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("model is at capacity ({0} units)")]
    Full(usize),
    #[error("unit vector has length {0}, expected 784")]
    BadLength(usize),
    #[error("unit label {0} outside 0..=9")]
    BadLabel(u8),
    #[error("unit vector is not unit-norm (norm {0})")]
    NotUnitNorm(f64),
}

/// One labeled prototype. `id` is its insertion index in the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    id: usize,
    label: u8,
    v: Vec<f64>,
}

impl Unit {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn label(&self) -> u8 {
        self.label
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }
}

/// Ordered set of units with a capacity and series configuration.
///
/// Unit weights are kept on the `f32` grid; all arithmetic on them is `f64`.
/// Alongside the row-per-unit storage the model keeps a panel layout
/// (`LANES` units interleaved per pixel) used by the similarity kernel.
#[derive(Debug, Clone)]
pub struct Model {
    units: Vec<Unit>,
    n_max: usize,
    series: SeriesConfig,
    panels: Vec<f32>,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.units == other.units && self.n_max == other.n_max && self.series == other.series
    }
}

impl Model {
    pub fn new(n_max: usize, series: SeriesConfig) -> Self {
        Model {
            units: Vec::new(),
            n_max,
            series,
            panels: Vec::new(),
        }
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn unit(&self, id: usize) -> &Unit {
        &self.units[id]
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn is_full(&self) -> bool {
        self.units.len() >= self.n_max
    }

    pub fn series(&self) -> SeriesConfig {
        self.series
    }

    pub fn set_series(&mut self, series: SeriesConfig) {
        self.series = series;
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for u in &self.units {
            counts[u.label as usize] += 1;
        }
        counts
    }

    /// Appends a unit, rounding its weights to single precision. Returns its id.
    pub fn push(&mut self, label: u8, v: &[f64]) -> Result<usize, ModelError> {
        if self.is_full() {
            return Err(ModelError::Full(self.n_max));
        }
        if label as usize >= NUM_CLASSES {
            return Err(ModelError::BadLabel(label));
        }
        let v = checked_vector(v)?;
        let id = self.units.len();
        if id.is_multiple_of(LANES) {
            self.panels.resize(self.panels.len() + LANES * PIXELS, 0.0);
        }
        self.units.push(Unit { id, label, v });
        self.write_panel(id);
        Ok(id)
    }

    /// Overwrites the weights of unit `id`, rounding to single precision.
    pub fn replace(&mut self, id: usize, v: &[f64]) -> Result<(), ModelError> {
        self.units[id].v = checked_vector(v)?;
        self.write_panel(id);
        Ok(())
    }

    fn write_panel(&mut self, id: usize) {
        let base = (id / LANES) * LANES * PIXELS;
        let lane = id % LANES;
        let panel = &mut self.panels[base..base + LANES * PIXELS];
        for (j, &w) in self.units[id].v.iter().enumerate() {
            panel[j * LANES + lane] = w as f32;
        }
    }

    /// For every unit, the best similarity over `queries` and the index of the
    /// query achieving it (first one on ties). Each dot product is accumulated
    /// left to right exactly like [`vector::dot`].
    pub fn similarities(&self, queries: &[Vec<f64>]) -> Vec<(f64, usize)> {
        self.similarities_grouped(&[queries]).pop().expect("one group in, one out")
    }

    /// [`Model::similarities`] for several independent query groups at once
    /// (e.g. the transformed copies of several inputs). Sharing each pass over
    /// the model between groups is much cheaper than separate calls; results
    /// are identical.
    pub fn similarities_grouped(&self, groups: &[&[Vec<f64>]]) -> Vec<Vec<(f64, usize)>> {
        let n = self.units.len();
        let mut best = vec![vec![(f64::NEG_INFINITY, 0usize); n]; groups.len()];
        // (group, index within group, query)
        let flat: Vec<(usize, usize, &[f64])> = groups
            .iter()
            .enumerate()
            .flat_map(|(g, qs)| qs.iter().enumerate().map(move |(t, q)| (g, t, &q[..PIXELS])))
            .collect();
        let mut out = [[0.0; LANES]; QUERY_BLOCK];
        let mut block: [&[f64]; QUERY_BLOCK] = [&[]; QUERY_BLOCK];
        for (p, panel) in self.panels.chunks_exact(LANES * PIXELS).enumerate() {
            let start = p * LANES;
            let width = LANES.min(n - start);
            // the panel stays cache-resident while every query passes over it
            for chunk in flat.chunks(QUERY_BLOCK) {
                for (slot, &(_, _, q)) in block.iter_mut().zip(chunk) {
                    *slot = q;
                }
                panel_dots(panel, &block[..chunk.len()], &mut out);
                for (&(g, t, _), lanes) in chunk.iter().zip(&out) {
                    for (slot, &d) in best[g][start..start + width].iter_mut().zip(lanes) {
                        if d > slot.0 {
                            *slot = (d, t);
                        }
                    }
                }
            }
        }
        best
    }
}

fn checked_vector(v: &[f64]) -> Result<Vec<f64>, ModelError> {
    if v.len() != PIXELS {
        return Err(ModelError::BadLength(v.len()));
    }
    let mut v = v.to_vec();
    vector::snap_to_f32(&mut v);
    let n = vector::norm(&v);
    // negated so that a NaN norm is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !((n - 1.0).abs() <= 1e-6) {
        return Err(ModelError::NotUnitNorm(n));
    }
    Ok(v)
}

/// Queries handled per pass over a panel. Each converted panel row is reused
/// for every query in the block, which keeps the kernel from being bound by
/// the `f32 -> f64` conversions; two blocks' worth of accumulators still fit
/// in the sixteen vector registers of AVX2.
const QUERY_BLOCK: usize = 2;

/// Dot products of the 16 units in `panel` with each query in `block`, into
/// `out[i]`. Each lane accumulates sequentially in pixel order with fused
/// multiply-adds, exactly like [`vector::dot`].
#[inline(always)]
fn panel_block<const Q: usize>(panel: &[f32], block: [&[f64]; Q], out: &mut [[f64; LANES]; QUERY_BLOCK]) {
    let mut acc = [[0.0f64; LANES]; Q];
    for (j, row) in panel.chunks_exact(LANES).enumerate() {
        let mut wide = [0.0f64; LANES];
        for l in 0..LANES {
            wide[l] = row[l] as f64;
        }
        for q in 0..Q {
            let x = block[q][j];
            for l in 0..LANES {
                acc[q][l] = wide[l].mul_add(x, acc[q][l]);
            }
        }
    }
    out[..Q].copy_from_slice(&acc);
}

#[inline(always)]
fn panel_dots_generic(panel: &[f32], block: &[&[f64]], out: &mut [[f64; LANES]; QUERY_BLOCK]) {
    match *block {
        [a] => panel_block(panel, [a], out),
        [a, b] => panel_block(panel, [a, b], out),
        _ => unreachable!("blocks hold 1..={QUERY_BLOCK} queries"),
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn panel_dots_avx2(panel: &[f32], block: &[&[f64]], out: &mut [[f64; LANES]; QUERY_BLOCK]) {
    panel_dots_generic(panel, block, out)
}

fn panel_dots(panel: &[f32], block: &[&[f64]], out: &mut [[f64; LANES]; QUERY_BLOCK]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: both features were detected at runtime.
            return unsafe { panel_dots_avx2(panel, block, out) };
        }
    }
    panel_dots_generic(panel, block, out)
}

/// A unit's position in its class ranking for one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedUnit {
    pub unit: usize,
    /// Similarity clamped into `[0, 1]`.
    pub p: f64,
    /// Bank index of the transform achieving `p`.
    pub transform: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub predicted: u8,
    pub per_class_scores: [f64; NUM_CLASSES],
    /// Units of each class in ascending id order.
    members: Vec<Vec<RankedUnit>>,
}

impl Classification {
    /// Units of `class` in descending similarity (ties by ascending id), so
    /// position `k - 1` holds the unit of rank `k`.
    pub fn ranked(&self, class: usize) -> Vec<RankedUnit> {
        let mut ranked = self.members[class].clone();
        ranked.sort_unstable_by(|a, b| b.p.total_cmp(&a.p).then(a.unit.cmp(&b.unit)));
        ranked
    }

    pub fn sorted_p(&self, class: usize) -> Vec<f64> {
        self.ranked(class).iter().map(|r| r.p).collect()
    }
}

/// Classifies `x` under every transform in `bank`.
pub fn classify(model: &Model, x: &[f64], bank: &TransformBank) -> Result<Classification, ClassifyError> {
    classify_images(model, &bank.images(x))
}

/// Classifies from precomputed transformed copies of the input (bank order).
pub fn classify_images(model: &Model, images: &[Vec<f64>]) -> Result<Classification, ClassifyError> {
    Ok(classify_batch(model, &[images])?.pop().expect("one input, one result"))
}

/// Classifies several inputs at once, each given as its transformed copies
/// (bank order). Equivalent to calling [`classify_images`] on each, but makes
/// a single pass over the model.
pub fn classify_batch(model: &Model, inputs: &[&[Vec<f64>]]) -> Result<Vec<Classification>, ClassifyError> {
    if model.is_empty() {
        return Err(ClassifyError::EmptyModel);
    }
    model
        .similarities_grouped(inputs)
        .iter()
        .map(|sims| rank_and_score(model, sims))
        .collect()
}

/// Similarities sorted before trying to score a class from its top values
/// alone; enough for the series to converge in all but rare cases.
const SCORE_PREFIX: usize = 128;

fn rank_and_score(model: &Model, sims: &[(f64, usize)]) -> Result<Classification, ClassifyError> {
    let mut members: Vec<Vec<RankedUnit>> = vec![Vec::new(); NUM_CLASSES];
    for (unit, &(raw, transform)) in model.units.iter().zip(sims) {
        // models trained with negative weights may produce p < 0; those count as 0
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(raw <= 1.0 + SIMILARITY_TOLERANCE) {
            return Err(PerceptionError::DomainError(raw).into());
        }
        let p = raw.clamp(0.0, 1.0);
        members[unit.label as usize].push(RankedUnit {
            unit: unit.id,
            p,
            transform,
        });
    }
    let mut per_class_scores = [0.0; NUM_CLASSES];
    let mut ps = Vec::new();
    for (class, units) in members.iter().enumerate() {
        ps.clear();
        ps.extend(units.iter().map(|r| r.p));
        per_class_scores[class] = score_unsorted(&mut ps, &model.series)?;
    }
    Ok(Classification {
        predicted: argmax(&per_class_scores) as u8,
        per_class_scores,
        members,
    })
}

/// The series score of `ps` in any order (reorders `ps`). Sorting only the
/// largest values usually suffices; the result always equals sorting all.
fn score_unsorted(ps: &mut [f64], series: &SeriesConfig) -> Result<f64, PerceptionError> {
    let desc = |a: &f64, b: &f64| b.total_cmp(a);
    if ps.len() > SCORE_PREFIX {
        ps.select_nth_unstable_by(SCORE_PREFIX - 1, desc);
        ps[..SCORE_PREFIX].sort_unstable_by(desc);
        if let Some(score) = perception::score_prefix(&ps[..SCORE_PREFIX], ps.len(), series)? {
            return Ok(score);
        }
    }
    ps.sort_unstable_by(desc);
    perception::score_sorted(ps, series)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Counts of (true label, predicted label).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u8, u8)>) -> Self {
        let mut counts = [[0; NUM_CLASSES]; NUM_CLASSES];
        for (truth, pred) in pairs {
            counts[truth as usize][pred as usize] += 1;
        }
        ConfusionMatrix { counts }
    }

    pub fn counts(&self) -> &[[u64; NUM_CLASSES]; NUM_CLASSES] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn errors(&self) -> u64 {
        self.total() - (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum::<u64>()
    }

    /// Misclassified samples per true class.
    pub fn per_class_errors(&self) -> [u64; NUM_CLASSES] {
        let mut out = [0; NUM_CLASSES];
        for (i, row) in self.counts.iter().enumerate() {
            out[i] = row.iter().sum::<u64>() - row[i];
        }
        out
    }

    pub fn error_rate(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.errors() as f64 / t as f64,
        }
    }
}

/// Inputs classified together by [`predict_all`].
const PREDICT_BATCH: usize = 8;

/// Predicted label for every sample, in sample order. Runs on the current
/// rayon pool; results do not depend on the thread count.
pub fn predict_all(model: &Model, samples: &[Sample], bank: &TransformBank) -> Result<Vec<u8>, ClassifyError> {
    if model.is_empty() {
        return Err(ClassifyError::EmptyModel);
    }
    let batches: Vec<Vec<u8>> = samples
        .par_chunks(PREDICT_BATCH)
        .map(|chunk| {
            let images: Vec<Vec<Vec<f64>>> = chunk.iter().map(|s| bank.images(s.x())).collect();
            let refs: Vec<&[Vec<f64>]> = images.iter().map(Vec::as_slice).collect();
            Ok(classify_batch(model, &refs)?.iter().map(|c| c.predicted).collect())
        })
        .collect::<Result<_, ClassifyError>>()?;
    Ok(batches.concat())
}

pub fn confusion(model: &Model, samples: &[Sample], bank: &TransformBank) -> Result<ConfusionMatrix, ClassifyError> {
    if samples.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    let preds = predict_all(model, samples, bank)?;
    Ok(ConfusionMatrix::from_pairs(
        samples.iter().map(|s| s.label()).zip(preds),
    ))
}

/// Fraction of `samples` misclassified.
pub fn evaluate(model: &Model, samples: &[Sample], bank: &TransformBank) -> Result<f64, ClassifyError> {
    if model.is_empty() {
        return Err(ClassifyError::EmptyModel);
    }
    Ok(confusion(model, samples, bank)?.error_rate())
}
