//! Per-class perception score: a truncated Mercator series over the class's
//! similarities sorted in descending order,
//!
//! ```text
//! C_i(x) = sum_{k=1..K} (1/k) * p_(k)^k,    p_(1) >= p_(2) >= ... >= p_(K)
//! ```
//!
//! which for `K` copies of a constant `p` approaches `-ln(1 - p)`.

use std::num::NonZeroUsize;

use thiserror::Error;

/// Slack allowed outside `[0, 1]` before a similarity is rejected.
pub const DOMAIN_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum PerceptionError {
    #[error("similarity {0} outside [0, 1]")]
    DomainError(f64),
    #[error("similarities are not sorted in descending order")]
    NotSorted,
}

/// How many leading terms of the series are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SeriesConfig {
    max_terms: Option<NonZeroUsize>,
}

impl SeriesConfig {
    pub fn all() -> Self {
        SeriesConfig { max_terms: None }
    }

    /// `0` is read as "all terms".
    pub fn truncated(max_terms: usize) -> Self {
        SeriesConfig {
            max_terms: NonZeroUsize::new(max_terms),
        }
    }

    pub fn max_terms(&self) -> Option<usize> {
        self.max_terms.map(NonZeroUsize::get)
    }

    /// Encoding used by the model file: `0` for "all".
    pub fn as_u32(&self) -> u32 {
        self.max_terms().map_or(0, |m| m.min(u32::MAX as usize) as u32)
    }

    fn limit(&self, k: usize) -> usize {
        self.max_terms().map_or(k, |m| m.min(k))
    }
}

/// Sorted similarities of one class's units to a single input.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassResponse {
    class_id: u8,
    sorted_p: Vec<f64>,
}

impl ClassResponse {
    pub fn new(class_id: u8, sorted_p: Vec<f64>) -> Result<Self, PerceptionError> {
        if sorted_p.windows(2).any(|w| w[0] < w[1]) {
            return Err(PerceptionError::NotSorted);
        }
        Ok(ClassResponse { class_id, sorted_p })
    }

    /// Sorts an arbitrary multiset of similarities.
    pub fn from_unsorted(class_id: u8, mut p: Vec<f64>) -> Self {
        p.sort_by(|a, b| b.total_cmp(a));
        ClassResponse {
            class_id,
            sorted_p: p,
        }
    }

    pub fn class_id(&self) -> u8 {
        self.class_id
    }

    pub fn sorted_p(&self) -> &[f64] {
        &self.sorted_p
    }

    pub fn unit_count(&self) -> usize {
        self.sorted_p.len()
    }
}

/// Checks one similarity against `[-eps, 1 + eps]` and clamps it into `[0, 1]`.
pub fn clamp_similarity(p: f64) -> Result<f64, PerceptionError> {
    if !(-DOMAIN_EPSILON..=1.0 + DOMAIN_EPSILON).contains(&p) {
        return Err(PerceptionError::DomainError(p));
    }
    Ok(p.clamp(0.0, 1.0))
}

pub fn score(response: &ClassResponse, cfg: &SeriesConfig) -> Result<f64, PerceptionError> {
    score_sorted(&response.sorted_p, cfg)
}

/// Scores a descending slice. The caller guarantees the order.
///
/// Accumulation is plain left to right over `k` in `f64`, with `p^k` from
/// [`f64::powi`]. Terms never grow along a sorted list, so once adding a term
/// leaves the sum unchanged every later addition would too, and the loop stops
/// there; the result is bit-identical to summing all terms.
pub fn score_sorted(sorted_p: &[f64], cfg: &SeriesConfig) -> Result<f64, PerceptionError> {
    let terms = cfg.limit(sorted_p.len());
    let (sum, stopped) = accumulate(&sorted_p[..terms])?;
    if let Some(k) = stopped {
        for &rest in &sorted_p[k..terms] {
            clamp_similarity(rest)?;
        }
    }
    Ok(sum)
}

/// Scores a list of `total` similarities from only its largest values.
///
/// `prefix` holds the top `prefix.len()` values of the list in descending
/// order. When the series stops changing within the prefix (or the prefix
/// already covers every counted term) the result is exactly what
/// [`score_sorted`] would return for the whole sorted list, and `Some` is
/// returned; otherwise `None`, and the caller must sort the full list. The
/// values outside the prefix are not inspected, so the caller vouches for
/// their domain.
pub fn score_prefix(prefix: &[f64], total: usize, cfg: &SeriesConfig) -> Result<Option<f64>, PerceptionError> {
    let terms = cfg.limit(total);
    if prefix.len() >= terms {
        return score_sorted(&prefix[..terms], cfg).map(Some);
    }
    let (sum, stopped) = accumulate(prefix)?;
    Ok(stopped.map(|_| sum))
}

/// Left-to-right sum of `p_k^k / k`. Also returns the count of terms added
/// if the sum stopped changing before the end of the slice.
fn accumulate(sorted_p: &[f64]) -> Result<(f64, Option<usize>), PerceptionError> {
    let mut sum = 0.0;
    for (i, &raw) in sorted_p.iter().enumerate() {
        let p = clamp_similarity(raw)?;
        let k = i + 1;
        let next = sum + p.powi(k as i32) / k as f64;
        if next == sum {
            return Ok((sum, Some(k)));
        }
        sum = next;
    }
    Ok((sum, None))
}

/// Partial sum of `sum_k p^k / k`, the series for `-ln(1 - p)`. With `terms`
/// of `None` the sum runs until the next term no longer changes it.
pub fn log_series_reference(p: f64, terms: Option<usize>) -> Result<f64, PerceptionError> {
    if !(0.0..1.0).contains(&p) {
        return Err(PerceptionError::DomainError(p));
    }
    let mut sum = 0.0;
    let mut pk = 1.0;
    let mut k = 1usize;
    loop {
        if let Some(t) = terms {
            if k > t {
                break;
            }
        }
        pk *= p;
        let next = sum + pk / k as f64;
        if terms.is_none() && next == sum {
            break;
        }
        sum = next;
        k += 1;
    }
    Ok(sum)
}

/// `H_k = 1 + 1/2 + ... + 1/k`, the largest score `k` units can produce.
pub fn harmonic(k: usize) -> f64 {
    (1..=k).map(|i| 1.0 / i as f64).sum()
}
