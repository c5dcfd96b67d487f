//! Threshold calibration, the ID/OOD decision rule and the FPR@TPR, AUROC
//! and ID-accuracy metrics.
//!
//! FPR@TPR uses the sample-threshold estimator: the threshold is the largest
//! ID score that keeps at least `target_tpr` of ID scores at or above it, and
//! no interpolation happens between sample points.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::ScoreRecord;

pub const DEFAULT_TPR: f64 = 0.95;

/// Above this many pairs [`auroc`] switches from the exact pairwise count to
/// the rank-based statistic.
pub const PAIRWISE_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub fpr_at_tpr: f64,
    pub auroc: f64,
    pub threshold_lambda: f64,
    pub target_tpr: f64,
    pub n_id: usize,
    pub n_ood: usize,
}

/// Output of the detection function: `1` for ID, `0` for OOD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Decision {
    Ood = 0,
    Id = 1,
}

pub fn detect(score: f64, lambda: f64) -> Decision {
    if score >= lambda {
        Decision::Id
    } else {
        Decision::Ood
    }
}

fn check_scores(scores: &[f64], what: &'static str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::EmptyInput(what));
    }
    match scores.iter().position(|x| x.is_nan()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Smallest `m` with `m / n >= target_tpr`.
fn required_count(n: usize, target_tpr: f64) -> usize {
    let nf = n as f64;
    let mut m = ((target_tpr * nf).ceil() as usize).clamp(1, n);
    while m > 1 && (m - 1) as f64 / nf >= target_tpr {
        m -= 1;
    }
    while m < n && (m as f64 / nf) < target_tpr {
        m += 1;
    }
    m
}

/// The `m`-th largest ID score with `m = ceil(target_tpr * n)`.
pub fn calibrate_threshold(id_scores: &[f64], target_tpr: f64) -> Result<f64> {
    check_scores(id_scores, "no ID scores")?;
    if !(target_tpr > 0.0 && target_tpr <= 1.0) {
        return Err(Error::BadTpr(target_tpr));
    }
    let m = required_count(id_scores.len(), target_tpr);
    let mut sorted = id_scores.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    Ok(sorted[m - 1])
}

/// Fraction of OOD scores accepted as ID at the calibrated threshold.
pub fn fpr_at_tpr(id_scores: &[f64], ood_scores: &[f64], target_tpr: f64) -> Result<f64> {
    check_scores(ood_scores, "no OOD scores")?;
    let lambda = calibrate_threshold(id_scores, target_tpr)?;
    Ok(fpr_at_threshold(ood_scores, lambda))
}

fn fpr_at_threshold(ood_scores: &[f64], lambda: f64) -> f64 {
    let accepted = ood_scores
        .iter()
        .filter(|&&s| detect(s, lambda) == Decision::Id)
        .count();
    accepted as f64 / ood_scores.len() as f64
}

/// Probability that a random ID score beats a random OOD score, ties
/// counting one half.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_scores(id_scores, "no ID scores")?;
    check_scores(ood_scores, "no OOD scores")?;
    if id_scores.len().saturating_mul(ood_scores.len()) <= PAIRWISE_LIMIT {
        Ok(auroc_pairwise(id_scores, ood_scores))
    } else {
        Ok(auroc_ranked(id_scores, ood_scores))
    }
}

/// Exact all-pairs count. Returns `2U / (2 n m)` from integer counts so it
/// agrees bit for bit with [`auroc_ranked`].
pub fn auroc_pairwise(id_scores: &[f64], ood_scores: &[f64]) -> f64 {
    let doubled: u64 = id_scores
        .par_iter()
        .map(|&a| {
            ood_scores
                .iter()
                .map(|&b| match a.partial_cmp(&b) {
                    Some(Ordering::Greater) => 2u64,
                    Some(Ordering::Equal) => 1,
                    _ => 0,
                })
                .sum::<u64>()
        })
        .sum();
    doubled as f64 / (2 * id_scores.len() * ood_scores.len()) as f64
}

/// Mann-Whitney U from mid-ranks of the pooled sample, kept in doubled
/// integer form so tied groups stay exact.
pub fn auroc_ranked(id_scores: &[f64], ood_scores: &[f64]) -> f64 {
    let n = id_scores.len();
    let m = ood_scores.len();
    let mut pooled: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, true))
        .chain(ood_scores.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    // doubled rank sum of the ID sample; a tie group spanning 1-based ranks
    // [lo, hi] gives each member rank (lo + hi) / 2
    let mut rank_sum2: u128 = 0;
    let mut start = 0;
    while start < pooled.len() {
        let mut end = start + 1;
        while end < pooled.len() && pooled[end].0 == pooled[start].0 {
            end += 1;
        }
        let ids = pooled[start..end].iter().filter(|p| p.1).count() as u128;
        rank_sum2 += ids * (start as u128 + 1 + end as u128);
        start = end;
    }
    let n128 = n as u128;
    let u2 = rank_sum2 - n128 * (n128 + 1);
    u2 as f64 / (2 * n * m) as f64
}

/// Fraction of records whose `y_hat` matches the ground-truth ID index.
pub fn id_accuracy(records: &[ScoreRecord], ground_truth: &[usize]) -> Result<f64> {
    if records.len() != ground_truth.len() {
        return Err(Error::LengthMismatch {
            left: records.len(),
            right: ground_truth.len(),
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyInput("no records"));
    }
    let hits = records
        .iter()
        .zip(ground_truth)
        .filter(|(r, &t)| r.y_hat == t)
        .count();
    Ok(hits as f64 / records.len() as f64)
}

/// Calibrate on ID scores and report FPR, AUROC and the threshold together.
pub fn evaluate(id_scores: &[f64], ood_scores: &[f64], target_tpr: f64) -> Result<EvalResult> {
    let lambda = calibrate_threshold(id_scores, target_tpr)?;
    check_scores(ood_scores, "no OOD scores")?;
    Ok(EvalResult {
        fpr_at_tpr: fpr_at_threshold(ood_scores, lambda),
        auroc: auroc(id_scores, ood_scores)?,
        threshold_lambda: lambda,
        target_tpr,
        n_id: id_scores.len(),
        n_ood: ood_scores.len(),
    })
}
