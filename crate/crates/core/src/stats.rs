//! Prompt-length regression with a slope t-statistic, and the score-delta
//! analysis for neutral prompts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::ConceptBank;
use crate::error::{Error, Result};
use crate::scoring::{cma_score, score_rows, ScoreConfig};
use crate::tensor::{Embedding, EmbeddingMatrix};

/// Token count of a prompt: the number of whitespace-separated words.
pub fn token_count(prompt: &str) -> u32 {
    prompt.split_whitespace().count() as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub beta0: f64,
    pub beta1: f64,
    pub se_beta1: f64,
    /// `beta1 / se_beta1`; infinite (sign of the slope) for a perfect fit.
    pub t_stat: f64,
    pub perfect_fit: bool,
    pub n: usize,
    pub df: usize,
    pub length_range: [u32; 2],
}

impl RegressionResult {
    /// Two-sided test of `beta1 = 0` against a caller-supplied critical value.
    pub fn rejects_null(&self, t_crit: f64) -> bool {
        self.t_stat.abs() > t_crit
    }
}

/// Ordinary least squares of score on token length over samples with
/// `L` in `range` (inclusive).
pub fn length_regression(samples: &[(u32, f64)], range: [u32; 2]) -> Result<RegressionResult> {
    let [lo, hi] = range;
    let kept: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(l, _)| (lo..=hi).contains(l))
        .map(|&(l, s)| (f64::from(l), s))
        .collect();
    let n = kept.len();
    if n < 3 {
        return Err(Error::TooFewSamples(n));
    }
    let nf = n as f64;
    let mean_l = kept.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_s = kept.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = kept.iter().map(|p| (p.0 - mean_l).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::ConstantRegressor);
    }
    let sxy: f64 = kept.iter().map(|p| (p.0 - mean_l) * (p.1 - mean_s)).sum();
    let beta1 = sxy / sxx;
    let beta0 = mean_s - beta1 * mean_l;
    let sse: f64 = kept
        .iter()
        .map(|p| (p.1 - beta0 - beta1 * p.0).powi(2))
        .sum();
    let se_beta1 = (sse / ((nf - 2.0) * sxx)).sqrt();
    let perfect_fit = se_beta1 == 0.0;
    let t_stat = if !perfect_fit {
        beta1 / se_beta1
    } else if beta1 == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(beta1)
    };
    Ok(RegressionResult {
        beta0,
        beta1,
        se_beta1,
        t_stat,
        perfect_fit,
        n,
        df: n - 2,
        length_range: range,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRegression {
    pub group: String,
    pub result: RegressionResult,
}

/// One regression per group (e.g. per placeholder word) plus a pooled fit
/// over every sample. Groups that cannot be fitted are skipped.
pub fn grouped_length_regression(
    samples: &[(String, u32, f64)],
    range: [u32; 2],
) -> Result<(Vec<GroupRegression>, RegressionResult)> {
    let mut groups: Vec<&str> = Vec::new();
    for (g, _, _) in samples {
        if !groups.contains(&g.as_str()) {
            groups.push(g);
        }
    }
    let per_group = groups
        .into_iter()
        .filter_map(|g| {
            let pts: Vec<(u32, f64)> = samples
                .iter()
                .filter(|s| s.0 == g)
                .map(|s| (s.1, s.2))
                .collect();
            length_regression(&pts, range)
                .ok()
                .map(|result| GroupRegression {
                    group: g.to_string(),
                    result,
                })
        })
        .collect();
    let pooled: Vec<(u32, f64)> = samples.iter().map(|s| (s.1, s.2)).collect();
    Ok((per_group, length_regression(&pooled, range)?))
}

/// Name of the pooled row in a [`LengthStudy`].
pub const POOLED_GROUP: &str = "pooled";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub group: String,
    pub result: RegressionResult,
    /// `|t| > t_crit`, present when a critical value was supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejects_null: Option<bool>,
}

/// Per-group fits (when samples carry group names) followed by the pooled
/// fit, optionally compared against a user-supplied critical value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStudy {
    pub length_range: [u32; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_crit: Option<f64>,
    pub rows: Vec<LengthRow>,
}

pub fn length_study(
    samples: &[(String, u32, f64)],
    range: [u32; 2],
    t_crit: Option<f64>,
) -> Result<LengthStudy> {
    if let Some(t) = t_crit {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::BadParams(format!(
                "critical value must be finite and > 0, got {t}"
            )));
        }
    }
    let (groups, pooled) = grouped_length_regression(samples, range)?;
    let grouped = samples.iter().any(|s| !s.0.is_empty());
    let row = |group: String, result: RegressionResult| LengthRow {
        rejects_null: t_crit.map(|t| result.rejects_null(t)),
        group,
        result,
    };
    let mut rows: Vec<LengthRow> = if grouped {
        groups.into_iter().map(|g| row(g.group, g.result)).collect()
    } else {
        Vec::new()
    };
    rows.push(row(POOLED_GROUP.to_string(), pooled));
    Ok(LengthStudy {
        length_range: range,
        t_crit,
        rows,
    })
}

fn check_delta_banks(base: &ConceptBank, with_agents: &ConceptBank) -> Result<()> {
    if base.n_agents() != 0 {
        return Err(Error::BadParams(format!(
            "base bank must hold no agents, found {}",
            base.n_agents()
        )));
    }
    if !base.same_id_part(with_agents) {
        return Err(Error::IdMismatch);
    }
    Ok(())
}

/// Change in CMA score when the agents of `with_agents` are added to the
/// agent-free `base` bank.
pub fn score_delta(
    v: &Embedding,
    base: &ConceptBank,
    with_agents: &ConceptBank,
    cfg: &ScoreConfig,
) -> Result<f64> {
    check_delta_banks(base, with_agents)?;
    let (_, without) = cma_score(v, base, cfg)?;
    let (_, with) = cma_score(v, with_agents, cfg)?;
    Ok(with - without)
}

/// [`score_delta`] for every row of `images`, in order.
pub fn score_deltas(
    images: &EmbeddingMatrix,
    base: &ConceptBank,
    with_agents: &ConceptBank,
    cfg: &ScoreConfig,
) -> Result<Vec<f64>> {
    check_delta_banks(base, with_agents)?;
    let before = score_rows(images.data(), images.dim(), base, cfg)?;
    let after = score_rows(images.data(), images.dim(), with_agents, cfg)?;
    Ok(before
        .par_iter()
        .zip(after.par_iter())
        .map(|(b, a)| a.s_cma - b.s_cma)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaParams {
    pub eps: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for DeltaParams {
    fn default() -> Self {
        DeltaParams {
            eps: 0.05,
            delta: 0.05,
            alpha: 0.05,
            beta: 0.05,
        }
    }
}

impl DeltaParams {
    fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !(self.eps > 0.0 && self.delta > 0.0 && unit(self.alpha) && unit(self.beta)) {
            return Err(Error::BadParams(format!(
                "need eps, delta > 0 and alpha, beta in (0, 1): {self:?}"
            )));
        }
        Ok(())
    }
}

/// Summary of one population of score deltas. Variance is the population
/// variance (divisor n).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub deltas: Vec<f64>,
    pub mean: f64,
    pub mean_abs: f64,
    pub variance: f64,
    pub frac_within_eps: f64,
    pub frac_below_neg_delta: f64,
    pub eps: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl DeltaReport {
    pub fn new(deltas: Vec<f64>, params: &DeltaParams) -> Result<Self> {
        if deltas.is_empty() {
            return Err(Error::EmptyInput("no score deltas"));
        }
        params.validate()?;
        let n = deltas.len() as f64;
        let mean = deltas.iter().sum::<f64>() / n;
        let mean_abs = deltas.iter().map(|d| d.abs()).sum::<f64>() / n;
        let variance = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        let frac =
            |pred: &dyn Fn(f64) -> bool| deltas.iter().filter(|&&d| pred(d)).count() as f64 / n;
        let frac_within_eps = frac(&|d| d.abs() <= params.eps);
        let frac_below_neg_delta = frac(&|d| d < -params.delta);
        Ok(DeltaReport {
            mean,
            mean_abs,
            variance,
            frac_within_eps,
            frac_below_neg_delta,
            eps: params.eps,
            delta: params.delta,
            alpha: params.alpha,
            beta: params.beta,
            deltas,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisOutcome {
    pub id: DeltaReport,
    pub ood: DeltaReport,
    /// `P(|dS| <= eps | ID) >= 1 - alpha`
    pub id_negligible_passes: bool,
    /// `P(dS < -delta | OOD) >= 1 - beta`
    pub ood_drop_passes: bool,
}

impl HypothesisOutcome {
    pub fn passes(&self) -> bool {
        self.id_negligible_passes && self.ood_drop_passes
    }
}

pub fn delta_hypothesis_check(
    id_deltas: Vec<f64>,
    ood_deltas: Vec<f64>,
    params: &DeltaParams,
) -> Result<HypothesisOutcome> {
    let id = DeltaReport::new(id_deltas, params)?;
    let ood = DeltaReport::new(ood_deltas, params)?;
    Ok(HypothesisOutcome {
        id_negligible_passes: id.frac_within_eps >= 1.0 - params.alpha,
        ood_drop_passes: ood.frac_below_neg_delta >= 1.0 - params.beta,
        id,
        ood,
    })
}
