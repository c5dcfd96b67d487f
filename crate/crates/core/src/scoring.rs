//! CMA, MCM and no-softmax scores.
//!
//! All three scores come out of one pass over an image's similarity row.
//! The predicted index `y_hat` is the argmax over ID concepts only (lowest
//! index on ties). The CMA softmax denominator runs over every concept,
//! agents included; MCM uses ID concepts only; the raw score ignores the
//! softmax entirely.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::ConceptBank;
use crate::error::{Error, Result};
use crate::tensor::{sim_rows, unit_cosine, Embedding, EmbeddingMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub tau: f64,
}

impl ScoreConfig {
    pub fn new(tau: f64) -> Result<Self> {
        if tau.is_finite() && tau > 0.0 {
            Ok(ScoreConfig { tau })
        } else {
            Err(Error::BadTau(tau))
        }
    }
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig { tau: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Cma,
    Mcm,
    Raw,
}

impl ScoreKind {
    pub fn column(self) -> &'static str {
        match self {
            ScoreKind::Cma => "s_cma",
            ScoreKind::Mcm => "s_mcm",
            ScoreKind::Raw => "s_raw",
        }
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cma" | "s_cma" => Ok(ScoreKind::Cma),
            "mcm" | "s_mcm" => Ok(ScoreKind::Mcm),
            "raw" | "s_raw" => Ok(ScoreKind::Raw),
            other => Err(Error::BadParams(format!("unknown score kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub image_index: usize,
    pub y_hat: usize,
    pub s_cma: f64,
    pub s_mcm: f64,
    pub s_raw: f64,
}

impl ScoreRecord {
    pub fn score(&self, kind: ScoreKind) -> f64 {
        match kind {
            ScoreKind::Cma => self.s_cma,
            ScoreKind::Mcm => self.s_mcm,
            ScoreKind::Raw => self.s_raw,
        }
    }
}

/// Scores for one similarity row laid out as `[ID..., agents...]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowScores {
    pub y_hat: usize,
    pub s_cma: f64,
    pub s_mcm: f64,
    pub s_raw: f64,
}

/// Score a single similarity row. `n_id >= 1` and `sims.len() >= n_id`.
pub fn score_row(sims: &[f32], n_id: usize, tau: f64) -> RowScores {
    debug_assert!(n_id >= 1 && sims.len() >= n_id);
    let mut y_hat = 0;
    for (i, &s) in sims[..n_id].iter().enumerate() {
        if s > sims[y_hat] {
            y_hat = i;
        }
    }
    let logit = |s: f32| f64::from(s) / tau;
    let top = logit(sims[y_hat]);

    // max-shifted exponentials: the largest term in each sum is exp(0)
    let shift_all = sims.iter().map(|&s| logit(s)).fold(top, f64::max);
    let mut id_sum_mcm = 0.0;
    let mut sum_cma = 0.0;
    for &s in &sims[..n_id] {
        id_sum_mcm += (logit(s) - top).exp();
        sum_cma += (logit(s) - shift_all).exp();
    }
    for &s in &sims[n_id..] {
        sum_cma += (logit(s) - shift_all).exp();
    }
    RowScores {
        y_hat,
        s_cma: (top - shift_all).exp() / sum_cma,
        s_mcm: 1.0 / id_sum_mcm,
        s_raw: top,
    }
}

fn bank_row(v: &Embedding, bank: &ConceptBank) -> Result<Vec<f32>> {
    if v.dim() != bank.dim() {
        return Err(Error::DimMismatch {
            expected: bank.dim(),
            found: v.dim(),
        });
    }
    if bank.n_id() == 0 {
        return Err(Error::EmptyBank);
    }
    Ok(bank
        .concepts()
        .iter_rows()
        .map(|c| unit_cosine(v.as_slice(), c))
        .collect())
}

fn score_single(v: &Embedding, bank: &ConceptBank, cfg: &ScoreConfig) -> Result<RowScores> {
    let sims = bank_row(v, bank)?;
    Ok(score_row(&sims, bank.n_id(), cfg.tau))
}

/// `(y_hat, s_cma)`: softmax over all `N + M` concepts, numerator at the
/// best ID concept.
pub fn cma_score(v: &Embedding, bank: &ConceptBank, cfg: &ScoreConfig) -> Result<(usize, f64)> {
    score_single(v, bank, cfg).map(|r| (r.y_hat, r.s_cma))
}

/// `(y_hat, s_mcm)`: softmax over ID concepts only.
pub fn mcm_score(v: &Embedding, bank: &ConceptBank, cfg: &ScoreConfig) -> Result<(usize, f64)> {
    score_single(v, bank, cfg).map(|r| (r.y_hat, r.s_mcm))
}

/// `(y_hat, max_i sim(v, c_i) / tau)` over ID concepts, without softmax.
pub fn raw_max_score(v: &Embedding, bank: &ConceptBank, cfg: &ScoreConfig) -> Result<(usize, f64)> {
    score_single(v, bank, cfg).map(|r| (r.y_hat, r.s_raw))
}

/// One record per image in input order.
pub fn score_batch(
    images: &EmbeddingMatrix,
    bank: &ConceptBank,
    cfg: &ScoreConfig,
) -> Result<Vec<ScoreRecord>> {
    score_rows(images.data(), images.dim(), bank, cfg)
}

pub(crate) fn score_rows(
    images: &[f32],
    dim: usize,
    bank: &ConceptBank,
    cfg: &ScoreConfig,
) -> Result<Vec<ScoreRecord>> {
    let sims = sim_rows(images, dim, bank.concepts())?;
    let n_id = bank.n_id();
    Ok((0..sims.rows)
        .into_par_iter()
        .map(|i| {
            let r = score_row(sims.row(i), n_id, cfg.tau);
            ScoreRecord {
                image_index: i,
                y_hat: r.y_hat,
                s_cma: r.s_cma,
                s_mcm: r.s_mcm,
                s_raw: r.s_raw,
            }
        })
        .collect())
}

/// Check the record-level invariants: `y_hat` indexes an ID row, scores are
/// in range and `s_cma <= s_mcm` (strict when agents are present).
pub fn check_records(records: &[ScoreRecord], n_id: usize, n_agents: usize) -> Result<()> {
    for r in records {
        let ok = r.y_hat < n_id
            && r.s_cma > 0.0
            && r.s_mcm <= 1.0
            && if n_agents == 0 {
                r.s_cma == r.s_mcm
            } else {
                r.s_cma < r.s_mcm
            };
        if !ok {
            return Err(Error::Invariant(format!(
                "score record {} out of bounds: {r:?}",
                r.image_index
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::f32::consts::FRAC_1_SQRT_2;

    use super::*;

    fn fixture_bank(with_agent: bool) -> ConceptBank {
        let id = EmbeddingMatrix::from_rows(&[[1.0f32, 0.0], [0.0, 1.0]]).unwrap();
        let agent = EmbeddingMatrix::from_rows(&[[FRAC_1_SQRT_2, FRAC_1_SQRT_2]]).unwrap();
        if with_agent {
            ConceptBank::new(
                vec!["a".into(), "b".into()],
                &id,
                vec!["agent".into()],
                Some(&agent),
            )
            .unwrap()
        } else {
            ConceptBank::id_only(vec!["a".into(), "b".into()], &id).unwrap()
        }
    }

    fn x() -> Embedding {
        Embedding::new(vec![1.0, 0.0]).unwrap()
    }

    // extended-precision values: e/(e+1+e^(1/sqrt2)) and e/(e+1)
    const CMA_FIXTURE: f64 = 0.473_041_093_103_463_9;
    const MCM_FIXTURE: f64 = 0.731_058_578_630_004_9;

    #[test]
    fn cma_fixture() {
        let (y, s) = cma_score(&x(), &fixture_bank(true), &ScoreConfig::default()).unwrap();
        assert_eq!(y, 0);
        assert!((s - CMA_FIXTURE).abs() < 1e-6, "{s}");
    }

    #[test]
    fn cma_without_agents_is_mcm() {
        let cfg = ScoreConfig::default();
        let (_, cma) = cma_score(&x(), &fixture_bank(false), &cfg).unwrap();
        let (_, mcm) = mcm_score(&x(), &fixture_bank(false), &cfg).unwrap();
        assert_eq!(cma.to_bits(), mcm.to_bits());
        assert!((cma - MCM_FIXTURE).abs() < 1e-7);
    }

    #[test]
    fn single_concept_scores_one() {
        let id = EmbeddingMatrix::from_rows(&[[0.3f32, -0.2]]).unwrap();
        let bank = ConceptBank::id_only(vec!["only".into()], &id).unwrap();
        let v = Embedding::new(vec![0.0, 1.0]).unwrap();
        let cfg = ScoreConfig::default();
        assert_eq!(cma_score(&v, &bank, &cfg).unwrap(), (0, 1.0));
        assert_eq!(mcm_score(&v, &bank, &cfg).unwrap(), (0, 1.0));
    }

    #[test]
    fn mcm_ignores_agents() {
        let cfg = ScoreConfig::default();
        let (y, s) = mcm_score(&x(), &fixture_bank(true), &cfg).unwrap();
        assert_eq!(y, 0);
        assert!((s - MCM_FIXTURE).abs() < 1e-7);
    }

    #[test]
    fn mcm_equal_similarities() {
        // every concept is orthogonal to v
        let id = EmbeddingMatrix::from_rows(&[[1.0f32, 0.0], [-1.0, 0.0], [2.0, 0.0]]).unwrap();
        let flat = ConceptBank::id_only(vec!["p".into(), "q".into(), "r".into()], &id).unwrap();
        let v = Embedding::new(vec![0.0, 1.0]).unwrap();
        let (y, s) = mcm_score(&v, &flat, &ScoreConfig::default()).unwrap();
        assert_eq!(y, 0);
        assert_eq!(s, 1.0 / 3.0);
    }

    #[test]
    fn raw_examples() {
        let bank = fixture_bank(true);
        let (y, s) = raw_max_score(&x(), &bank, &ScoreConfig::default()).unwrap();
        assert_eq!((y, s), (0, 1.0));
        let (_, s2) = raw_max_score(&x(), &bank, &ScoreConfig::new(2.0).unwrap()).unwrap();
        assert_eq!(s2, 0.5);
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        let r = score_row(&[0.5, 0.5, 0.9], 2, 1.0);
        assert_eq!(r.y_hat, 0);
        let r = score_row(&[0.1, 0.7, 0.7], 3, 1.0);
        assert_eq!(r.y_hat, 1);
    }

    #[test]
    fn errors() {
        let bank = fixture_bank(true);
        let v3 = Embedding::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            cma_score(&v3, &bank, &ScoreConfig::default()),
            Err(Error::DimMismatch { .. })
        ));
        assert!(matches!(ScoreConfig::new(0.0), Err(Error::BadTau(_))));
        assert!(matches!(ScoreConfig::new(f64::NAN), Err(Error::BadTau(_))));
        assert!(matches!(
            score_rows(&[], 2, &bank, &ScoreConfig::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn small_tau_is_finite() {
        let r = score_row(&[1.0, -1.0, 0.99, -0.5], 2, 1e-3);
        assert!(r.s_cma.is_finite() && r.s_cma > 0.0);
        assert!(r.s_mcm.is_finite() && r.s_mcm <= 1.0);
    }

    #[test]
    fn batch_matches_single() {
        let bank = fixture_bank(true);
        let images = EmbeddingMatrix::from_rows(&[[1.0f32, 0.0], [0.6, 0.8]]).unwrap();
        let cfg = ScoreConfig::default();
        let recs = score_batch(&images, &bank, &cfg).unwrap();
        assert_eq!(recs.len(), 2);
        for (i, rec) in recs.iter().enumerate() {
            assert_eq!(rec.image_index, i);
            let single = cma_score(&images.embedding(i), &bank, &cfg).unwrap();
            assert_eq!((rec.y_hat, rec.s_cma), single);
        }
        check_records(&recs, 2, 1).unwrap();
    }

    #[test]
    fn check_records_flags_violations() {
        let bad = ScoreRecord {
            image_index: 0,
            y_hat: 0,
            s_cma: 0.9,
            s_mcm: 0.5,
            s_raw: 1.0,
        };
        assert!(matches!(
            check_records(&[bad], 2, 1),
            Err(Error::Invariant(_))
        ));
    }
}
