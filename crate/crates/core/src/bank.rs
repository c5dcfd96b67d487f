//! The concatenated concept set: ID label embeddings first, neutral-prompt
//! agent embeddings appended after them.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::EmbeddingMatrix;

/// Ratio of agents to ID labels, `k = M / N`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentRatio(f64);

impl AgentRatio {
    pub fn new(k: f64) -> Result<Self> {
        if k.is_finite() && k >= 0.0 {
            Ok(AgentRatio(k))
        } else {
            Err(Error::BadRatio(k))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// Number of agents for `n_id` labels, rounding half up.
    pub fn agent_count(self, n_id: usize) -> usize {
        (self.0 * n_id as f64 + 0.5).floor() as usize
    }
}

/// ID concepts occupy rows `[0, N)` of [`ConceptBank::concepts`], agents
/// occupy `[N, N + M)`. All rows are unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptBank {
    id_labels: Vec<String>,
    agent_texts: Vec<String>,
    concepts: EmbeddingMatrix,
}

impl ConceptBank {
    /// Build a bank, normalizing every row on ingest. ID labels are used as
    /// bare category names; no prompt template is ever applied to them.
    pub fn new(
        id_labels: Vec<String>,
        id_embeddings: &EmbeddingMatrix,
        agent_texts: Vec<String>,
        agent_embeddings: Option<&EmbeddingMatrix>,
    ) -> Result<Self> {
        if id_labels.len() != id_embeddings.rows() {
            return Err(Error::LabelCount {
                labels: id_labels.len(),
                rows: id_embeddings.rows(),
            });
        }
        let mut seen = HashSet::with_capacity(id_labels.len());
        for label in &id_labels {
            if !seen.insert(label.as_str()) {
                return Err(Error::DuplicateLabel(label.clone()));
            }
        }
        let agent_rows = agent_embeddings.map_or(0, EmbeddingMatrix::rows);
        if agent_texts.len() != agent_rows {
            return Err(Error::LabelCount {
                labels: agent_texts.len(),
                rows: agent_rows,
            });
        }
        let mut concepts = id_embeddings.normalized()?;
        if let Some(agents) = agent_embeddings {
            if agents.dim() != id_embeddings.dim() {
                return Err(Error::DimMismatch {
                    expected: id_embeddings.dim(),
                    found: agents.dim(),
                });
            }
            concepts = concepts.stack(&agents.normalized()?)?;
        }
        Ok(ConceptBank {
            id_labels,
            agent_texts,
            concepts,
        })
    }

    /// Bank with ID labels only (`M = 0`).
    pub fn id_only(id_labels: Vec<String>, id_embeddings: &EmbeddingMatrix) -> Result<Self> {
        Self::new(id_labels, id_embeddings, Vec::new(), None)
    }

    pub fn n_id(&self) -> usize {
        self.id_labels.len()
    }

    pub fn n_agents(&self) -> usize {
        self.agent_texts.len()
    }

    pub fn dim(&self) -> usize {
        self.concepts.dim()
    }

    pub fn id_labels(&self) -> &[String] {
        &self.id_labels
    }

    pub fn agent_texts(&self) -> &[String] {
        &self.agent_texts
    }

    /// All `N + M` concept rows.
    pub fn concepts(&self) -> &EmbeddingMatrix {
        &self.concepts
    }

    pub fn id_embeddings(&self) -> EmbeddingMatrix {
        self.slice_rows(0, self.n_id())
            .expect("bank always holds at least one ID row")
    }

    pub fn agent_embeddings(&self) -> Option<EmbeddingMatrix> {
        if self.n_agents() == 0 {
            return None;
        }
        self.slice_rows(self.n_id(), self.n_id() + self.n_agents())
    }

    fn slice_rows(&self, start: usize, end: usize) -> Option<EmbeddingMatrix> {
        let d = self.dim();
        EmbeddingMatrix::new(
            end - start,
            d,
            self.concepts.data()[start * d..end * d].to_vec(),
        )
        .ok()
    }

    /// Same ID part with the agents removed.
    pub fn without_agents(&self) -> ConceptBank {
        ConceptBank {
            id_labels: self.id_labels.clone(),
            agent_texts: Vec::new(),
            concepts: self.id_embeddings(),
        }
    }

    /// Same ID part with `agents` appended after any existing agents.
    pub fn with_agents(&self, texts: Vec<String>, agents: &EmbeddingMatrix) -> Result<ConceptBank> {
        if texts.len() != agents.rows() {
            return Err(Error::LabelCount {
                labels: texts.len(),
                rows: agents.rows(),
            });
        }
        if agents.dim() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                found: agents.dim(),
            });
        }
        let mut agent_texts = self.agent_texts.clone();
        agent_texts.extend(texts);
        Ok(ConceptBank {
            id_labels: self.id_labels.clone(),
            agent_texts,
            concepts: self.concepts.stack(&agents.normalized()?)?,
        })
    }

    /// Whether both banks carry the same labels and bitwise-equal ID rows.
    pub fn same_id_part(&self, other: &ConceptBank) -> bool {
        let n = self.n_id() * self.dim();
        self.id_labels == other.id_labels
            && self.dim() == other.dim()
            && self.concepts.data()[..n] == other.concepts.data()[..n]
    }

    /// Keep `round(k * N)` agents picked by a seeded shuffle of the agent
    /// indices. The kept agents stay in pool order.
    pub fn subsample_agents(&self, k: AgentRatio, seed: u64) -> Result<ConceptBank> {
        let needed = k.agent_count(self.n_id());
        let available = self.n_agents();
        if needed > available {
            return Err(Error::InsufficientAgents { needed, available });
        }
        let mut order: Vec<usize> = (0..available).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut keep = order[..needed].to_vec();
        keep.sort_unstable();

        let mut bank = self.without_agents();
        if keep.is_empty() {
            return Ok(bank);
        }
        let pool = self.agent_embeddings().expect("needed > 0 implies agents");
        bank.agent_texts = keep.iter().map(|&i| self.agent_texts[i].clone()).collect();
        bank.concepts = bank.concepts.stack(&pool.select(&keep)?)?;
        Ok(bank)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize, prefix: &str) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn bank_with_pool(n: usize, m: usize) -> ConceptBank {
        let id: Vec<Vec<f32>> = (0..n).map(|i| vec![1.0, i as f32 + 1.0, 0.5]).collect();
        let agents: Vec<Vec<f32>> = (0..m).map(|j| vec![-(j as f32) - 1.0, 1.0, 2.0]).collect();
        let agents = EmbeddingMatrix::from_rows(&agents).ok();
        ConceptBank::new(
            labels(n, "c"),
            &EmbeddingMatrix::from_rows(&id).unwrap(),
            labels(m, "a"),
            agents.as_ref(),
        )
        .unwrap()
    }

    #[test]
    fn build_layout() {
        let id = EmbeddingMatrix::from_rows(&[[1.0f32, 0.0], [0.0, 2.0]]).unwrap();
        let ag = EmbeddingMatrix::from_rows(&[[1.0f32, 1.0]]).unwrap();
        let bank = ConceptBank::new(labels(2, "c"), &id, labels(1, "a"), Some(&ag)).unwrap();
        assert_eq!((bank.n_id(), bank.n_agents()), (2, 1));
        assert_eq!(bank.concepts().rows(), 3);
        assert_eq!(bank.concepts().row(1), &[0.0, 1.0]);
        let r = bank.concepts().row(2);
        assert!((r[0] - std::f32::consts::FRAC_1_SQRT_2).abs() < 1e-7);
    }

    #[test]
    fn build_errors() {
        let id = EmbeddingMatrix::from_rows(&[[1.0f32, 0.0], [0.0, 1.0]]).unwrap();
        let ag3 = EmbeddingMatrix::from_rows(&[[1.0f32, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            ConceptBank::new(labels(2, "c"), &id, labels(1, "a"), Some(&ag3)),
            Err(Error::DimMismatch { .. })
        ));
        let zero = EmbeddingMatrix::from_rows(&[[0.0f32, 0.0]]).unwrap();
        assert!(matches!(
            ConceptBank::new(labels(2, "c"), &id, labels(1, "a"), Some(&zero)),
            Err(Error::ZeroNorm { .. })
        ));
        assert!(matches!(
            ConceptBank::id_only(vec!["cat".into(), "cat".into()], &id),
            Err(Error::DuplicateLabel(_))
        ));
        assert!(matches!(
            ConceptBank::id_only(labels(3, "c"), &id),
            Err(Error::LabelCount { .. })
        ));
    }

    #[test]
    fn subsample_zero_is_mcm_configuration() {
        let bank = bank_with_pool(4, 6);
        let sub = bank
            .subsample_agents(AgentRatio::new(0.0).unwrap(), 1)
            .unwrap();
        assert_eq!(sub.n_agents(), 0);
        assert!(sub.same_id_part(&bank));
    }

    #[test]
    fn subsample_full_pool_keeps_everything() {
        let bank = bank_with_pool(5, 5);
        let sub = bank
            .subsample_agents(AgentRatio::new(1.0).unwrap(), 99)
            .unwrap();
        assert_eq!(sub, bank);
    }

    #[test]
    fn subsample_is_seeded() {
        let bank = bank_with_pool(10, 10);
        let k = AgentRatio::new(0.5).unwrap();
        let a = bank.subsample_agents(k, 42).unwrap();
        let b = bank.subsample_agents(k, 42).unwrap();
        assert_eq!(a.n_agents(), 5);
        assert_eq!(a, b);
        // a different seed picks a different subset for this pool
        let c = bank.subsample_agents(k, 7).unwrap();
        assert_ne!(a.agent_texts(), c.agent_texts());
    }

    #[test]
    fn subsample_insufficient() {
        let bank = bank_with_pool(10, 4);
        assert!(matches!(
            bank.subsample_agents(AgentRatio::new(0.5).unwrap(), 0),
            Err(Error::InsufficientAgents {
                needed: 5,
                available: 4
            })
        ));
    }

    #[test]
    fn ratio_rounds_half_up() {
        assert_eq!(AgentRatio::new(0.25).unwrap().agent_count(10), 3);
        assert_eq!(AgentRatio::new(0.5).unwrap().agent_count(3), 2);
        assert_eq!(AgentRatio::new(1.5).unwrap().agent_count(10), 15);
        assert!(AgentRatio::new(-0.1).is_err());
        assert!(AgentRatio::new(f64::NAN).is_err());
    }

    #[test]
    fn with_and_without_agents() {
        let bank = bank_with_pool(3, 2);
        let base = bank.without_agents();
        assert_eq!(base.n_agents(), 0);
        let extra = EmbeddingMatrix::from_rows(&[[0.0f32, 0.0, 3.0]]).unwrap();
        let more = bank.with_agents(vec!["x".into()], &extra).unwrap();
        assert_eq!(more.n_agents(), 3);
        assert_eq!(more.concepts().row(5), &[0.0, 0.0, 1.0]);
        assert!(more.same_id_part(&base));
    }
}
