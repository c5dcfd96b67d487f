//! Seeded synthetic embeddings and the sweep experiments built on them:
//! agent ratio `k`, temperature `tau`, agent-set ranking and the MCM vs CMA
//! comparison.
//!
//! Synthetic samples are `normalize(kappa * mean + z)` with `z` standard
//! normal, a cheap stand-in for von Mises-Fisher draws around `mean`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::{AgentRatio, ConceptBank};
use crate::error::{Error, Result};
use crate::eval::{evaluate, id_accuracy, EvalResult, DEFAULT_TPR};
use crate::scoring::{score_batch, ScoreConfig, ScoreKind, ScoreRecord};
use crate::stats::{delta_hypothesis_check, score_deltas, DeltaParams, HypothesisOutcome};
use crate::tensor::{normalize_slice, EmbeddingMatrix};

/// Default temperature grid for sweeps, 0.1 to 64.
pub const DEFAULT_TAU_GRID: [f64; 13] = [
    0.1, 0.2, 0.4, 0.6, 0.8, 1.0, 1.5, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0,
];

pub const DEFAULT_K_GRID: [f64; 8] = [0.0, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0];

const REFERENCE_SPEC: &str = include_str!("../configs/reference_synth.toml");

fn default_tilt() -> f32 {
    0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub name: String,
    /// Explicit mean direction; drawn at random when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f32>>,
    /// Weight of the shared axis mixed into a random direction. Negative
    /// tilts push clusters away from the axis, positive ones towards it.
    #[serde(default = "default_tilt")]
    pub tilt: f32,
    pub concentration: f32,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    Random,
    Id(usize),
    Ood(usize),
    Direction(Vec<f32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentGroup {
    pub anchor: Anchor,
    /// Jitter around the anchor direction.
    pub concentration: f32,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub dim: usize,
    pub id_clusters: Vec<ClusterSpec>,
    pub ood_clusters: Vec<ClusterSpec>,
    #[serde(default)]
    pub agents: Vec<AgentGroup>,
}

impl SynthSpec {
    /// The reference benchmark shipped with the crate.
    pub fn reference() -> Self {
        Self::from_toml(REFERENCE_SPEC).expect("bundled reference spec parses")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::BadSpec(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::BadSpec(msg));
        if self.dim < 2 {
            return bad(format!("dim {} < 2", self.dim));
        }
        if self.id_clusters.is_empty() || self.ood_clusters.is_empty() {
            return bad("need at least one ID and one OOD cluster".into());
        }
        for c in self.id_clusters.iter().chain(&self.ood_clusters) {
            if c.count == 0 {
                return bad(format!("cluster {:?} has count 0", c.name));
            }
            if !(c.concentration > 0.0 && c.concentration.is_finite()) {
                return bad(format!("cluster {:?} concentration must be > 0", c.name));
            }
            if !c.tilt.is_finite() {
                return bad(format!("cluster {:?} tilt must be finite", c.name));
            }
            if let Some(d) = &c.direction {
                if d.len() != self.dim {
                    return bad(format!("cluster {:?} direction has wrong dim", c.name));
                }
            }
        }
        let mut names: Vec<&str> = self.id_clusters.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("ID cluster names must be distinct".into());
        }
        for g in &self.agents {
            if g.count == 0 || !(g.concentration > 0.0 && g.concentration.is_finite()) {
                return bad("agent groups need count >= 1 and concentration > 0".into());
            }
            match &g.anchor {
                Anchor::Id(i) if *i >= self.id_clusters.len() => {
                    return bad(format!("agent anchor id {i} out of range"))
                }
                Anchor::Ood(i) if *i >= self.ood_clusters.len() => {
                    return bad(format!("agent anchor ood {i} out of range"))
                }
                Anchor::Direction(d) if d.len() != self.dim => {
                    return bad("agent anchor direction has wrong dim".into())
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OodSet {
    pub name: String,
    pub images: EmbeddingMatrix,
}

/// ID images with optional ground-truth concept indices, plus named OOD sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub id_images: EmbeddingMatrix,
    pub id_truth: Option<Vec<usize>>,
    pub ood_sets: Vec<OodSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub id_labels: Vec<String>,
    pub id_concepts: EmbeddingMatrix,
    pub agent_texts: Vec<String>,
    pub agents: Option<EmbeddingMatrix>,
    pub benchmark: Benchmark,
}

impl SynthData {
    /// ID concepts followed by the whole generated agent pool.
    pub fn bank(&self) -> Result<ConceptBank> {
        ConceptBank::new(
            self.id_labels.clone(),
            &self.id_concepts,
            self.agent_texts.clone(),
            self.agents.as_ref(),
        )
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    dim: usize,
}

impl Sampler {
    fn gaussian(&mut self) -> Vec<f32> {
        (0..self.dim)
            .map(|_| self.rng.sample::<f32, _>(StandardNormal))
            .collect()
    }

    fn unit(&mut self) -> Result<Vec<f32>> {
        normalize_slice(&self.gaussian())
    }

    fn around(&mut self, mean: &[f32], kappa: f32) -> Result<Vec<f32>> {
        let z = self.gaussian();
        let v: Vec<f32> = mean.iter().zip(&z).map(|(m, n)| kappa * m + n).collect();
        normalize_slice(&v)
    }

    fn direction(&mut self, c: &ClusterSpec, axis: &[f32]) -> Result<Vec<f32>> {
        match &c.direction {
            Some(d) => normalize_slice(d),
            None => {
                let r = self.unit()?;
                let v: Vec<f32> = r.iter().zip(axis).map(|(x, a)| x + c.tilt * a).collect();
                normalize_slice(&v)
            }
        }
    }
}

/// Draw a benchmark from `spec`. The draw order is fixed: shared axis, ID
/// directions, OOD directions, ID images, OOD images, agents.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        dim: spec.dim,
    };
    let axis = s.unit()?;
    let id_dirs = spec
        .id_clusters
        .iter()
        .map(|c| s.direction(c, &axis))
        .collect::<Result<Vec<_>>>()?;
    let ood_dirs = spec
        .ood_clusters
        .iter()
        .map(|c| s.direction(c, &axis))
        .collect::<Result<Vec<_>>>()?;

    let mut id_rows = Vec::new();
    let mut id_truth = Vec::new();
    for (i, (c, dir)) in spec.id_clusters.iter().zip(&id_dirs).enumerate() {
        for _ in 0..c.count {
            id_rows.push(s.around(dir, c.concentration)?);
            id_truth.push(i);
        }
    }
    let mut ood_sets = Vec::with_capacity(ood_dirs.len());
    for (c, dir) in spec.ood_clusters.iter().zip(&ood_dirs) {
        let rows = (0..c.count)
            .map(|_| s.around(dir, c.concentration))
            .collect::<Result<Vec<_>>>()?;
        ood_sets.push(OodSet {
            name: c.name.clone(),
            images: EmbeddingMatrix::from_rows(&rows)?,
        });
    }

    let mut agent_rows = Vec::new();
    let mut agent_texts = Vec::new();
    for (gi, g) in spec.agents.iter().enumerate() {
        let anchor = match &g.anchor {
            Anchor::Random => s.unit()?,
            Anchor::Id(i) => id_dirs[*i].clone(),
            Anchor::Ood(i) => ood_dirs[*i].clone(),
            Anchor::Direction(d) => normalize_slice(d)?,
        };
        for j in 0..g.count {
            agent_rows.push(s.around(&anchor, g.concentration)?);
            agent_texts.push(format!("agent-{gi}-{j}"));
        }
    }
    let agents = if agent_rows.is_empty() {
        None
    } else {
        Some(EmbeddingMatrix::from_rows(&agent_rows)?)
    };

    Ok(SynthData {
        id_labels: spec.id_clusters.iter().map(|c| c.name.clone()).collect(),
        id_concepts: EmbeddingMatrix::from_rows(&id_dirs)?,
        agent_texts,
        agents,
        benchmark: Benchmark {
            id_images: EmbeddingMatrix::from_rows(&id_rows)?,
            id_truth: Some(id_truth),
            ood_sets,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetResult {
    pub name: String,
    pub result: EvalResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageMetrics {
    pub fpr_at_tpr: f64,
    pub auroc: f64,
}

/// Metrics of one bank on every OOD set of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankEval {
    pub per_set: Vec<SetResult>,
    pub average: AverageMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub n_agents: usize,
    pub per_set: Vec<SetResult>,
    pub average: AverageMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id_accuracy: Option<f64>,
}

fn scores(records: &[ScoreRecord], kind: ScoreKind) -> Vec<f64> {
    records.iter().map(|r| r.score(kind)).collect()
}

/// Score the benchmark against `bank` and evaluate the chosen score kind on
/// each OOD set at `target_tpr`.
pub fn evaluate_bank(
    bench: &Benchmark,
    bank: &ConceptBank,
    cfg: &ScoreConfig,
    kind: ScoreKind,
    target_tpr: f64,
) -> Result<BankEval> {
    if bench.ood_sets.is_empty() {
        return Err(Error::EmptyInput("benchmark has no OOD sets"));
    }
    let id_records = score_batch(&bench.id_images, bank, cfg)?;
    let id_scores = scores(&id_records, kind);
    let per_set = bench
        .ood_sets
        .iter()
        .map(|set| {
            let recs = score_batch(&set.images, bank, cfg)?;
            Ok(SetResult {
                name: set.name.clone(),
                result: evaluate(&id_scores, &scores(&recs, kind), target_tpr)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_set.len() as f64;
    let average = AverageMetrics {
        fpr_at_tpr: per_set.iter().map(|s| s.result.fpr_at_tpr).sum::<f64>() / n,
        auroc: per_set.iter().map(|s| s.result.auroc).sum::<f64>() / n,
    };
    let id_accuracy = match &bench.id_truth {
        Some(truth) => Some(id_accuracy(&id_records, truth)?),
        None => None,
    };
    Ok(BankEval {
        per_set,
        average,
        id_accuracy,
    })
}

fn row(parameter: &str, value: f64, seed: Option<u64>, n_agents: usize, e: BankEval) -> SweepRow {
    SweepRow {
        parameter: parameter.to_string(),
        value,
        seed,
        n_agents,
        per_set: e.per_set,
        average: e.average,
        id_accuracy: e.id_accuracy,
    }
}

/// CMA metrics for each agent ratio, agents subsampled from `full_bank`.
pub fn sweep_k(
    bench: &Benchmark,
    full_bank: &ConceptBank,
    ks: &[f64],
    seed: u64,
    cfg: &ScoreConfig,
) -> Result<Vec<SweepRow>> {
    let ratios = ks
        .iter()
        .map(|&k| AgentRatio::new(k))
        .collect::<Result<Vec<_>>>()?;
    for k in &ratios {
        let needed = k.agent_count(full_bank.n_id());
        if needed > full_bank.n_agents() {
            return Err(Error::InsufficientAgents {
                needed,
                available: full_bank.n_agents(),
            });
        }
    }
    ratios
        .par_iter()
        .map(|&k| {
            let bank = full_bank.subsample_agents(k, seed)?;
            let e = evaluate_bank(bench, &bank, cfg, ScoreKind::Cma, DEFAULT_TPR)?;
            Ok(row("k", k.get(), Some(seed), bank.n_agents(), e))
        })
        .collect()
}

/// CMA metrics for each temperature.
pub fn sweep_tau(bench: &Benchmark, bank: &ConceptBank, taus: &[f64]) -> Result<Vec<SweepRow>> {
    let cfgs = taus
        .iter()
        .map(|&t| ScoreConfig::new(t))
        .collect::<Result<Vec<_>>>()?;
    cfgs.par_iter()
        .map(|cfg| {
            let e = evaluate_bank(bench, bank, cfg, ScoreKind::Cma, DEFAULT_TPR)?;
            Ok(row("tau", cfg.tau, None, bank.n_agents(), e))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSet {
    pub name: String,
    pub texts: Vec<String>,
    pub embeddings: EmbeddingMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSetResult {
    pub name: String,
    pub n_agents: usize,
    pub per_set: Vec<SetResult>,
    pub average: AverageMetrics,
    /// 1-based rank by average FPR95 (lower is better).
    pub rank_fpr: usize,
    /// 1-based rank by average AUROC (higher is better).
    pub rank_auroc: usize,
}

/// Evaluate each agent set appended to the ID part of `id_bank`. Rows come
/// back in input order; ties in a metric rank by name.
pub fn rank_agents(
    bench: &Benchmark,
    id_bank: &ConceptBank,
    agent_sets: &[AgentSet],
    cfg: &ScoreConfig,
) -> Result<Vec<AgentSetResult>> {
    if agent_sets.len() < 2 {
        return Err(Error::TooFewSets(agent_sets.len()));
    }
    let base = id_bank.without_agents();
    let evals = agent_sets
        .par_iter()
        .map(|set| {
            let bank = base.with_agents(set.texts.clone(), &set.embeddings)?;
            evaluate_bank(bench, &bank, cfg, ScoreKind::Cma, DEFAULT_TPR)
        })
        .collect::<Result<Vec<_>>>()?;

    let ranks = |key: &dyn Fn(&BankEval) -> f64| {
        let mut order: Vec<usize> = (0..evals.len()).collect();
        order.sort_by(|&a, &b| {
            key(&evals[a])
                .total_cmp(&key(&evals[b]))
                .then_with(|| agent_sets[a].name.cmp(&agent_sets[b].name))
        });
        let mut rank = vec![0; evals.len()];
        for (pos, idx) in order.into_iter().enumerate() {
            rank[idx] = pos + 1;
        }
        rank
    };
    let rank_fpr = ranks(&|e| e.average.fpr_at_tpr);
    let rank_auroc = ranks(&|e| -e.average.auroc);

    Ok(evals
        .into_iter()
        .zip(agent_sets)
        .enumerate()
        .map(|(i, (e, set))| AgentSetResult {
            name: set.name.clone(),
            n_agents: set.embeddings.rows(),
            per_set: e.per_set,
            average: e.average,
            rank_fpr: rank_fpr[i],
            rank_auroc: rank_auroc[i],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub tau: f64,
    pub n_id: usize,
    pub n_agents: usize,
    pub mcm: BankEval,
    pub cma: BankEval,
}

/// MCM and CMA on the same benchmark and bank.
pub fn compare_mcm_cma(
    bench: &Benchmark,
    bank: &ConceptBank,
    cfg: &ScoreConfig,
) -> Result<Comparison> {
    Ok(Comparison {
        tau: cfg.tau,
        n_id: bank.n_id(),
        n_agents: bank.n_agents(),
        mcm: evaluate_bank(bench, bank, cfg, ScoreKind::Mcm, DEFAULT_TPR)?,
        cma: evaluate_bank(bench, bank, cfg, ScoreKind::Cma, DEFAULT_TPR)?,
    })
}

/// Score deltas from adding the agents of `bank` for every ID image and
/// every OOD image (all sets pooled), checked against `params`.
pub fn delta_analysis(
    bench: &Benchmark,
    bank: &ConceptBank,
    cfg: &ScoreConfig,
    params: &DeltaParams,
) -> Result<HypothesisOutcome> {
    let base = bank.without_agents();
    let id = score_deltas(&bench.id_images, &base, bank, cfg)?;
    let mut ood = Vec::new();
    for set in &bench.ood_sets {
        ood.extend(score_deltas(&set.images, &base, bank, cfg)?);
    }
    delta_hypothesis_check(id, ood, params)
}
