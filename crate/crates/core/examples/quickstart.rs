//! Score a small hand-made bank and compare MCM with CMA on the bundled
//! reference benchmark.
//!
//! cargo run --release --example quickstart

use cma_ood::experiments::{compare_mcm_cma, gen_synthetic, SynthSpec};
use cma_ood::scoring::{cma_score, mcm_score};
use cma_ood::{AgentRatio, ConceptBank, Embedding, EmbeddingMatrix, ScoreConfig};

fn main() -> cma_ood::Result<()> {
    // Two ID labels and one neutral agent halfway between them.
    let id = EmbeddingMatrix::from_rows(&[[1.0f32, 0.0], [0.0, 1.0]])?;
    let agent = EmbeddingMatrix::from_rows(&[[1.0f32, 1.0]])?;
    let bank = ConceptBank::new(
        vec!["cat".into(), "dog".into()],
        &id,
        vec!["a photo of something".into()],
        Some(&agent),
    )?;
    let image = Embedding::new(vec![1.0, 0.0])?;
    let cfg = ScoreConfig::default();
    let (label, cma) = cma_score(&image, &bank, &cfg)?;
    let (_, mcm) = mcm_score(&image, &bank, &cfg)?;
    println!(
        "predicted {:?}: CMA {cma:.5}, MCM {mcm:.6}",
        bank.id_labels()[label]
    );

    let spec = SynthSpec::reference();
    let data = gen_synthetic(&spec)?;
    let bank = data
        .bank()?
        .subsample_agents(AgentRatio::new(1.0)?, spec.seed)?;
    let c = compare_mcm_cma(&data.benchmark, &bank, &cfg)?;
    for (name, e) in [("MCM", &c.mcm), ("CMA", &c.cma)] {
        println!(
            "{name}: FPR95 {:.2}  AUROC {:.2}",
            100.0 * e.average.fpr_at_tpr,
            100.0 * e.average.auroc
        );
    }
    Ok(())
}
