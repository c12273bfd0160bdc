//! Drop the sequence features or the positional encoding and compare AUCs.

use dmagt::model::ModelConfig;
use dmagt::seqembed::{CbowConfig, EmbeddingSet};
use dmagt::synth::{generate, SynthConfig};
use dmagt::train::{run_cv, Ablation, NodeFeatures, TrainConfig};

fn main() -> dmagt::Result<()> {
    let ds = generate(&SynthConfig::default())?;
    let set = EmbeddingSet::train(&ds, &CbowConfig::default())?;
    let nodes = NodeFeatures::from_embeddings(&ds, &set)?;
    let mut model = ModelConfig::with_hidden(32);
    model.heads = 4;
    for ablation in [Ablation::None, Ablation::Nemb, Ablation::Npe] {
        let config = TrainConfig { epochs: 60, learning_rate: 1e-3, ablation, model: model.clone(), ..TrainConfig::default() };
        let report = run_cv(&nodes, &ds.positive_pairs(), &config, |_, _, _| {})?.report;
        println!("{:<5} AUC {:.4} ± {:.4}", ablation.as_str(), report.mean_auc(), report.std()[5]);
    }
    Ok(())
}
