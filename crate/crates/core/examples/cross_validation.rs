//! Five-fold cross-validation on the synthetic benchmark.
//!
//! A reduced model runs by default; pass `full` for the default configuration
//! (about two minutes in release builds).

use dmagt::model::ModelConfig;
use dmagt::seqembed::{CbowConfig, EmbeddingSet};
use dmagt::synth::{generate, SynthConfig};
use dmagt::train::{run_cv, NodeFeatures, TrainConfig};

fn main() -> dmagt::Result<()> {
    let full = std::env::args().any(|a| a == "full");
    let config = if full {
        TrainConfig::default()
    } else {
        let mut model = ModelConfig::with_hidden(32);
        model.heads = 4;
        TrainConfig { epochs: 60, learning_rate: 1e-3, model, ..TrainConfig::default() }
    };

    let ds = generate(&SynthConfig::default())?;
    let set = EmbeddingSet::train(&ds, &CbowConfig { seed: config.seed, ..CbowConfig::default() })?;
    let nodes = NodeFeatures::from_embeddings(&ds, &set)?;
    let outcome = run_cv(&nodes, &ds.positive_pairs(), &config, |fold, epoch, loss| {
        if epoch == config.epochs {
            println!("fold {fold}: final training loss {loss:.4}");
        }
    })?;
    print!("{}", outcome.report.to_tsv());
    println!("{}", outcome.report.summary());
    Ok(())
}
