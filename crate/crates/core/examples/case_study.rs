//! Hide every known partner of one drug, retrain, and see where they rank.

use dmagt::model::ModelConfig;
use dmagt::seqembed::{CbowConfig, EmbeddingSet};
use dmagt::synth::{generate, group_of, SynthConfig};
use dmagt::train::{case_study, NodeFeatures, TrainConfig};

fn main() -> dmagt::Result<()> {
    let drug = std::env::args().nth(1).unwrap_or_else(|| "SYN-D001".into());
    let ds = generate(&SynthConfig::default())?;
    let set = EmbeddingSet::train(&ds, &CbowConfig::default())?;
    let nodes = NodeFeatures::from_embeddings(&ds, &set)?;
    let mut model = ModelConfig::with_hidden(32);
    model.heads = 4;
    let config = TrainConfig { epochs: 80, learning_rate: 1e-3, model, ..TrainConfig::default() };

    let ranked = case_study(&ds, &nodes, &config, &drug)?;
    let d = ds.drug_position(&drug).expect("case_study accepted the drug");
    let known: Vec<usize> = ds.positive_pairs().into_iter().filter(|p| p.0 == d).map(|p| p.1).collect();
    let hits = |k: usize| {
        ranked[..k]
            .iter()
            .filter(|(id, _)| known.contains(&ds.mirna_position(id).unwrap()))
            .count()
    };
    println!("{drug} (group {}) has {} known partners", group_of(d), known.len());
    for (i, (id, score)) in ranked.iter().take(10).enumerate() {
        let m = ds.mirna_position(id).unwrap();
        let mark = if known.contains(&m) { "known" } else { "" };
        println!("{:>3}  {id}  {score:.4}  group {}  {mark}", i + 1, group_of(m));
    }
    println!("known partners in top 10: {}, top 30: {}", hits(10), hits(30));
    Ok(())
}
