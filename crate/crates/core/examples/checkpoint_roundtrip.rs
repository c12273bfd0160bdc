//! Train one fold, save it, load it back and re-score the held-out pairs.

use dmagt::checkpoint::Checkpoint;
use dmagt::config::RunConfig;
use dmagt::model::{predict, ModelConfig};
use dmagt::seqembed::EmbeddingSet;
use dmagt::store::ModelCheckpoint;
use dmagt::synth::{generate, SynthConfig};
use dmagt::train::{split_folds, train_fold, training_inputs, NodeFeatures};

fn main() -> dmagt::Result<()> {
    let mut config = RunConfig::default().seeded(7);
    config.train.model = ModelConfig { heads: 4, ..ModelConfig::with_hidden(32) };
    config.train.epochs = 30;
    config.train.learning_rate = 1e-3;

    let ds = generate(&SynthConfig::default())?;
    let nodes = NodeFeatures::from_embeddings(&ds, &EmbeddingSet::train(&ds, &config.cbow)?)?;
    let splits = split_folds(ds.n_drugs(), ds.n_mirnas(), &ds.positive_pairs(), config.train.folds, config.seed)?;
    let model = train_fold(&nodes, &splits[0], &config.train, 0, |_, _| {})?;
    let (pairs, _) = splits[0].test_pairs();
    let before = predict(&model.params, &config.train.model, &model.inputs, &pairs)?;

    let path = std::env::temp_dir().join("dmagt_fold1.ckpt");
    let saved = ModelCheckpoint { config: config.clone(), fold: 0, params: model.params, split: splits[0].clone() };
    saved.to_checkpoint().save(&path)?;

    let ckpt = Checkpoint::load(&path)?;
    print!("{}", ckpt.header_text());
    let loaded = ModelCheckpoint::from_checkpoint(&ckpt)?;
    let inputs = training_inputs(&nodes, &loaded.split.train_pos, &loaded.config.train)?;
    let after = predict(&loaded.params, &loaded.config.train.model, &inputs, &pairs)?;
    assert!(before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits()));
    println!("{} tensors, {} test scores reproduced bit for bit", ckpt.tensors.len(), after.len());
    Ok(())
}
