//! Train character-level CBOW embeddings and inspect them.

use dmagt::checkpoint::Checkpoint;
use dmagt::config::RunConfig;
use dmagt::seqembed::{flatten_features, CbowConfig, EmbeddingSet, SEQ_LEN, TOKEN_DIM};
use dmagt::store::{embeddings_from_checkpoint, embeddings_to_checkpoint};
use dmagt::synth::{generate, SynthConfig};

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (norm(a) * norm(b))
}

fn main() -> dmagt::Result<()> {
    let ds = generate(&SynthConfig::default())?;
    let set = EmbeddingSet::train(&ds, &CbowConfig::default())?;

    println!("miRNA tokens {:?}", set.mirna_vocab.tokens());
    let rna = |c| set.mirna_table.row(set.mirna_vocab.id(c).unwrap());
    for (a, b) in [('A', 'U'), ('G', 'C'), ('A', 'G')] {
        println!("  cos({a}, {b}) = {:+.3}", cosine(rna(a), rna(b)));
    }
    println!("drug tokens {:?}", set.drug_vocab.tokens());

    let matrices = set.node_matrices(&ds)?;
    let features = flatten_features(&matrices);
    println!(
        "features {:?} ({} rows of {} × {} per node)",
        features.shape(),
        matrices.len(),
        SEQ_LEN,
        TOKEN_DIM
    );

    let bytes = embeddings_to_checkpoint(&set, &RunConfig::default()).to_bytes()?;
    let back = embeddings_from_checkpoint(&Checkpoint::from_bytes(&bytes)?)?;
    assert_eq!(back, set);
    println!("checkpoint round trip: {} bytes", bytes.len());
    Ok(())
}
