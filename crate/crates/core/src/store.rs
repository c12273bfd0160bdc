//! Embedding and model checkpoints built on [`Checkpoint`].

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::graph::Pair;
use crate::model::{init_params, ModelParams};
use crate::seqembed::{EmbeddingSet, EmbeddingTable, Kind, TokenVocab};
use crate::tensor::Tensor;
use crate::train::FoldSplit;

fn missing(what: &str) -> Error {
    Error::invalid(format!("checkpoint has no '{what}'"))
}

fn expect_kind(ckpt: &Checkpoint, kind: &str) -> Result<()> {
    match ckpt.header_value("kind") {
        Some(k) if k == kind => Ok(()),
        other => Err(Error::invalid(format!(
            "expected a {kind} checkpoint, found {}",
            other.unwrap_or("no kind")
        ))),
    }
}

fn with_config(mut ckpt: Checkpoint, config: &RunConfig) -> Checkpoint {
    for (k, v) in config.entries() {
        ckpt.header.push((k.to_string(), v));
    }
    ckpt.header.push(("config_hash".into(), config.hash()));
    ckpt
}

/// Rebuild the run configuration stored in a checkpoint header.
pub fn config_from(ckpt: &Checkpoint) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    for key in crate::config::KEYS {
        let value = ckpt.header_value(key).ok_or_else(|| missing(key))?;
        config.set(key, value)?;
    }
    config.validate()?;
    Ok(config)
}

pub fn embeddings_to_checkpoint(set: &EmbeddingSet, config: &RunConfig) -> Checkpoint {
    let tokens = |v: &TokenVocab| v.tokens().iter().collect::<String>();
    let mut ckpt = with_config(Checkpoint::new().with_header("kind", "embeddings"), config)
        .with_header("drug_vocab", tokens(&set.drug_vocab))
        .with_header("mirna_vocab", tokens(&set.mirna_vocab));
    ckpt.push("drug_table", set.drug_table.vectors.clone());
    ckpt.push("mirna_table", set.mirna_table.vectors.clone());
    ckpt
}

pub fn embeddings_from_checkpoint(ckpt: &Checkpoint) -> Result<EmbeddingSet> {
    expect_kind(ckpt, "embeddings")?;
    let part = |kind: Kind, vocab_key: &str, table_key: &str| -> Result<(TokenVocab, EmbeddingTable)> {
        let tokens = ckpt.header_value(vocab_key).ok_or_else(|| missing(vocab_key))?;
        let vocab = TokenVocab::from_tokens(kind, tokens.chars().collect())?;
        let vectors = ckpt.tensor(table_key).ok_or_else(|| missing(table_key))?.clone();
        if vectors.shape().len() != 2 || vectors.rows() != vocab.len() + 1 {
            return Err(Error::invalid(format!(
                "{table_key} has shape {:?} for {} tokens",
                vectors.shape(),
                vocab.len()
            )));
        }
        Ok((vocab, EmbeddingTable { kind, vectors }))
    };
    let (drug_vocab, drug_table) = part(Kind::Drug, "drug_vocab", "drug_table")?;
    let (mirna_vocab, mirna_table) = part(Kind::Mirna, "mirna_vocab", "mirna_table")?;
    Ok(EmbeddingSet {
        drug_vocab,
        drug_table,
        mirna_vocab,
        mirna_table,
    })
}

fn pairs_tensor(pairs: &[Pair]) -> Tensor {
    let data = pairs.iter().flat_map(|&(d, m)| [d as f64, m as f64]).collect();
    Tensor::matrix(pairs.len(), 2, data)
}

fn pairs_of(t: &Tensor) -> Result<Vec<Pair>> {
    if t.shape().len() != 2 || t.cols() != 2 {
        return Err(Error::invalid(format!("pair list has shape {:?}", t.shape())));
    }
    (0..t.rows())
        .map(|r| {
            let (d, m) = (t.get(r, 0), t.get(r, 1));
            if d < 0.0 || m < 0.0 || d.fract() != 0.0 || m.fract() != 0.0 {
                return Err(Error::invalid(format!("pair ({d}, {m}) is not a pair of indices")));
            }
            Ok((d as usize, m as usize))
        })
        .collect()
}

/// A trained fold: parameters, the split it was trained on, and the run configuration.
#[derive(Debug, Clone)]
pub struct ModelCheckpoint {
    pub config: RunConfig,
    pub fold: usize,
    pub params: ModelParams,
    pub split: FoldSplit,
}

impl ModelCheckpoint {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = with_config(Checkpoint::new().with_header("kind", "model"), &self.config)
            .with_header("fold", self.fold.to_string());
        for (name, p) in self.params.named() {
            ckpt.push(name, p.value.clone());
        }
        ckpt.push("split.train_pos", pairs_tensor(&self.split.train_pos));
        ckpt.push("split.train_neg", pairs_tensor(&self.split.train_neg));
        ckpt.push("split.test_pos", pairs_tensor(&self.split.test_pos));
        ckpt.push("split.test_neg", pairs_tensor(&self.split.test_neg));
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<ModelCheckpoint> {
        expect_kind(ckpt, "model")?;
        let config = config_from(ckpt)?;
        let fold = ckpt
            .header_value("fold")
            .ok_or_else(|| missing("fold"))?
            .parse()
            .map_err(|_| Error::invalid("fold is not an integer"))?;
        let mut params = init_params(&config.train.model, 0)?;
        let values = params
            .named()
            .into_iter()
            .map(|(name, _)| ckpt.tensor(&name).cloned().ok_or_else(|| missing(&name)))
            .collect::<Result<Vec<_>>>()?;
        params.set_values(&values)?;
        let pairs = |key: &str| pairs_of(ckpt.tensor(key).ok_or_else(|| missing(key))?);
        let split = FoldSplit {
            train_pos: pairs("split.train_pos")?,
            test_pos: pairs("split.test_pos")?,
            train_neg: pairs("split.train_neg")?,
            test_neg: pairs("split.test_neg")?,
        };
        Ok(ModelCheckpoint {
            config,
            fold,
            params,
            split,
        })
    }
}
