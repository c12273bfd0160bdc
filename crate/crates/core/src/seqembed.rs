//! Character-level vocabularies, CBOW token embeddings with negative sampling,
//! and fixed-shape per-node sequence matrices.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::tensor::Tensor;

/// Rows kept per sequence; longer sequences are truncated, shorter ones zero-padded.
pub const SEQ_LEN: usize = 128;
/// Width of every token embedding.
pub const TOKEN_DIM: usize = 64;
/// Floor of the linearly decaying CBOW learning rate.
pub const MIN_LEARNING_RATE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Drug,
    Mirna,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Drug => "drug",
            Kind::Mirna => "mirna",
        }
    }
}

/// Distinct characters of a corpus in first-occurrence order.
///
/// Token `tokens[i]` has id `i + 1`; id 0 is the padding slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenVocab {
    kind: Kind,
    tokens: Vec<char>,
    index: HashMap<char, usize>,
}

impl TokenVocab {
    pub fn from_tokens(kind: Kind, tokens: Vec<char>) -> Result<TokenVocab> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, &c) in tokens.iter().enumerate() {
            if index.insert(c, i + 1).is_some() {
                return Err(Error::invalid(format!("duplicate token '{c}' in vocabulary")));
            }
        }
        Ok(TokenVocab { kind, tokens, index })
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn tokens(&self) -> &[char] {
        &self.tokens
    }

    /// Number of real tokens (excluding padding).
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }
}

pub fn build_vocab<S: AsRef<str>>(corpus: &[S], kind: Kind) -> Result<TokenVocab> {
    if corpus.is_empty() {
        return Err(Error::invalid("cannot build a vocabulary from an empty corpus"));
    }
    let mut tokens = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for s in corpus {
        for c in s.as_ref().chars() {
            if seen.insert(c) {
                tokens.push(c);
            }
        }
    }
    if tokens.is_empty() {
        return Err(Error::invalid("cannot build a vocabulary from an empty corpus"));
    }
    TokenVocab::from_tokens(kind, tokens)
}

pub fn tokenize(sequence: &str, vocab: &TokenVocab) -> Result<Vec<usize>> {
    sequence
        .chars()
        .map(|c| vocab.id(c).ok_or(Error::UnknownToken(c)))
        .collect()
}

/// `(|tokens| + 1) × 64` table; row 0 is the zero padding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub kind: Kind,
    pub vectors: Tensor,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn row(&self, id: usize) -> &[f64] {
        self.vectors.row(id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMatrix {
    pub node_id: String,
    /// `SEQ_LEN × TOKEN_DIM`.
    pub values: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbowConfig {
    pub window: usize,
    pub negatives_per_positive: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for CbowConfig {
    fn default() -> Self {
        CbowConfig {
            window: 5,
            negatives_per_positive: 5,
            epochs: 10,
            learning_rate: 0.025,
            seed: 1,
        }
    }
}

impl CbowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.negatives_per_positive == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "cbow window, negatives and epochs must all be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("cbow learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// One CBOW prediction: the center token from its context, against sampled negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct CbowExample {
    pub context: Vec<usize>,
    pub center: usize,
    pub negatives: Vec<usize>,
}

/// Loss and gradients of one example.
#[derive(Debug, Clone)]
pub struct CbowGradient {
    pub loss: f64,
    /// Gradient with respect to each context vector (shared by all context slots).
    pub context_grad: Vec<f64>,
    /// `(token id, gradient)` for the center and every negative, in order.
    pub output_grads: Vec<(usize, Vec<f64>)>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn log_sigmoid(x: f64) -> f64 {
    // ln σ(x) = -ln(1 + e^{-x}), stable for both signs
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

impl CbowExample {
    /// Negative-sampling loss `-ln σ(u_c·h) - Σ ln σ(-u_n·h)` with `h` the
    /// mean of the context input vectors, and its exact gradients.
    pub fn gradient(&self, input: &Tensor, output: &Tensor) -> CbowGradient {
        let dim = input.cols();
        let inv = 1.0 / self.context.len() as f64;
        let mut h = vec![0.0; dim];
        for &c in &self.context {
            for (hv, v) in h.iter_mut().zip(input.row(c)) {
                *hv += v * inv;
            }
        }
        let mut dh = vec![0.0; dim];
        let mut loss = 0.0;
        let mut output_grads = Vec::with_capacity(1 + self.negatives.len());
        let targets = std::iter::once((self.center, 1.0)).chain(self.negatives.iter().map(|&n| (n, 0.0)));
        for (tok, label) in targets {
            let u = output.row(tok);
            let s: f64 = u.iter().zip(&h).map(|(a, b)| a * b).sum();
            loss -= if label > 0.5 { log_sigmoid(s) } else { log_sigmoid(-s) };
            let ds = sigmoid(s) - label;
            for (d, uv) in dh.iter_mut().zip(u) {
                *d += ds * uv;
            }
            output_grads.push((tok, h.iter().map(|v| ds * v).collect()));
        }
        CbowGradient {
            loss,
            context_grad: dh.iter().map(|v| v * inv).collect(),
            output_grads,
        }
    }
}

fn check_corpus(corpus: &[Vec<usize>], window: usize) -> Result<()> {
    if corpus.iter().all(|s| s.len() < window + 1) {
        return Err(Error::invalid("no training pairs"));
    }
    Ok(())
}

/// Train a CBOW table and return it with the mean example loss of every epoch.
///
/// Each string is one sentence; context windows never cross sentences.
pub fn train_cbow_logged<S: AsRef<str>>(
    corpus: &[S],
    vocab: &TokenVocab,
    config: &CbowConfig,
) -> Result<(EmbeddingTable, Vec<f64>)> {
    config.validate()?;
    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| tokenize(s.as_ref(), vocab))
        .collect::<Result<_>>()?;
    check_corpus(&sentences, config.window)?;

    let rows = vocab.len() + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bound = 0.5 / TOKEN_DIM as f64;
    let mut input = Tensor::zeros(&[rows, TOKEN_DIM]);
    for r in 1..rows {
        for v in input.row_mut(r) {
            *v = rng.random_range(-bound..bound);
        }
    }
    let mut output = Tensor::zeros(&[rows, TOKEN_DIM]);

    let positions: usize = sentences.iter().map(Vec::len).sum();
    let total_steps = (positions * config.epochs).max(1) as f64;
    let mut step = 0usize;
    let mut history = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        let mut epoch_loss = 0.0;
        let mut examples = 0usize;
        for sentence in &sentences {
            for t in 0..sentence.len() {
                let lr = (config.learning_rate
                    - (config.learning_rate - MIN_LEARNING_RATE) * step as f64 / total_steps)
                    .max(MIN_LEARNING_RATE.min(config.learning_rate));
                step += 1;
                let lo = t.saturating_sub(config.window);
                let hi = (t + config.window + 1).min(sentence.len());
                let context: Vec<usize> = (lo..hi).filter(|&i| i != t).map(|i| sentence[i]).collect();
                if context.is_empty() {
                    continue;
                }
                let center = sentence[t];
                let negatives: Vec<usize> = (0..config.negatives_per_positive)
                    .map(|_| rng.random_range(1..rows))
                    .filter(|&n| n != center)
                    .collect();
                let ex = CbowExample {
                    context,
                    center,
                    negatives,
                };
                let g = ex.gradient(&input, &output);
                epoch_loss += g.loss;
                examples += 1;
                for (tok, grad) in &g.output_grads {
                    for (u, d) in output.row_mut(*tok).iter_mut().zip(grad) {
                        *u -= lr * d;
                    }
                }
                for &c in &ex.context {
                    for (v, d) in input.row_mut(c).iter_mut().zip(&g.context_grad) {
                        *v -= lr * d;
                    }
                }
            }
        }
        history.push(if examples > 0 { epoch_loss / examples as f64 } else { 0.0 });
    }

    Ok((
        EmbeddingTable {
            kind: vocab.kind(),
            vectors: input,
        },
        history,
    ))
}

pub fn train_cbow<S: AsRef<str>>(corpus: &[S], vocab: &TokenVocab, config: &CbowConfig) -> Result<EmbeddingTable> {
    train_cbow_logged(corpus, vocab, config).map(|(t, _)| t)
}

/// Look up each token of `sequence`, keeping at most [`SEQ_LEN`] rows.
pub fn embed_sequence(
    node_id: &str,
    sequence: &str,
    vocab: &TokenVocab,
    table: &EmbeddingTable,
) -> Result<SequenceMatrix> {
    let ids = tokenize(sequence, vocab)?;
    let dim = table.dim();
    let mut values = Tensor::zeros(&[SEQ_LEN, dim]);
    for (r, &id) in ids.iter().take(SEQ_LEN).enumerate() {
        values.row_mut(r).copy_from_slice(table.row(id));
    }
    Ok(SequenceMatrix {
        node_id: node_id.to_string(),
        values,
    })
}

/// Vocabularies and tables for both node kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub drug_vocab: TokenVocab,
    pub drug_table: EmbeddingTable,
    pub mirna_vocab: TokenVocab,
    pub mirna_table: EmbeddingTable,
}

impl EmbeddingSet {
    /// Separate CBOW models for SMILES and nucleotide sequences.
    pub fn train(dataset: &Dataset, config: &CbowConfig) -> Result<EmbeddingSet> {
        let smiles: Vec<&str> = dataset.drugs().iter().map(|d| d.smiles.as_str()).collect();
        let seqs: Vec<&str> = dataset.mirnas().iter().map(|m| m.sequence.as_str()).collect();
        let drug_vocab = build_vocab(&smiles, Kind::Drug)?;
        let mirna_vocab = build_vocab(&seqs, Kind::Mirna)?;
        let drug_table = train_cbow(&smiles, &drug_vocab, config)?;
        let mirna_table = train_cbow(&seqs, &mirna_vocab, config)?;
        Ok(EmbeddingSet {
            drug_vocab,
            drug_table,
            mirna_vocab,
            mirna_table,
        })
    }

    /// Sequence matrices for every node, drugs first.
    pub fn node_matrices(&self, dataset: &Dataset) -> Result<Vec<SequenceMatrix>> {
        let drugs = dataset
            .drugs()
            .iter()
            .map(|d| embed_sequence(&d.drug_id, &d.smiles, &self.drug_vocab, &self.drug_table));
        let mirnas = dataset
            .mirnas()
            .iter()
            .map(|m| embed_sequence(&m.mirna_id, &m.sequence, &self.mirna_vocab, &self.mirna_table));
        drugs.chain(mirnas).collect()
    }
}

/// Stack sequence matrices into an `n × (SEQ_LEN·TOKEN_DIM)` feature matrix.
pub fn flatten_features(matrices: &[SequenceMatrix]) -> Tensor {
    let width = SEQ_LEN * TOKEN_DIM;
    let mut data = Vec::with_capacity(matrices.len() * width);
    for m in matrices {
        data.extend_from_slice(m.values.data());
    }
    Tensor::matrix(matrices.len(), width, data)
}
