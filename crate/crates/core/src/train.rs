//! Fold splitting, Adam, full-batch training, cross-validation and case-study ranking.

use std::collections::HashSet;
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{bce_value, Parameter, Tape};
use crate::error::{Error, Result};
use crate::graph::{laplacian_pe, sample_negatives, BipartiteGraph, Pair};
use crate::ingest::Dataset;
use crate::metrics::{evaluate_scores, EvalReport, FoldMetrics};
use crate::model::{attention_mask, forward, init_params, predict, BoundParams, GraphInputs, ModelConfig, ModelParams};
use crate::seqembed::{flatten_features, EmbeddingSet};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    None,
    /// Sequence features replaced by zeros.
    Nemb,
    /// Positional encoding replaced by zeros.
    Npe,
}

impl Ablation {
    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::Nemb => "nemb",
            Ablation::Npe => "npe",
        }
    }

    pub fn parse(s: &str) -> Result<Ablation> {
        match s {
            "none" => Ok(Ablation::None),
            "nemb" => Ok(Ablation::Nemb),
            "npe" => Ok(Ablation::Npe),
            other => Err(Error::Config(format!("unknown ablation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub folds: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub ablation: Ablation,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 4e-5,
            weight_decay: 0.0033,
            epochs: 150,
            folds: 5,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            ablation: Ablation::None,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::Config("learning rate and epsilon must be positive, weight decay non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("at least 2 folds are required".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        self.model.validate()
    }
}

/// Mixes a base seed with a stream tag and index so derived generators are independent.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_TEST_NEG: u64 = 1;
const STREAM_TRAIN_NEG: u64 = 2;
const STREAM_INIT: u64 = 3;
const STREAM_SIGNS: u64 = 4;
const STREAM_CASE: u64 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub train_pos: Vec<Pair>,
    pub test_pos: Vec<Pair>,
    pub train_neg: Vec<Pair>,
    pub test_neg: Vec<Pair>,
}

impl FoldSplit {
    pub fn train_pairs(&self) -> (Vec<Pair>, Vec<f64>) {
        labelled(&self.train_pos, &self.train_neg)
    }

    pub fn test_pairs(&self) -> (Vec<Pair>, Vec<f64>) {
        labelled(&self.test_pos, &self.test_neg)
    }
}

fn labelled(pos: &[Pair], neg: &[Pair]) -> (Vec<Pair>, Vec<f64>) {
    let pairs = pos.iter().chain(neg).copied().collect();
    let labels = std::iter::repeat_n(1.0, pos.len()).chain(std::iter::repeat_n(0.0, neg.len())).collect();
    (pairs, labels)
}

/// Shuffle the positives once, cut them into `folds` contiguous test blocks, and
/// give each fold as many negatives as positives on both sides.
pub fn split_folds(n_drugs: usize, n_mirnas: usize, positives: &[Pair], folds: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if folds < 2 {
        return Err(Error::Config("at least 2 folds are required".into()));
    }
    if positives.len() < folds {
        return Err(Error::invalid(format!(
            "{} positives cannot fill {folds} folds",
            positives.len()
        )));
    }
    let known: HashSet<Pair> = positives.iter().copied().collect();
    let mut order = positives.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (order.len() / folds, order.len() % folds);
    let mut start = 0;
    let mut splits = Vec::with_capacity(folds);
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        let test_pos = order[start..start + size].to_vec();
        let train_pos: Vec<Pair> = order[..start].iter().chain(&order[start + size..]).copied().collect();
        start += size;
        let test_neg = sample_negatives(
            n_drugs,
            n_mirnas,
            &known,
            test_pos.len(),
            derive_seed(seed, STREAM_TEST_NEG, f as u64),
            &HashSet::new(),
        )?;
        let excluded: HashSet<Pair> = test_neg.iter().copied().collect();
        let train_neg = sample_negatives(
            n_drugs,
            n_mirnas,
            &known,
            train_pos.len(),
            derive_seed(seed, STREAM_TRAIN_NEG, f as u64),
            &excluded,
        )?;
        splits.push(FoldSplit {
            train_pos,
            test_pos,
            train_neg,
            test_neg,
        });
    }
    Ok(splits)
}

/// Mean binary cross-entropy; errors on an empty or mismatched batch.
pub fn loss(probs: &[f64], labels: &[f64]) -> Result<f64> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(Error::invalid(format!(
            "loss needs matching non-empty batches, got {} and {}",
            probs.len(),
            labels.len()
        )));
    }
    Ok(bce_value(probs, labels))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl From<&TrainConfig> for AdamConfig {
    fn from(c: &TrainConfig) -> Self {
        AdamConfig {
            learning_rate: c.learning_rate,
            weight_decay: c.weight_decay,
            beta1: c.beta1,
            beta2: c.beta2,
            epsilon: c.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Parameter>) -> AdamState {
        let (first, second) = params
            .into_iter()
            .map(|p| (Tensor::zeros(p.value.shape()), Tensor::zeros(p.value.shape())))
            .unzip();
        AdamState { step: 0, first, second }
    }
}

/// One Adam step with bias correction. Weight decay is decoupled: each value is
/// first scaled by `1 − lr·wd`, then moved by the Adam update.
pub fn adam_step(params: &mut [&mut Parameter], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != state.first.len() {
        return Err(Error::invalid(format!(
            "optimizer tracks {} tensors but {} were given",
            state.first.len(),
            params.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let shrink = 1.0 - cfg.learning_rate * cfg.weight_decay;
    for ((p, m), v) in params.iter_mut().zip(&mut state.first).zip(&mut state.second) {
        if p.value.shape() != m.shape() {
            return Err(Error::Shape {
                op: "adam_step",
                lhs: p.value.shape().to_vec(),
                rhs: m.shape().to_vec(),
            });
        }
        let Parameter { value, grad } = &mut **p;
        for (((x, g), m), v) in value.data_mut().iter_mut().zip(grad.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *x *= shrink;
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *x -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

/// Flattened sequence features for every node, drugs first.
#[derive(Debug, Clone)]
pub struct NodeFeatures {
    pub features: Rc<Tensor>,
    pub n_drugs: usize,
    pub n_mirnas: usize,
}

impl NodeFeatures {
    pub fn from_embeddings(dataset: &Dataset, embeddings: &EmbeddingSet) -> Result<NodeFeatures> {
        let matrices = embeddings.node_matrices(dataset)?;
        Ok(NodeFeatures {
            features: Rc::new(flatten_features(&matrices)),
            n_drugs: dataset.n_drugs(),
            n_mirnas: dataset.n_mirnas(),
        })
    }
}

/// Model inputs over the graph of `train_pos`, with the configured ablation applied.
pub fn training_inputs(nodes: &NodeFeatures, train_pos: &[Pair], config: &TrainConfig) -> Result<GraphInputs> {
    let graph = BipartiteGraph::new(nodes.n_drugs, nodes.n_mirnas, train_pos)?;
    let n = graph.n_nodes();
    if nodes.features.rows() != n || nodes.features.cols() != config.model.feature_width() {
        return Err(Error::Shape {
            op: "training_inputs",
            lhs: nodes.features.shape().to_vec(),
            rhs: vec![n, config.model.feature_width()],
        });
    }
    let pe = match config.ablation {
        Ablation::Npe => Tensor::zeros(&[n, config.model.pe_dim]),
        _ => laplacian_pe(&graph, config.model.pe_dim)?.vectors,
    };
    let features = match config.ablation {
        Ablation::Nemb => Rc::new(Tensor::zeros(nodes.features.shape())),
        _ => Rc::clone(&nodes.features),
    };
    Ok(GraphInputs {
        features,
        pe,
        mask: attention_mask(&graph),
        n_drugs: nodes.n_drugs,
    })
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: ModelParams,
    /// Training loss before each update.
    pub loss_history: Vec<f64>,
    pub inputs: GraphInputs,
}

/// Full-batch training over `pairs` on the graph of `train_pos`.
pub fn train_model(
    nodes: &NodeFeatures,
    train_pos: &[Pair],
    pairs: &[Pair],
    labels: &[f64],
    config: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainedModel> {
    config.validate()?;
    let inputs = training_inputs(nodes, train_pos, config)?;
    let mut params = init_params(&config.model, derive_seed(seed, STREAM_INIT, 0))?;
    let mut state = AdamState::new(params.named().into_iter().map(|(_, p)| p));
    let adam = AdamConfig::from(config);
    let mut sign_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SIGNS, 0));
    let mut loss_history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let signs: Vec<f64> = (0..config.model.pe_dim)
            .map(|_| if sign_rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, &params, true);
        let probs = forward(&mut tape, &inputs, &bound, &config.model, &signs, pairs)?;
        let loss = tape.bce(probs, labels)?;
        let value = tape.value(loss).data()[0];
        if !value.is_finite() {
            return Err(Error::invalid(format!("training loss became {value} at epoch {}", epoch + 1)));
        }
        let grads = tape.backward(loss)?;
        params.zero_grad();
        params.accumulate(&bound, &grads);
        adam_step(&mut params.params_mut(), &mut state, &adam)?;
        loss_history.push(value);
        on_epoch(epoch + 1, value);
    }
    Ok(TrainedModel {
        params,
        loss_history,
        inputs,
    })
}

/// Train on one fold; the fold index feeds the derived seeds.
pub fn train_fold(
    nodes: &NodeFeatures,
    split: &FoldSplit,
    config: &TrainConfig,
    fold: usize,
    on_epoch: impl FnMut(usize, f64),
) -> Result<TrainedModel> {
    let (pairs, labels) = split.train_pairs();
    train_model(nodes, &split.train_pos, &pairs, &labels, config, config.seed.wrapping_add(fold as u64), on_epoch)
}

/// Score the fold's test pairs on the training graph.
pub fn evaluate_fold(model: &TrainedModel, split: &FoldSplit, config: &ModelConfig) -> Result<(Vec<f64>, FoldMetrics)> {
    let (pairs, labels) = split.test_pairs();
    let scores = predict(&model.params, config, &model.inputs, &pairs)?;
    let metrics = evaluate_scores(&scores, &labels)?;
    Ok((scores, metrics))
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub report: EvalReport,
    pub splits: Vec<FoldSplit>,
    pub models: Vec<TrainedModel>,
}

/// Train and evaluate every fold.
pub fn run_cv(
    nodes: &NodeFeatures,
    positives: &[Pair],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, usize, f64),
) -> Result<CvOutcome> {
    config.validate()?;
    let splits = split_folds(nodes.n_drugs, nodes.n_mirnas, positives, config.folds, config.seed)?;
    let mut report = EvalReport::default();
    let mut models = Vec::with_capacity(splits.len());
    for (f, split) in splits.iter().enumerate() {
        let model = train_fold(nodes, split, config, f, |e, l| on_epoch(f + 1, e, l))?;
        let (_, metrics) = evaluate_fold(&model, split, &config.model)?;
        report.folds.push(metrics);
        models.push(model);
    }
    Ok(CvOutcome { report, splits, models })
}

/// Hold out every known association of `drug_id`, train on the rest, and rank
/// all miRNAs for that drug by predicted probability (ties by miRNA id).
pub fn case_study(
    dataset: &Dataset,
    nodes: &NodeFeatures,
    config: &TrainConfig,
    drug_id: &str,
) -> Result<Vec<(String, f64)>> {
    let drug = dataset
        .drug_position(drug_id)
        .ok_or_else(|| Error::invalid(format!("unknown drug '{drug_id}'")))?;
    let all = dataset.positive_pairs();
    let known: HashSet<Pair> = all.iter().copied().collect();
    let train_pos: Vec<Pair> = all.iter().copied().filter(|p| p.0 != drug).collect();
    if train_pos.is_empty() {
        return Err(Error::invalid(format!("no associations remain after removing '{drug_id}'")));
    }
    let held_out: HashSet<Pair> = (0..dataset.n_mirnas()).map(|m| (drug, m)).collect();
    let train_neg = sample_negatives(
        dataset.n_drugs(),
        dataset.n_mirnas(),
        &known,
        train_pos.len(),
        derive_seed(config.seed, STREAM_CASE, drug as u64),
        &held_out,
    )?;
    let (pairs, labels) = labelled(&train_pos, &train_neg);
    let model = train_model(nodes, &train_pos, &pairs, &labels, config, config.seed, |_, _| {})?;
    let candidates: Vec<Pair> = (0..dataset.n_mirnas()).map(|m| (drug, m)).collect();
    let scores = predict(&model.params, &config.model, &model.inputs, &candidates)?;
    let mut ranked: Vec<(String, f64)> = dataset
        .mirnas()
        .iter()
        .zip(scores)
        .map(|(m, s)| (m.mirna_id.clone(), s))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}
