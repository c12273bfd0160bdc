//! Finite-difference verification of the full model loss on a six-node toy graph.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{finite_difference_check, Tape};
use crate::error::Result;
use crate::graph::{laplacian_pe, BipartiteGraph};
use crate::model::{attention_mask, forward, init_params, BoundParams, GraphInputs, ModelConfig, ModelParams};
use crate::tensor::Tensor;

/// Central-difference step.
pub const STEP: f64 = 1e-5;

/// A small graph plus labelled pairs to differentiate through.
#[derive(Debug, Clone)]
pub struct ToyProblem {
    pub config: ModelConfig,
    pub inputs: GraphInputs,
    pub params: ModelParams,
    pub pairs: Vec<(usize, usize)>,
    pub labels: Vec<f64>,
}

/// 2 drugs, 4 miRNAs, 3 edges; two layers of two heads at width 16, PE size 2.
pub fn toy_problem(seed: u64) -> Result<ToyProblem> {
    let config = ModelConfig {
        hidden: 16,
        layers: 2,
        heads: 2,
        pe_dim: 2,
        mlp_widths: [16, 8],
        ..ModelConfig::default()
    };
    let positives = [(0, 0), (0, 1), (1, 2)];
    let negatives = [(0, 3), (1, 0), (1, 3)];
    let graph = BipartiteGraph::new(2, 4, &positives)?;
    let pe = laplacian_pe(&graph, config.pe_dim)?;

    // Token rows fill a short prefix; the rest is padding, as with real sequences.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lengths = [6, 9, 20, 22, 21, 23];
    let mut features = Tensor::zeros(&[6, config.feature_width()]);
    for (node, &len) in lengths.iter().enumerate() {
        for v in &mut features.row_mut(node)[..len * config.token_dim] {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    let params = init_params(&config, seed.wrapping_add(1))?;
    let pairs: Vec<_> = positives.iter().chain(&negatives).copied().collect();
    let labels = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0].to_vec();
    Ok(ToyProblem {
        inputs: GraphInputs {
            features: Rc::new(features),
            pe: pe.vectors,
            mask: attention_mask(&graph),
            n_drugs: 2,
        },
        config,
        params,
        pairs,
        labels,
    })
}

impl ToyProblem {
    /// Mean BCE and, when requested, gradients for every parameter in canonical order.
    pub fn loss(&self, params: &ModelParams, with_grads: bool) -> Result<(f64, Vec<Tensor>)> {
        let values = params.named().into_iter().map(|(_, p)| &p.value);
        self.loss_from(values, with_grads)
    }

    /// As [`ToyProblem::loss`] with parameter values supplied in canonical order.
    pub fn loss_from<'a>(&self, values: impl IntoIterator<Item = &'a Tensor>, with_grads: bool) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let bound = BoundParams::bind_values(&mut tape, self.config.layers, self.config.heads, values, with_grads);
        let signs = vec![1.0; self.config.pe_dim];
        let p = forward(&mut tape, &self.inputs, &bound, &self.config, &signs, &self.pairs)?;
        let loss = tape.bce(p, &self.labels)?;
        let value = tape.value(loss).data()[0];
        if !with_grads {
            return Ok((value, Vec::new()));
        }
        let grads = tape.backward(loss)?;
        let out = bound
            .vars()
            .into_iter()
            .map(|v| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(tape.value(v).shape())))
            .collect();
        Ok((value, out))
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    /// Worst relative error per named parameter.
    pub per_param: Vec<(String, f64)>,
    pub entries: usize,
}

impl GradcheckReport {
    pub fn worst(&self) -> f64 {
        self.per_param.iter().map(|p| p.1).fold(0.0, f64::max)
    }
}

/// Compare analytic gradients with central differences for every parameter entry.
pub fn run_gradcheck(seed: u64) -> Result<GradcheckReport> {
    let toy = toy_problem(seed)?;
    let (_, analytic) = toy.loss(&toy.params, true)?;
    let names: Vec<String> = toy.params.named().into_iter().map(|(n, _)| n).collect();
    let base = toy.params.values();
    let mut per_param = Vec::with_capacity(names.len());
    let mut entries = 0;
    for (idx, name) in names.into_iter().enumerate() {
        let mut first = true;
        let err = finite_difference_check(
            |p: &[Tensor]| {
                // The first call asks for the analytic gradient; later calls only need values.
                if std::mem::take(&mut first) {
                    return Ok((0.0, vec![analytic[idx].clone()]));
                }
                let values = base.iter().enumerate().map(|(i, t)| if i == idx { &p[0] } else { t });
                let (v, _) = toy.loss_from(values, false)?;
                Ok((v, vec![]))
            },
            std::slice::from_ref(&base[idx]),
            STEP,
        )?;
        entries += base[idx].len();
        per_param.push((name, err));
    }
    Ok(GradcheckReport { per_param, entries })
}
