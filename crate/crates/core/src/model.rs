//! The graph transformer: sequence projection, positional-encoding injection,
//! adjacency-masked multi-head attention layers, and the pair-scoring MLP.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Gradients, Mask, Parameter, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::seqembed::{SEQ_LEN, TOKEN_DIM};
use crate::tensor::Tensor;

/// How the adjacency restricts attention scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    /// Non-neighbours are left out of the softmax normalization.
    Exclusion,
    /// Scores are multiplied by the 0/1 adjacency before a plain softmax, so
    /// non-neighbours still receive weight `e^0 / Z`.
    LiteralHadamard,
}

impl MaskMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskMode::Exclusion => "exclusion",
            MaskMode::LiteralHadamard => "literal-hadamard",
        }
    }

    pub fn parse(s: &str) -> Result<MaskMode> {
        match s {
            "exclusion" => Ok(MaskMode::Exclusion),
            "literal-hadamard" => Ok(MaskMode::LiteralHadamard),
            other => Err(Error::Config(format!("unknown mask mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub pe_dim: usize,
    pub mlp_widths: [usize; 2],
    pub seq_len: usize,
    pub token_dim: usize,
    pub mask_mode: MaskMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::with_hidden(256)
    }
}

impl ModelConfig {
    /// Defaults with hidden size `d` and MLP widths `[d, d/2]`.
    pub fn with_hidden(d: usize) -> ModelConfig {
        ModelConfig {
            hidden: d,
            layers: 2,
            heads: 8,
            pe_dim: 8,
            mlp_widths: [d, d / 2],
            seq_len: SEQ_LEN,
            token_dim: TOKEN_DIM,
            mask_mode: MaskMode::Exclusion,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn feature_width(&self) -> usize {
        self.seq_len * self.token_dim
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.hidden,
            self.layers,
            self.heads,
            self.pe_dim,
            self.mlp_widths[0],
            self.mlp_widths[1],
            self.seq_len,
            self.token_dim,
        ];
        if positive.contains(&0) {
            return Err(Error::Config("model widths and counts must be positive".into()));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Per head, `d × d_k`.
    pub query: Vec<Parameter>,
    pub key: Vec<Parameter>,
    pub value: Vec<Parameter>,
    /// `d × d` head mixer.
    pub output: Parameter,
    /// `2d × d`.
    pub ffn_in: Parameter,
    /// `d × 2d`.
    pub ffn_out: Parameter,
    pub norm1_scale: Parameter,
    pub norm1_shift: Parameter,
    pub norm2_scale: Parameter,
    pub norm2_shift: Parameter,
}

/// Every learnable tensor of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `d × (seq_len · token_dim)`.
    pub input_proj: Parameter,
    /// `d × k`.
    pub pe_proj: Parameter,
    pub layers: Vec<LayerParams>,
    /// Pair MLP: `w1 × 2d`, `w2 × w1`, `2 × w2`.
    pub mlp: [Parameter; 3],
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Parameter {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
    Parameter::new(Tensor::matrix(rows, cols, data))
}

pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.hidden;
    let dk = config.head_dim();
    let input_proj = glorot(&mut rng, d, config.feature_width());
    let pe_proj = glorot(&mut rng, d, config.pe_dim);
    let layers = (0..config.layers)
        .map(|_| {
            let heads = |rng: &mut ChaCha8Rng| (0..config.heads).map(|_| glorot(rng, d, dk)).collect::<Vec<_>>();
            let query = heads(&mut rng);
            let key = heads(&mut rng);
            let value = heads(&mut rng);
            LayerParams {
                query,
                key,
                value,
                output: glorot(&mut rng, d, d),
                ffn_in: glorot(&mut rng, 2 * d, d),
                ffn_out: glorot(&mut rng, d, 2 * d),
                norm1_scale: Parameter::new(Tensor::filled(&[1, d], 1.0)),
                norm1_shift: Parameter::new(Tensor::zeros(&[1, d])),
                norm2_scale: Parameter::new(Tensor::filled(&[1, d], 1.0)),
                norm2_shift: Parameter::new(Tensor::zeros(&[1, d])),
            }
        })
        .collect();
    let [w1, w2] = config.mlp_widths;
    let mlp = [
        glorot(&mut rng, w1, 2 * d),
        glorot(&mut rng, w2, w1),
        glorot(&mut rng, 2, w2),
    ];
    Ok(ModelParams {
        input_proj,
        pe_proj,
        layers,
        mlp,
    })
}

impl ModelParams {
    /// Every parameter with a stable name, in canonical order.
    pub fn named(&self) -> Vec<(String, &Parameter)> {
        let mut out = vec![
            ("input_proj".to_string(), &self.input_proj),
            ("pe_proj".to_string(), &self.pe_proj),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (kind, group) in [("query", &layer.query), ("key", &layer.key), ("value", &layer.value)] {
                for (h, p) in group.iter().enumerate() {
                    out.push((format!("layer{l}.{kind}{h}"), p));
                }
            }
            out.push((format!("layer{l}.output"), &layer.output));
            out.push((format!("layer{l}.ffn_in"), &layer.ffn_in));
            out.push((format!("layer{l}.ffn_out"), &layer.ffn_out));
            out.push((format!("layer{l}.norm1_scale"), &layer.norm1_scale));
            out.push((format!("layer{l}.norm1_shift"), &layer.norm1_shift));
            out.push((format!("layer{l}.norm2_scale"), &layer.norm2_scale));
            out.push((format!("layer{l}.norm2_shift"), &layer.norm2_shift));
        }
        for (i, p) in self.mlp.iter().enumerate() {
            out.push((format!("mlp.w{}", i + 1), p));
        }
        out
    }

    /// Mutable parameters in the same order as [`ModelParams::named`].
    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = vec![&mut self.input_proj, &mut self.pe_proj];
        for layer in &mut self.layers {
            out.extend(layer.query.iter_mut());
            out.extend(layer.key.iter_mut());
            out.extend(layer.value.iter_mut());
            out.push(&mut layer.output);
            out.push(&mut layer.ffn_in);
            out.push(&mut layer.ffn_out);
            out.push(&mut layer.norm1_scale);
            out.push(&mut layer.norm1_shift);
            out.push(&mut layer.norm2_scale);
            out.push(&mut layer.norm2_shift);
        }
        out.extend(self.mlp.iter_mut());
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Parameter::zero_grad);
    }

    /// Add the gradients of `bound` into each parameter.
    pub fn accumulate(&mut self, bound: &BoundParams, grads: &Gradients) {
        for (p, v) in self.params_mut().into_iter().zip(bound.vars()) {
            if let Some(g) = grads.get(v) {
                p.accumulate(g);
            }
        }
    }

    pub fn values(&self) -> Vec<Tensor> {
        self.named().into_iter().map(|(_, p)| p.value.clone()).collect()
    }

    /// Replace values in canonical order.
    pub fn set_values(&mut self, values: &[Tensor]) -> Result<()> {
        let slots = self.params_mut();
        if slots.len() != values.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter tensors, got {}",
                slots.len(),
                values.len()
            )));
        }
        for (p, v) in slots.into_iter().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(Error::Shape {
                    op: "set_values",
                    lhs: p.value.shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
            p.value = v.clone();
        }
        Ok(())
    }
}

pub struct BoundLayer {
    pub query: Vec<Var>,
    pub key: Vec<Var>,
    pub value: Vec<Var>,
    pub output: Var,
    pub ffn_in: Var,
    pub ffn_out: Var,
    pub norm1: (Var, Var),
    pub norm2: (Var, Var),
}

/// Parameters recorded on a tape.
pub struct BoundParams {
    pub input_proj: Var,
    pub pe_proj: Var,
    pub layers: Vec<BoundLayer>,
    pub mlp: [Var; 3],
}

impl BoundParams {
    /// Record `params` on `tape`, differentiable when `trainable`.
    pub fn bind(tape: &mut Tape, params: &ModelParams, trainable: bool) -> BoundParams {
        let heads = params.layers.first().map_or(0, |l| l.query.len());
        let values = params.named().into_iter().map(|(_, p)| &p.value);
        BoundParams::bind_values(tape, params.layers.len(), heads, values, trainable)
    }

    /// Record tensors given in canonical order for a network with `layers`
    /// layers of `heads` heads each. Panics if the iterator runs short.
    pub fn bind_values<'a>(
        tape: &mut Tape,
        layers: usize,
        heads: usize,
        values: impl IntoIterator<Item = &'a Tensor>,
        trainable: bool,
    ) -> BoundParams {
        let mut values = values.into_iter();
        let mut put = || {
            let v = values.next().expect("too few parameter tensors").clone();
            if trainable {
                tape.variable(v)
            } else {
                tape.constant(v)
            }
        };
        let input_proj = put();
        let pe_proj = put();
        let layers = (0..layers)
            .map(|_| {
                let query = (0..heads).map(|_| put()).collect();
                let key = (0..heads).map(|_| put()).collect();
                let value = (0..heads).map(|_| put()).collect();
                BoundLayer {
                    query,
                    key,
                    value,
                    output: put(),
                    ffn_in: put(),
                    ffn_out: put(),
                    norm1: (put(), put()),
                    norm2: (put(), put()),
                }
            })
            .collect();
        let mlp = [put(), put(), put()];
        BoundParams {
            input_proj,
            pe_proj,
            layers,
            mlp,
        }
    }

    /// Vars in the canonical parameter order.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = vec![self.input_proj, self.pe_proj];
        for l in &self.layers {
            out.extend(&l.query);
            out.extend(&l.key);
            out.extend(&l.value);
            out.extend([l.output, l.ffn_in, l.ffn_out, l.norm1.0, l.norm1.1, l.norm2.0, l.norm2.1]);
        }
        out.extend(self.mlp);
        out
    }
}

/// Attention mask: graph adjacency plus self-loops.
pub fn attention_mask(graph: &BipartiteGraph) -> Mask {
    let n = graph.n_nodes();
    let keep = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| i == j || graph.adjacent(i, j))
        .collect();
    Mask::new(n, n, keep)
}

/// `x · wᵀ` for a weight stored as `out × in`.
fn linear(tape: &mut Tape, x: Var, w: Var) -> Result<Var> {
    tape.matmul_t(x, w)
}

/// `h⁰ = ReLU(X Wᵀ)` with `X` the `n × (seq_len·token_dim)` flattened features.
pub fn input_projection(tape: &mut Tape, features: Var, w: Var) -> Result<Var> {
    let h = linear(tape, features, w)?;
    Ok(tape.relu(h))
}

/// `ĥ⁰ = h⁰ + (PE · diag(signs)) W_peᵀ`.
pub fn add_pe(tape: &mut Tape, h0: Var, pe: &Tensor, w_pe: Var, sign_flips: &[f64]) -> Result<Var> {
    if sign_flips.len() != pe.cols() {
        return Err(Error::Shape {
            op: "add_pe",
            lhs: pe.shape().to_vec(),
            rhs: vec![sign_flips.len()],
        });
    }
    let mut signed = pe.clone();
    for r in 0..signed.rows() {
        for (v, s) in signed.row_mut(r).iter_mut().zip(sign_flips) {
            *v *= s;
        }
    }
    let pe = tape.constant(signed);
    let proj = linear(tape, pe, w_pe)?;
    tape.add(h0, proj)
}

/// One attention + feed-forward block with residuals and batch normalization.
pub fn transformer_layer(
    tape: &mut Tape,
    h: Var,
    mask: &Mask,
    layer: &BoundLayer,
    config: &ModelConfig,
) -> Result<Var> {
    let scale = 1.0 / (config.head_dim() as f64).sqrt();
    let literal = match config.mask_mode {
        MaskMode::Exclusion => None,
        MaskMode::LiteralHadamard => Some(tape.constant(mask.to_tensor())),
    };
    let mut heads = Vec::with_capacity(layer.query.len());
    for ((q, k), v) in layer.query.iter().zip(&layer.key).zip(&layer.value) {
        let hq = tape.matmul(h, *q)?;
        let hk = tape.matmul(h, *k)?;
        let hv = tape.matmul(h, *v)?;
        let raw = tape.matmul_t(hq, hk)?;
        let scores = tape.scale(raw, scale);
        let attn = match literal {
            None => tape.masked_softmax_rows(scores, mask)?,
            Some(adj) => {
                let masked = tape.hadamard(scores, adj)?;
                tape.softmax_rows(masked)?
            }
        };
        heads.push(tape.matmul(attn, hv)?);
    }
    let cat = tape.concat(&heads)?;
    let mixed = linear(tape, cat, layer.output)?;
    let res1 = tape.add(h, mixed)?;
    let dot_h = tape.batchnorm(res1, layer.norm1.0, layer.norm1.1)?;
    let inner = linear(tape, dot_h, layer.ffn_in)?;
    let act = tape.relu(inner);
    let ddot_h = linear(tape, act, layer.ffn_out)?;
    let res2 = tape.add(dot_h, ddot_h)?;
    tape.batchnorm(res2, layer.norm2.0, layer.norm2.1)
}

/// Positive-class probability for each `(i, j)` node pair, as an `m × 1` column.
pub fn score_edges(tape: &mut Tape, h: Var, node_pairs: &[(usize, usize)], mlp: &[Var; 3]) -> Result<Var> {
    let n = tape.value(h).rows();
    if let Some(&(i, j)) = node_pairs.iter().find(|(i, j)| *i >= n || *j >= n) {
        return Err(Error::invalid(format!("pair ({i}, {j}) out of range for {n} nodes")));
    }
    let left: Vec<usize> = node_pairs.iter().map(|p| p.0).collect();
    let right: Vec<usize> = node_pairs.iter().map(|p| p.1).collect();
    let hi = tape.select_rows(h, &left)?;
    let hj = tape.select_rows(h, &right)?;
    let hij = tape.concat(&[hi, hj])?;
    let a1 = linear(tape, hij, mlp[0])?;
    let z1 = tape.relu(a1);
    let a2 = linear(tape, z1, mlp[1])?;
    let z2 = tape.relu(a2);
    let s = linear(tape, z2, mlp[2])?;
    let p = tape.softmax_rows(s)?;
    tape.select_column(p, 1)
}

/// Per-graph inputs shared by every forward pass over that graph.
#[derive(Debug, Clone)]
pub struct GraphInputs {
    /// `n × (seq_len · token_dim)`, shared with every tape built over the graph.
    pub features: Rc<Tensor>,
    /// `n × k`.
    pub pe: Tensor,
    pub mask: Mask,
    pub n_drugs: usize,
}

impl GraphInputs {
    /// Node-index pairs for `(drug, miRNA)` position pairs.
    pub fn node_pairs(&self, pairs: &[(usize, usize)]) -> Vec<(usize, usize)> {
        pairs.iter().map(|&(d, m)| (d, self.n_drugs + m)).collect()
    }
}

/// Full network on the tape; returns the `m × 1` probability column.
pub fn forward(
    tape: &mut Tape,
    inputs: &GraphInputs,
    bound: &BoundParams,
    config: &ModelConfig,
    sign_flips: &[f64],
    pairs: &[(usize, usize)],
) -> Result<Var> {
    let n = inputs.features.rows();
    if inputs.features.cols() != config.feature_width() || inputs.pe.rows() != n || inputs.pe.cols() != config.pe_dim {
        return Err(Error::Shape {
            op: "forward",
            lhs: inputs.features.shape().to_vec(),
            rhs: inputs.pe.shape().to_vec(),
        });
    }
    let x = tape.constant_shared(Rc::clone(&inputs.features));
    let h0 = input_projection(tape, x, bound.input_proj)?;
    let mut h = add_pe(tape, h0, &inputs.pe, bound.pe_proj, sign_flips)?;
    for layer in &bound.layers {
        h = transformer_layer(tape, h, &inputs.mask, layer, config)?;
    }
    score_edges(tape, h, &inputs.node_pairs(pairs), &bound.mlp)
}

/// Probabilities for `pairs` with all PE signs kept, without recording gradients.
pub fn predict(
    params: &ModelParams,
    config: &ModelConfig,
    inputs: &GraphInputs,
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params, false);
    let signs = vec![1.0; config.pe_dim];
    let p = forward(&mut tape, inputs, &bound, config, &signs, pairs)?;
    Ok(tape.value(p).data().to_vec())
}
