//! Two-layer GCN, GAT and GraphSAGE node classifiers.
//!
//! Every architecture takes a per-directed-edge weight column. A weight
//! multiplies the edge's message (GCN, GraphSAGE) or its unnormalised
//! attention score (GAT), and it also enters the normaliser, so a weight of
//! zero is indistinguishable from removing the edge. The explainers rely on
//! that.

mod checkpoint;
mod train;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{mask_indices, Graph, SparseRows};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use train::{train, EpochRecord, TrainConfig, TrainingLog};

/// Slope of the leaky ReLU inside GAT attention scores.
pub const GAT_NEGATIVE_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Gcn,
    Gat,
    #[serde(rename = "graphsage")]
    GraphSage,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::Gcn, Architecture::Gat, Architecture::GraphSage];

    pub fn default_activation(self) -> Activation {
        match self {
            Architecture::Gat => Activation::Elu,
            _ => Activation::Relu,
        }
    }

    pub fn default_dropout(self) -> f64 {
        match self {
            Architecture::Gat => 0.6,
            _ => 0.5,
        }
    }

    /// Names of the parameter tensors in storage order.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Architecture::Gcn => &["w1", "w2"],
            Architecture::Gat => &["w1", "att1", "w2", "att2"],
            Architecture::GraphSage => &["w1_self", "w1_neigh", "w2_self", "w2_neigh"],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Gcn => "gcn",
            Architecture::Gat => "gat",
            Architecture::GraphSage => "graphsage",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Architecture::Gcn),
            "gat" => Ok(Architecture::Gat),
            "graphsage" | "sage" => Ok(Architecture::GraphSage),
            other => Err(Error::Parameter(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Elu,
}

/// Weights of a two-layer network chaining `d_in -> hidden -> classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub activation: Activation,
    pub d_in: usize,
    pub hidden: usize,
    pub classes: usize,
    /// Layout given by [`Architecture::param_names`].
    pub tensors: Vec<Matrix>,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan: usize) -> Matrix {
    let bound = (6.0 / fan as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

impl ModelParams {
    /// Glorot-uniform initialisation.
    pub fn init(
        arch: Architecture,
        d_in: usize,
        hidden: usize,
        classes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let tensors = match arch {
            Architecture::Gcn => vec![
                glorot(rng, d_in, hidden, d_in + hidden),
                glorot(rng, hidden, classes, hidden + classes),
            ],
            Architecture::Gat => vec![
                glorot(rng, d_in, hidden, d_in + hidden),
                glorot(rng, 2 * hidden, 1, hidden + 1),
                glorot(rng, hidden, classes, hidden + classes),
                glorot(rng, 2 * classes, 1, classes + 1),
            ],
            Architecture::GraphSage => vec![
                glorot(rng, d_in, hidden, d_in + hidden),
                glorot(rng, d_in, hidden, d_in + hidden),
                glorot(rng, hidden, classes, hidden + classes),
                glorot(rng, hidden, classes, hidden + classes),
            ],
        };
        ModelParams {
            arch,
            activation: arch.default_activation(),
            d_in,
            hidden,
            classes,
            tensors,
        }
    }

    pub fn expected_shapes(&self) -> Vec<(usize, usize)> {
        let (d, h, m) = (self.d_in, self.hidden, self.classes);
        match self.arch {
            Architecture::Gcn => vec![(d, h), (h, m)],
            Architecture::Gat => vec![(d, h), (2 * h, 1), (h, m), (2 * m, 1)],
            Architecture::GraphSage => vec![(d, h), (d, h), (h, m), (h, m)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.expected_shapes();
        let found: Vec<_> = self.tensors.iter().map(|t| t.dim()).collect();
        if expected != found {
            return Err(Error::Shape(format!(
                "{} parameters have shapes {found:?}, expected {expected:?}",
                self.arch
            )));
        }
        Ok(())
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors.iter().map(|t| t.dim()).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }
}

/// One weight per directed edge of the graph's symmetric edge list
/// (`2k` and `2k + 1` for canonical edge `k`).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights(pub Vec<f64>);

impl EdgeWeights {
    pub fn ones(graph: &Graph) -> Self {
        EdgeWeights(vec![1.0; graph.num_directed_edges()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_column(&self) -> Matrix {
        Array2::from_shape_vec((self.0.len(), 1), self.0.clone()).expect("column")
    }
}

/// Directed edges for message passing plus the self-loop-augmented copy used
/// by GCN and GAT (one loop per node, appended after the edges).
#[derive(Debug, Clone)]
pub struct Structure {
    pub num_nodes: usize,
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    src_loop: Arc<[usize]>,
    dst_loop: Arc<[usize]>,
}

impl Structure {
    pub fn new(num_nodes: usize, src: Arc<[usize]>, dst: Arc<[usize]>) -> Self {
        let mut src_loop = src.to_vec();
        let mut dst_loop = dst.to_vec();
        src_loop.extend(0..num_nodes);
        dst_loop.extend(0..num_nodes);
        Structure {
            num_nodes,
            src,
            dst,
            src_loop: src_loop.into(),
            dst_loop: dst_loop.into(),
        }
    }

    pub fn of_graph(graph: &Graph) -> Self {
        let ei = graph.edge_index();
        Structure::new(graph.num_nodes(), ei.src.clone(), ei.dst.clone())
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    /// `(src, dst)` of the augmented list, edges first then loops.
    pub fn with_loops(&self) -> (&[usize], &[usize]) {
        (&self.src_loop, &self.dst_loop)
    }
}

/// Forward-pass regime. Dropout is active only in `Train`.
pub enum Mode<'a> {
    Eval,
    Train {
        rng: &'a mut ChaCha8Rng,
        dropout: f64,
    },
}

/// First-layer input: either raw features (dropout applies to stored
/// entries) or rows already multiplied by the first-layer weights.
pub enum Inputs {
    Features(Arc<SparseRows>),
    /// One matrix per first-layer weight, in parameter order
    /// (`[XW1]` for GCN/GAT, `[XW1_self, XW1_neigh]` for GraphSAGE).
    Projected(Vec<Matrix>),
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    /// Hidden representation after the first layer's activation.
    pub hidden: Var,
    /// `N x classes` output of the second layer.
    pub logits: Var,
    /// GAT attention coefficients per layer, aligned with
    /// [`Structure::with_loops`]; empty for other architectures.
    pub attention: Vec<Var>,
}

fn dropout_const(tape: &mut Tape, x: Var, mode: &mut Mode<'_>) -> Var {
    match mode {
        Mode::Train { rng, dropout } if *dropout > 0.0 => {
            let p = *dropout;
            let keep = 1.0 / (1.0 - p);
            let mask = tape
                .value(x)
                .mapv(|_| if rng.random::<f64>() < p { 0.0 } else { keep });
            tape.mul_const(x, Arc::new(mask))
        }
        _ => x,
    }
}

fn activate(tape: &mut Tape, x: Var, act: Activation) -> Var {
    match act {
        Activation::Relu => tape.relu(x),
        Activation::Elu => tape.elu(x),
    }
}

/// Layer-one projections `X W` for the first-layer weights.
pub fn project_inputs(
    tape: &mut Tape,
    params: &ModelParams,
    vars: &[Var],
    x: Arc<SparseRows>,
    mode: &mut Mode<'_>,
) -> Vec<Var> {
    let scale: Option<Arc<[f64]>> = match mode {
        Mode::Train { rng, dropout } if *dropout > 0.0 => {
            let p = *dropout;
            let keep = 1.0 / (1.0 - p);
            Some(
                (0..x.nnz())
                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                    .collect(),
            )
        }
        _ => None,
    };
    let first: &[usize] = match params.arch {
        Architecture::GraphSage => &[0, 1],
        _ => &[0],
    };
    first
        .iter()
        .map(|&i| tape.sparse_matmul(x.clone(), scale.clone(), vars[i]))
        .collect()
}

/// Eval-mode projections, materialised for reuse across many forward passes.
pub fn projections(params: &ModelParams, graph: &Graph) -> Vec<Matrix> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.tensors.iter().map(|t| tape.constant(t.clone())).collect();
    project_inputs(&mut tape, params, &vars, graph.sparse_features(), &mut Mode::Eval)
        .into_iter()
        .map(|v| tape.value(v).clone())
        .collect()
}

fn gcn_coefficients(tape: &mut Tape, s: &Structure, w_loop: Var) -> Var {
    let n = s.num_nodes;
    let deg = tape.scatter_add(w_loop, s.dst_loop.clone(), n);
    let dinv = tape.powf(deg, -0.5);
    let left = tape.gather(dinv, s.src_loop.clone());
    let right = tape.gather(dinv, s.dst_loop.clone());
    let c = tape.mul(left, w_loop);
    tape.mul(c, right)
}

fn gat_layer(
    tape: &mut Tape,
    s: &Structure,
    h: Var,
    att: Var,
    w_loop: Var,
    mode: &mut Mode<'_>,
) -> (Var, Var) {
    let f = tape.shape(h).1;
    let a_target = tape.slice_rows(att, 0, f);
    let a_neigh = tape.slice_rows(att, f, 2 * f);
    let s_target = tape.matmul(h, a_target);
    let s_neigh = tape.matmul(h, a_neigh);
    let from = tape.gather(s_neigh, s.src_loop.clone());
    let to = tape.gather(s_target, s.dst_loop.clone());
    let raw = tape.add(from, to);
    let score = tape.leaky_relu(raw, GAT_NEGATIVE_SLOPE);
    // Per-target max shift for a stable softmax; constant, so gradients are
    // unchanged.
    let sv = tape.value(score);
    let mut max = vec![f64::NEG_INFINITY; s.num_nodes];
    for (e, &d) in s.dst_loop.iter().enumerate() {
        max[d] = max[d].max(sv[[e, 0]]);
    }
    let shift = Array2::from_shape_fn((s.dst_loop.len(), 1), |(e, _)| -max[s.dst_loop[e]]);
    let shifted = tape.shift(score, &shift);
    let ex = tape.exp(shifted);
    let num = tape.mul(ex, w_loop);
    let den = tape.scatter_add(num, s.dst_loop.clone(), s.num_nodes);
    let den_e = tape.gather(den, s.dst_loop.clone());
    let alpha = tape.div(num, den_e);
    let alpha_used = dropout_const(tape, alpha, mode);
    let out = tape.propagate(h, alpha_used, s.src_loop.clone(), s.dst_loop.clone());
    (out, alpha)
}

fn sage_aggregate(tape: &mut Tape, s: &Structure, h: Var, w: Var) -> Var {
    let deg = tape.scatter_add(w, s.dst.clone(), s.num_nodes);
    let inv = tape.safe_recip(deg);
    let inv_e = tape.gather(inv, s.dst.clone());
    let coef = tape.mul(w, inv_e);
    tape.propagate(h, coef, s.src.clone(), s.dst.clone())
}

/// Records a full forward pass on `tape`.
///
/// `vars` are the parameter handles in [`Architecture::param_names`] order,
/// `edge_weight` an `E x 1` column aligned with `structure.src`/`dst`.
pub fn forward_on_tape(
    tape: &mut Tape,
    params: &ModelParams,
    vars: &[Var],
    inputs: Inputs,
    structure: &Structure,
    edge_weight: Var,
    mode: &mut Mode<'_>,
) -> ForwardVars {
    let n = structure.num_nodes;
    assert_eq!(tape.shape(edge_weight), (structure.num_edges(), 1));
    let proj: Vec<Var> = match inputs {
        Inputs::Features(x) => project_inputs(tape, params, vars, x, mode),
        Inputs::Projected(ms) => ms.into_iter().map(|m| tape.constant(m)).collect(),
    };
    let needs_loops = !matches!(params.arch, Architecture::GraphSage);
    let w_loop = if needs_loops {
        let ones = tape.constant(Array2::ones((n, 1)));
        tape.concat_rows(&[edge_weight, ones])
    } else {
        edge_weight
    };
    match params.arch {
        Architecture::Gcn => {
            let coef = gcn_coefficients(tape, structure, w_loop);
            let (src, dst) = (structure.src_loop.clone(), structure.dst_loop.clone());
            let agg = tape.propagate(proj[0], coef, src.clone(), dst.clone());
            let hidden = activate(tape, agg, params.activation);
            let dropped = dropout_const(tape, hidden, mode);
            let z = tape.matmul(dropped, vars[1]);
            let logits = tape.propagate(z, coef, src, dst);
            ForwardVars {
                hidden,
                logits,
                attention: Vec::new(),
            }
        }
        Architecture::Gat => {
            let (agg, a1) = gat_layer(tape, structure, proj[0], vars[1], w_loop, mode);
            let hidden = activate(tape, agg, params.activation);
            let dropped = dropout_const(tape, hidden, mode);
            let z = tape.matmul(dropped, vars[2]);
            let (logits, a2) = gat_layer(tape, structure, z, vars[3], w_loop, mode);
            ForwardVars {
                hidden,
                logits,
                attention: vec![a1, a2],
            }
        }
        Architecture::GraphSage => {
            let neigh = sage_aggregate(tape, structure, proj[1], edge_weight);
            let pre = tape.add(proj[0], neigh);
            let hidden = activate(tape, pre, params.activation);
            let dropped = dropout_const(tape, hidden, mode);
            let z_self = tape.matmul(dropped, vars[2]);
            let z_neigh = tape.matmul(dropped, vars[3]);
            let neigh2 = sage_aggregate(tape, structure, z_neigh, edge_weight);
            let logits = tape.add(z_self, neigh2);
            ForwardVars {
                hidden,
                logits,
                attention: Vec::new(),
            }
        }
    }
}

fn check_inputs(params: &ModelParams, graph: &Graph, weights: &EdgeWeights) -> Result<()> {
    params.validate()?;
    if graph.num_features() != params.d_in {
        return Err(Error::Shape(format!(
            "graph has {} features, model expects {}",
            graph.num_features(),
            params.d_in
        )));
    }
    if weights.len() != graph.num_directed_edges() {
        return Err(Error::Shape(format!(
            "{} edge weights for {} directed edges",
            weights.len(),
            graph.num_directed_edges()
        )));
    }
    Ok(())
}

/// `N x classes` logits.
pub fn forward(
    params: &ModelParams,
    graph: &Graph,
    weights: &EdgeWeights,
    mut mode: Mode<'_>,
) -> Result<Matrix> {
    check_inputs(params, graph, weights)?;
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.tensors.iter().map(|t| tape.constant(t.clone())).collect();
    let w = tape.constant(weights.as_column());
    let out = forward_on_tape(
        &mut tape,
        params,
        &vars,
        Inputs::Features(graph.sparse_features()),
        &Structure::of_graph(graph),
        w,
        &mut mode,
    );
    Ok(tape.value(out.logits).clone())
}

/// Eval-mode logits with unit edge weights.
pub fn logits(params: &ModelParams, graph: &Graph) -> Result<Matrix> {
    forward(params, graph, &EdgeWeights::ones(graph), Mode::Eval)
}

/// Eval-mode hidden representation and logits with unit edge weights.
pub fn embeddings(params: &ModelParams, graph: &Graph) -> Result<(Matrix, Matrix)> {
    let weights = EdgeWeights::ones(graph);
    check_inputs(params, graph, &weights)?;
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.tensors.iter().map(|t| tape.constant(t.clone())).collect();
    let w = tape.constant(weights.as_column());
    let out = forward_on_tape(
        &mut tape,
        params,
        &vars,
        Inputs::Features(graph.sparse_features()),
        &Structure::of_graph(graph),
        w,
        &mut Mode::Eval,
    );
    Ok((tape.value(out.hidden).clone(), tape.value(out.logits).clone()))
}

/// GAT attention coefficients per layer (eval mode), aligned with the
/// self-loop-augmented edge list. Empty for other architectures.
pub fn attention_coefficients(
    params: &ModelParams,
    graph: &Graph,
    weights: &EdgeWeights,
) -> Result<Vec<Vec<f64>>> {
    check_inputs(params, graph, weights)?;
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.tensors.iter().map(|t| tape.constant(t.clone())).collect();
    let w = tape.constant(weights.as_column());
    let out = forward_on_tape(
        &mut tape,
        params,
        &vars,
        Inputs::Features(graph.sparse_features()),
        &Structure::of_graph(graph),
        w,
        &mut Mode::Eval,
    );
    Ok(out
        .attention
        .iter()
        .map(|&a| tape.value(a).iter().copied().collect())
        .collect())
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn argmax_rows(logits: &Matrix) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn predict(params: &ModelParams, graph: &Graph) -> Result<Vec<usize>> {
    Ok(argmax_rows(&logits(params, graph)?))
}

/// `(weight_decay / 2) * sum of squared parameters`, so its gradient is
/// `weight_decay * w`.
pub(crate) fn decay_term(tape: &mut Tape, vars: &[Var], weight_decay: f64) -> Option<Var> {
    if weight_decay == 0.0 {
        return None;
    }
    let mut total: Option<Var> = None;
    for &v in vars {
        let sq = tape.sum_squares(v);
        total = Some(match total {
            Some(t) => tape.add(t, sq),
            None => sq,
        });
    }
    total.map(|t| tape.scale(t, 0.5 * weight_decay))
}

#[derive(Debug, Clone)]
pub struct LossAndGrad {
    pub loss: f64,
    /// Same layout as [`ModelParams::tensors`].
    pub param_grads: Vec<Matrix>,
    /// One entry per directed edge.
    pub edge_weight_grad: Vec<f64>,
}

/// Eval-mode mean cross-entropy over `mask` plus the L2 decay term, with
/// gradients for every parameter and every edge weight.
pub fn loss_and_grad(
    params: &ModelParams,
    graph: &Graph,
    weights: &EdgeWeights,
    mask: &[bool],
    weight_decay: f64,
) -> Result<LossAndGrad> {
    check_inputs(params, graph, weights)?;
    let rows = mask_indices(mask);
    if rows.is_empty() {
        return Err(Error::EmptyMask);
    }
    let targets: Vec<usize> = rows.iter().map(|&r| graph.labels()[r]).collect();
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.tensors.iter().map(|t| tape.param(t.clone())).collect();
    let w = tape.param(weights.as_column());
    let out = forward_on_tape(
        &mut tape,
        params,
        &vars,
        Inputs::Features(graph.sparse_features()),
        &Structure::of_graph(graph),
        w,
        &mut Mode::Eval,
    );
    let ce = tape.softmax_cross_entropy(out.logits, rows.into(), targets.into());
    let loss = match decay_term(&mut tape, &vars, weight_decay) {
        Some(d) => tape.add(ce, d),
        None => ce,
    };
    tape.backward(loss);
    let zeros = |v: Var| Array2::zeros(tape.shape(v));
    Ok(LossAndGrad {
        loss: tape.scalar(loss),
        param_grads: vars
            .iter()
            .map(|&v| tape.grad(v).cloned().unwrap_or_else(|| zeros(v)))
            .collect(),
        edge_weight_grad: tape
            .grad(w)
            .map(|g| g.iter().copied().collect())
            .unwrap_or_else(|| vec![0.0; weights.len()]),
    })
}
