use std::collections::HashMap;
use std::sync::Arc;

use ndarray::Array2;

use crate::autodiff::{Matrix, Tape, Var};
use crate::graph::{Edge, Graph};
use crate::nn::{forward_on_tape, Architecture, Inputs, Mode, ModelParams, Structure};

/// Hops that can influence a node's output in a two-layer model.
pub const RECEPTIVE_HOPS: usize = 2;

/// The part of the graph that determines one node's logits.
///
/// Maskable edges are the directed edges among nodes within two hops of the
/// centre. GCN's degree normaliser also reads the degrees of two-hop nodes,
/// so for GCN the three-hop ring is kept as well, with its edges fixed at
/// weight one; the centre's logits then equal those on the full graph.
#[derive(Debug, Clone)]
pub struct ComputationalSubgraph {
    pub center: usize,
    /// Local index -> global node id; the centre is local 0.
    pub nodes: Vec<usize>,
    /// Global directed edge ids of the maskable edges, ascending.
    pub masked: Vec<usize>,
    structure: Structure,
}

impl ComputationalSubgraph {
    pub fn extract(graph: &Graph, center: usize, arch: Architecture) -> Self {
        let reach = match arch {
            Architecture::Gcn => RECEPTIVE_HOPS + 1,
            _ => RECEPTIVE_HOPS,
        };
        let hops = graph.bfs_hops(center, reach);
        let local: HashMap<usize, (usize, usize)> = hops
            .iter()
            .enumerate()
            .map(|(i, &(node, hop))| (node, (i, hop)))
            .collect();
        let adj = graph.adjacency();
        let mut masked = Vec::new();
        let mut fixed = Vec::new();
        for &(u, hu) in &hops {
            for &w in &adj[u] {
                let Some(&(_, hw)) = local.get(&w) else {
                    continue;
                };
                let k = graph
                    .edge_position(Edge::new(u, w))
                    .expect("adjacency edge exists");
                let id = 2 * k + usize::from(u > w);
                if hu <= RECEPTIVE_HOPS && hw <= RECEPTIVE_HOPS {
                    masked.push(id);
                } else {
                    fixed.push(id);
                }
            }
        }
        masked.sort_unstable();
        fixed.sort_unstable();
        let to_local = |id: usize| {
            let (s, d) = graph.directed_edge(id);
            (local[&s].0, local[&d].0)
        };
        let (src, dst): (Vec<usize>, Vec<usize>) =
            masked.iter().chain(&fixed).map(|&id| to_local(id)).unzip();
        let nodes: Vec<usize> = hops.iter().map(|&(n, _)| n).collect();
        ComputationalSubgraph {
            center,
            structure: Structure::new(nodes.len(), src.into(), dst.into()),
            nodes,
            masked,
        }
    }

    pub fn num_masked(&self) -> usize {
        self.masked.len()
    }

    pub fn num_fixed(&self) -> usize {
        self.structure.num_edges() - self.masked.len()
    }

    pub fn is_isolated(&self) -> bool {
        self.masked.is_empty()
    }

    /// First-layer projections restricted to the subgraph's nodes.
    pub fn local_projections(&self, projections: &[Matrix]) -> Vec<Matrix> {
        projections
            .iter()
            .map(|p| {
                let mut m = Array2::zeros((self.nodes.len(), p.ncols()));
                for (i, &g) in self.nodes.iter().enumerate() {
                    m.row_mut(i).assign(&p.row(g));
                }
                m
            })
            .collect()
    }

    /// Records the model's forward pass with `mask_weights` (`num_masked x 1`)
    /// on the maskable edges and unit weight elsewhere; returns the logits
    /// of every local node.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ModelParams,
        local_proj: Vec<Matrix>,
        mask_weights: Var,
    ) -> Var {
        let vars = constant_params(tape, params);
        let weights = if self.num_fixed() > 0 {
            let ones = tape.constant(Array2::ones((self.num_fixed(), 1)));
            tape.concat_rows(&[mask_weights, ones])
        } else {
            mask_weights
        };
        forward_on_tape(
            tape,
            params,
            &vars,
            Inputs::Projected(local_proj),
            &self.structure,
            weights,
            &mut Mode::Eval,
        )
        .logits
    }

    /// Centre logits for fixed mask weights.
    pub fn center_logits(
        &self,
        params: &ModelParams,
        projections: &[Matrix],
        mask_weights: &[f64],
    ) -> Vec<f64> {
        assert_eq!(mask_weights.len(), self.num_masked());
        let mut tape = Tape::new();
        let w = tape.constant(
            Array2::from_shape_vec((mask_weights.len(), 1), mask_weights.to_vec())
                .expect("column"),
        );
        let out = self.forward(&mut tape, params, self.local_projections(projections), w);
        tape.value(out).row(0).to_vec()
    }
}

/// Parameter handles for a forward pass over projected inputs. The
/// first-layer weights are already folded into the projections, so they are
/// replaced by empty placeholders instead of being copied onto the tape.
fn constant_params(tape: &mut Tape, params: &ModelParams) -> Vec<Var> {
    let first = match params.arch {
        Architecture::GraphSage => 2,
        _ => 1,
    };
    params
        .tensors
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if i < first {
                tape.constant(Array2::zeros((0, 0)))
            } else {
                tape.constant(t.clone())
            }
        })
        .collect()
}

/// Shared read-only state for explaining many nodes of one model.
#[derive(Debug, Clone)]
pub struct ExplainContext {
    pub params: Arc<ModelParams>,
    pub graph: Arc<Graph>,
    pub projections: Arc<Vec<Matrix>>,
    /// Clean eval-mode predictions; the explanation targets.
    pub predictions: Arc<Vec<usize>>,
}

impl ExplainContext {
    pub fn new(params: &ModelParams, graph: &Graph) -> crate::Result<Self> {
        let predictions = crate::nn::predict(params, graph)?;
        Ok(ExplainContext {
            params: Arc::new(params.clone()),
            graph: Arc::new(graph.clone()),
            projections: Arc::new(crate::nn::projections(params, graph)),
            predictions: Arc::new(predictions),
        })
    }

    pub fn subgraph(&self, v: usize) -> ComputationalSubgraph {
        ComputationalSubgraph::extract(&self.graph, v, self.params.arch)
    }
}
