//! Per-node edge explanations and their union.
//!
//! Each node gets a mask over the directed edges of its computational
//! subgraph ([`ComputationalSubgraph`]). Continuous scores come from either
//! a per-node optimisation ([`explain_node_gnnexplainer`]) or a shared edge
//! scorer ([`PgExplainer`]); the `top_k` highest scores are kept. The union of
//! all kept edges, as canonical edges, is the combined mask, and its
//! endpoints are the important nodes.

mod gnnexplainer;
mod pgexplainer;
mod subgraph;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::nn::ModelParams;

pub use gnnexplainer::explain_node_gnnexplainer;
pub use pgexplainer::{PgExplainer, PG_HIDDEN, PG_TEMPERATURE};
pub use subgraph::{ComputationalSubgraph, ExplainContext, RECEPTIVE_HOPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplainerMethod {
    GnnExplainer,
    PgExplainer,
}

impl ExplainerMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ExplainerMethod::GnnExplainer => "gnnexplainer",
            ExplainerMethod::PgExplainer => "pgexplainer",
        }
    }
}

impl fmt::Display for ExplainerMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExplainerMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gnnexplainer" | "gnn" => Ok(ExplainerMethod::GnnExplainer),
            "pgexplainer" | "pg" => Ok(ExplainerMethod::PgExplainer),
            other => Err(Error::Parameter(format!("unknown explainer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerConfig {
    pub method: ExplainerMethod,
    pub epochs: usize,
    pub lr: f64,
    pub top_k: usize,
    /// Weight of `sum(mask)`.
    pub size_coef: f64,
    /// Weight of the mean elementwise binary entropy of the mask.
    pub entropy_coef: f64,
    /// Initial mask logit for the per-node optimisation.
    pub init_logit: f64,
    pub seed: u64,
}

impl ExplainerConfig {
    /// 200 Adam steps at 0.01, keep 2 edges.
    pub fn gnnexplainer() -> Self {
        ExplainerConfig {
            method: ExplainerMethod::GnnExplainer,
            epochs: 200,
            lr: 0.01,
            top_k: 2,
            size_coef: 0.005,
            entropy_coef: 1.0,
            init_logit: 0.1,
            seed: 0,
        }
    }

    /// 30 epochs at 0.003, keep 1000 edges.
    pub fn pgexplainer() -> Self {
        ExplainerConfig {
            method: ExplainerMethod::PgExplainer,
            epochs: 30,
            lr: 0.003,
            top_k: 1000,
            size_coef: 0.005,
            ..ExplainerConfig::gnnexplainer()
        }
    }

    pub fn for_method(method: ExplainerMethod) -> Self {
        match method {
            ExplainerMethod::GnnExplainer => ExplainerConfig::gnnexplainer(),
            ExplainerMethod::PgExplainer => ExplainerConfig::pgexplainer(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 || self.epochs == 0 {
            return Err(Error::Parameter("top_k and explainer epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0) || self.size_coef < 0.0 || self.entropy_coef < 0.0 {
            return Err(Error::Parameter(
                "explainer lr must be positive and regularisation weights non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// `size_coef * sum(m) + entropy_coef * mean(H(m))` for a mask column `m`.
pub(crate) fn mask_regularizer(tape: &mut Tape, m: Var, cfg: &ExplainerConfig) -> Var {
    const EPS: f64 = 1e-15;
    let e = tape.shape(m).0 as f64;
    let total = tape.sum(m);
    let size = tape.scale(total, cfg.size_coef);
    let neg = tape.scale(m, -1.0);
    let one_minus = tape.add_scalar(neg, 1.0);
    let m_eps = tape.add_scalar(m, EPS);
    let ln_m = tape.ln(m_eps);
    let om_eps = tape.add_scalar(one_minus, EPS);
    let ln_om = tape.ln(om_eps);
    let a = tape.mul(m, ln_m);
    let b = tape.mul(one_minus, ln_om);
    let s = tape.add(a, b);
    let ent_sum = tape.sum(s);
    let ent = tape.scale(ent_sum, -cfg.entropy_coef / e);
    tape.add(size, ent)
}

/// Explanation of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationMask {
    pub node: usize,
    /// Directed edge ids of the maskable subgraph edges, ascending.
    pub edges: Vec<usize>,
    /// Continuous score per entry of `edges`.
    pub scores: Vec<f64>,
    /// Kept directed edge ids, ascending.
    pub selected: Vec<usize>,
    /// The node has no edges within reach; the mask is empty.
    pub isolated: bool,
}

/// Positions of the `k` largest scores; ties go to the lower position.
pub fn top_k_positions(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

impl ExplanationMask {
    pub fn isolated(node: usize) -> Self {
        ExplanationMask {
            node,
            edges: Vec::new(),
            scores: Vec::new(),
            selected: Vec::new(),
            isolated: true,
        }
    }

    pub fn from_scores(node: usize, edges: Vec<usize>, scores: Vec<f64>, k: usize) -> Self {
        assert_eq!(edges.len(), scores.len());
        let selected = top_k_positions(&scores, k)
            .into_iter()
            .map(|p| edges[p])
            .collect();
        ExplanationMask {
            node,
            isolated: edges.is_empty(),
            edges,
            scores,
            selected,
        }
    }

    /// Same scores, different threshold.
    pub fn with_top_k(&self, k: usize) -> Self {
        ExplanationMask::from_scores(self.node, self.edges.clone(), self.scores.clone(), k)
    }

    /// Indicator over `edges`.
    pub fn binary(&self) -> Vec<bool> {
        self.edges
            .iter()
            .map(|e| self.selected.binary_search(e).is_ok())
            .collect()
    }
}

/// Explains `nodes` in parallel. PGExplainer's scorer is trained once first.
pub fn explain_nodes(
    ctx: &ExplainContext,
    cfg: &ExplainerConfig,
    nodes: &[usize],
) -> Result<Vec<ExplanationMask>> {
    cfg.validate()?;
    if let Some(&v) = nodes.iter().find(|&&v| v >= ctx.graph.num_nodes()) {
        return Err(Error::Parameter(format!("node {v} out of range")));
    }
    match cfg.method {
        ExplainerMethod::GnnExplainer => Ok(nodes
            .par_iter()
            .map(|&v| explain_node_gnnexplainer(ctx, v, cfg))
            .collect()),
        ExplainerMethod::PgExplainer => {
            let scorer = PgExplainer::train(ctx, cfg)?;
            let z = pgexplainer::scorer_embeddings(ctx)?;
            Ok(nodes
                .par_iter()
                .map(|&v| scorer.explain(ctx, &z, v, cfg.top_k))
                .collect())
        }
    }
}

/// Masks for every node of the graph.
pub fn explain_all(
    params: &ModelParams,
    graph: &Graph,
    cfg: &ExplainerConfig,
) -> Result<Vec<ExplanationMask>> {
    let ctx = ExplainContext::new(params, graph)?;
    let nodes: Vec<usize> = (0..graph.num_nodes()).collect();
    explain_nodes(&ctx, cfg, &nodes)
}

/// Trains a fresh shared scorer and explains a single node.
pub fn explain_node_pgexplainer(
    ctx: &ExplainContext,
    v: usize,
    cfg: &ExplainerConfig,
) -> Result<ExplanationMask> {
    Ok(explain_nodes(ctx, cfg, &[v])?.remove(0))
}

/// Union of per-node masks over canonical edges, with the important nodes
/// and their class buckets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CombinedMask {
    /// Each important edge with the nodes whose explanation selected it.
    pub edges: BTreeMap<Edge, BTreeSet<usize>>,
    /// Endpoints of the important edges.
    pub nodes: BTreeSet<usize>,
    /// `class_buckets[c]`: important nodes with label `c`.
    pub class_buckets: Vec<BTreeSet<usize>>,
}

impl CombinedMask {
    pub fn from_edges(
        edges: BTreeMap<Edge, BTreeSet<usize>>,
        graph: &Graph,
    ) -> Self {
        let nodes: BTreeSet<usize> = edges.keys().flat_map(|e| [e.u(), e.v()]).collect();
        let mut class_buckets = vec![BTreeSet::new(); graph.num_classes()];
        for &v in &nodes {
            class_buckets[graph.labels()[v]].insert(v);
        }
        CombinedMask {
            edges,
            nodes,
            class_buckets,
        }
    }

    /// Mask marking every node important, with no mask edges.
    pub fn all_nodes(graph: &Graph) -> Self {
        let nodes: BTreeSet<usize> = (0..graph.num_nodes()).collect();
        let mut class_buckets = vec![BTreeSet::new(); graph.num_classes()];
        for &v in &nodes {
            class_buckets[graph.labels()[v]].insert(v);
        }
        CombinedMask {
            edges: BTreeMap::new(),
            nodes,
            class_buckets,
        }
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Important nodes of class `i` (deletions happen among these).
    pub fn class_bucket(&self, i: usize) -> &BTreeSet<usize> {
        &self.class_buckets[i]
    }

    /// Important nodes of class `i` or `j` (insertions connect a class-`i`
    /// node to a class-`j` node).
    pub fn pair_bucket(&self, i: usize, j: usize) -> BTreeSet<usize> {
        self.class_buckets[i]
            .union(&self.class_buckets[j])
            .copied()
            .collect()
    }

    /// Union with another mask over the same graph.
    pub fn union(&self, other: &CombinedMask) -> CombinedMask {
        let mut edges = self.edges.clone();
        for (e, src) in &other.edges {
            edges.entry(*e).or_default().extend(src);
        }
        let nodes: BTreeSet<usize> = self.nodes.union(&other.nodes).copied().collect();
        let class_buckets = self
            .class_buckets
            .iter()
            .zip(&other.class_buckets)
            .map(|(a, b)| a.union(b).copied().collect())
            .collect();
        CombinedMask {
            edges,
            nodes,
            class_buckets,
        }
    }
}

pub fn combine_masks(masks: &[ExplanationMask], graph: &Graph) -> CombinedMask {
    let mut edges: BTreeMap<Edge, BTreeSet<usize>> = BTreeMap::new();
    for m in masks {
        for &id in &m.selected {
            let (s, d) = graph.directed_edge(id);
            edges.entry(Edge::new(s, d)).or_default().insert(m.node);
        }
    }
    CombinedMask::from_edges(edges, graph)
}

const MASK_HEADER: &str = "# rewire-mask 1";

/// Writes `u v contributor...` lines, one per important edge.
pub fn save_combined_mask(path: &Path, mask: &CombinedMask) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{MASK_HEADER}")?;
    writeln!(out, "# u v explained-nodes")?;
    for (e, src) in &mask.edges {
        write!(out, "{} {}", e.u(), e.v())?;
        for s in src {
            write!(out, " {s}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_combined_mask(path: &Path, graph: &Graph) -> Result<CombinedMask> {
    let text = fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MASK_HEADER) {
        return Err(Error::load(path, format!("missing header {MASK_HEADER:?}")));
    }
    let n = graph.num_nodes();
    let mut edges: BTreeMap<Edge, BTreeSet<usize>> = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ids: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::load(path, format!("line {}: {e}", i + 2)))?;
        if ids.len() < 2 || ids.iter().any(|&x| x >= n) {
            return Err(Error::load(path, format!("line {}: bad edge record", i + 2)));
        }
        let e = Edge::try_new(ids[0], ids[1])
            .filter(|e| graph.edge_position(*e).is_some())
            .ok_or_else(|| Error::load(path, format!("line {}: not an edge of the graph", i + 2)))?;
        edges.entry(e).or_default().extend(&ids[2..]);
    }
    Ok(CombinedMask::from_edges(edges, graph))
}
