//! Inter-class edge insertion and intra-class edge deletion among the
//! important nodes of a combined explanation mask.
//!
//! A plan inserts `n_ins` node pairs that have differing labels, are not yet
//! adjacent and lie in the mask's node set, and deletes `n_del` existing
//! edges whose endpoints share a label and both lie in that set. Pairs and
//! edges are drawn uniformly without replacement from a seeded RNG.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::CombinedMask;
use crate::graph::{Edge, Graph};
use crate::seed;

/// Insertion-dominant setting: more insertions than deletions, small net
/// edge change.
pub const INSERTION_DOMINANT: (f64, f64) = (3.0, 0.04);
/// Deletion-dominant setting: fewer insertions than deletions, large net
/// edge change.
pub const DELETION_DOMINANT: (f64, f64) = (1.0 / 3.0, 0.20);

/// How the number of perturbed edges is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BudgetMode {
    /// Net edge-count change `|n_ins - n_del|` equal to `target * |E|`.
    Edr { target: f64 },
    /// `n_ins + n_del` equal to `total`.
    Total { total: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackBudget {
    /// Ratio of inserted to deleted edges.
    pub gamma: f64,
    pub mode: BudgetMode,
    pub seed: u64,
}

impl AttackBudget {
    pub fn edr(gamma: f64, target: f64, seed: u64) -> Self {
        AttackBudget {
            gamma,
            mode: BudgetMode::Edr { target },
            seed,
        }
    }

    pub fn total(gamma: f64, total: usize, seed: u64) -> Self {
        AttackBudget {
            gamma,
            mode: BudgetMode::Total { total },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Parameter(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if let BudgetMode::Edr { target } = self.mode {
            if !(target.is_finite() && target >= 0.0) {
                return Err(Error::Parameter(format!("edr target must be >= 0, got {target}")));
            }
            if self.gamma == 1.0 && target > 0.0 {
                return Err(Error::Parameter(
                    "gamma = 1 leaves the edge count unchanged; use a total budget".into(),
                ));
            }
        }
        Ok(())
    }

    /// Requested `(n_ins, n_del)` for a graph with `num_edges` canonical
    /// edges.
    ///
    /// In EDR mode the net change `n_ins - n_del` is `round(target * |E|)`
    /// with the sign of `gamma - 1`; `n_del = round(net / (gamma - 1))` and
    /// `n_ins = n_del + net`, so the net change is exact and the ratio is
    /// `gamma` up to rounding. In total mode `n_del = round(total / (1 +
    /// gamma))` and `n_ins = total - n_del`.
    pub fn resolve(&self, num_edges: usize) -> Result<(usize, usize)> {
        self.validate()?;
        match self.mode {
            BudgetMode::Edr { target } => {
                let net = (target * num_edges as f64).round();
                if net == 0.0 {
                    return Ok((0, 0));
                }
                let n_del = (net / (self.gamma - 1.0).abs()).round();
                let n_ins = if self.gamma > 1.0 {
                    n_del + net
                } else {
                    n_del - net
                };
                Ok((n_ins.max(0.0) as usize, n_del as usize))
            }
            BudgetMode::Total { total } => {
                let n_del = (total as f64 / (1.0 + self.gamma)).round() as usize;
                Ok((total - n_del.min(total), n_del.min(total)))
            }
        }
    }
}

/// Edge operations turning a graph into its rewired version.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RewirePlan {
    pub insert: Vec<Edge>,
    pub delete: Vec<Edge>,
    pub seed: u64,
    /// Set when a candidate pool was smaller than the requested count.
    pub truncated: bool,
}

impl RewirePlan {
    pub fn is_empty(&self) -> bool {
        self.insert.is_empty() && self.delete.is_empty()
    }

    /// Plan undoing this one.
    pub fn reverse(&self) -> RewirePlan {
        RewirePlan {
            insert: self.delete.clone(),
            delete: self.insert.clone(),
            seed: self.seed,
            truncated: self.truncated,
        }
    }

    /// Symmetric-difference rate `(n_ins + n_del) / |E|`.
    pub fn edr_total(&self, graph: &Graph) -> f64 {
        ratio(self.insert.len() + self.delete.len(), graph.num_edges())
    }

    /// Net rate `|n_ins - n_del| / |E|`.
    pub fn edr_net(&self, graph: &Graph) -> f64 {
        ratio(self.insert.len().abs_diff(self.delete.len()), graph.num_edges())
    }

    /// Realised insertion/deletion ratio; infinite without deletions.
    pub fn gamma(&self) -> f64 {
        if self.delete.is_empty() {
            if self.insert.is_empty() { 1.0 } else { f64::INFINITY }
        } else {
            self.insert.len() as f64 / self.delete.len() as f64
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Net edge difference rate between a graph and its rewired version,
/// `| |E_r| - |E| | / |E|` on directed-edge counts.
pub fn edr_between(original: &Graph, rewired: &Graph) -> f64 {
    ratio(
        original.num_directed_edges().abs_diff(rewired.num_directed_edges()),
        original.num_directed_edges(),
    )
}

/// Existing intra-class edges with both endpoints in the mask's node set.
pub fn deletion_pool(graph: &Graph, mask: &CombinedMask) -> Vec<Edge> {
    graph
        .edges()
        .iter()
        .copied()
        .filter(|&e| {
            graph.is_intra_class(e) && mask.nodes.contains(&e.u()) && mask.nodes.contains(&e.v())
        })
        .collect()
}

/// Number of non-adjacent node pairs with differing labels inside the
/// mask's node set.
pub fn insertion_pool_size(graph: &Graph, mask: &CombinedMask) -> usize {
    let sizes: Vec<usize> = mask.class_buckets.iter().map(BTreeSet::len).collect();
    let n: usize = sizes.iter().sum();
    let same: usize = sizes.iter().map(|&s| s * s.saturating_sub(1) / 2).sum();
    let pairs = n * n.saturating_sub(1) / 2 - same;
    let existing = graph
        .edges()
        .iter()
        .filter(|e| {
            !graph.is_intra_class(**e) && mask.nodes.contains(&e.u()) && mask.nodes.contains(&e.v())
        })
        .count();
    pairs - existing
}

/// Every candidate insertion pair, in canonical order.
pub fn insertion_pool(graph: &Graph, mask: &CombinedMask) -> Vec<Edge> {
    let nodes: Vec<usize> = mask.nodes.iter().copied().collect();
    let labels = graph.labels();
    let mut pool = Vec::new();
    for (i, &a) in nodes.iter().enumerate() {
        for &b in &nodes[i + 1..] {
            if labels[a] != labels[b] && !graph.has_edge(a, b) {
                pool.push(Edge::new(a, b));
            }
        }
    }
    pool
}

/// Samples an explanation-guided plan.
pub fn build_plan(graph: &Graph, mask: &CombinedMask, budget: &AttackBudget) -> Result<RewirePlan> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (n_ins, n_del) = budget.resolve(graph.num_edges())?;
    let mut truncated = false;

    let insert = if n_ins == 0 {
        Vec::new()
    } else {
        let size = insertion_pool_size(graph, mask);
        if size == 0 {
            return Err(Error::EmptyPool(
                "no non-adjacent inter-class pairs among the important nodes".into(),
            ));
        }
        truncated |= size < n_ins;
        let mut rng = seed::rng(seed::derive(budget.seed, "plan-insert", 0));
        sample_insertions(graph, mask, n_ins.min(size), size, &mut rng)
    };

    let delete = if n_del == 0 {
        Vec::new()
    } else {
        let pool = deletion_pool(graph, mask);
        if pool.is_empty() {
            return Err(Error::EmptyPool(
                "no intra-class edges among the important nodes".into(),
            ));
        }
        truncated |= pool.len() < n_del;
        let mut rng = seed::rng(seed::derive(budget.seed, "plan-delete", 0));
        let mut picked: Vec<Edge> = index::sample(&mut rng, pool.len(), n_del.min(pool.len()))
            .into_iter()
            .map(|i| pool[i])
            .collect();
        picked.sort_unstable();
        picked
    };

    if truncated {
        log::warn!(
            "candidate pool too small: requested {n_ins} insertions / {n_del} deletions, got {} / {}",
            insert.len(),
            delete.len()
        );
    }
    Ok(RewirePlan {
        insert,
        delete,
        seed: budget.seed,
        truncated,
    })
}

/// Uniform sample of `count` pairs from the insertion pool of size `size`.
/// Sparse requests use rejection sampling over node pairs; dense ones
/// enumerate the pool.
fn sample_insertions(
    graph: &Graph,
    mask: &CombinedMask,
    count: usize,
    size: usize,
    rng: &mut impl Rng,
) -> Vec<Edge> {
    let mut picked: Vec<Edge> = if count.saturating_mul(4) <= size {
        let nodes: Vec<usize> = mask.nodes.iter().copied().collect();
        let labels = graph.labels();
        let mut seen = HashSet::with_capacity(count);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let a = nodes[rng.random_range(0..nodes.len())];
            let b = nodes[rng.random_range(0..nodes.len())];
            if labels[a] == labels[b] || graph.has_edge(a, b) {
                continue;
            }
            let e = Edge::new(a, b);
            if seen.insert(e) {
                out.push(e);
            }
        }
        out
    } else {
        let pool = insertion_pool(graph, mask);
        index::sample(rng, pool.len(), count)
            .into_iter()
            .map(|i| pool[i])
            .collect()
    };
    picked.sort_unstable();
    picked
}

/// Same budget as [`build_plan`] with pools over every node of the graph.
pub fn random_baseline_plan(graph: &Graph, budget: &AttackBudget) -> Result<RewirePlan> {
    build_plan(graph, &CombinedMask::all_nodes(graph), budget)
}

/// Checks that `plan` can be applied to `graph`.
pub fn check_plan(graph: &Graph, plan: &RewirePlan) -> Result<()> {
    let n = graph.num_nodes();
    let mut seen = HashSet::new();
    for e in plan.insert.iter().chain(&plan.delete) {
        if e.v() >= n {
            return Err(Error::PlanMismatch(format!("node {} out of range", e.v())));
        }
        if !seen.insert(*e) {
            return Err(Error::PlanMismatch(format!("pair {}-{} listed twice", e.u(), e.v())));
        }
    }
    if let Some(e) = plan.insert.iter().find(|e| graph.edge_position(**e).is_some()) {
        return Err(Error::PlanMismatch(format!("insertion {}-{} already present", e.u(), e.v())));
    }
    if let Some(e) = plan.delete.iter().find(|e| graph.edge_position(**e).is_none()) {
        return Err(Error::PlanMismatch(format!("deletion {}-{} absent", e.u(), e.v())));
    }
    Ok(())
}

/// The rewired graph; features, labels and split are unchanged.
pub fn apply_plan(graph: &Graph, plan: &RewirePlan) -> Result<Graph> {
    check_plan(graph, plan)?;
    let removed: HashSet<Edge> = plan.delete.iter().copied().collect();
    let edges = graph
        .edges()
        .iter()
        .copied()
        .filter(|e| !removed.contains(e))
        .chain(plan.insert.iter().copied());
    Ok(graph.with_edges(edges))
}

const PLAN_HEADER: &str = "# rewire-plan 1";

pub fn format_plan(plan: &RewirePlan) -> String {
    let mut s = String::new();
    writeln!(s, "{PLAN_HEADER}").unwrap();
    writeln!(s, "# seed {}", plan.seed).unwrap();
    writeln!(s, "# truncated {}", u8::from(plan.truncated)).unwrap();
    for e in &plan.insert {
        writeln!(s, "+ {} {}", e.u(), e.v()).unwrap();
    }
    for e in &plan.delete {
        writeln!(s, "- {} {}", e.u(), e.v()).unwrap();
    }
    s
}

pub fn parse_plan(text: &str, path: &Path) -> Result<RewirePlan> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(PLAN_HEADER) {
        return Err(Error::load(path, format!("missing header {PLAN_HEADER:?}")));
    }
    let mut plan = RewirePlan::default();
    for (i, line) in lines.enumerate() {
        let at = |msg: &str| Error::load(path, format!("line {}: {msg}", i + 2));
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["#", "seed", s] => plan.seed = s.parse().map_err(|_| at("bad seed"))?,
            ["#", "truncated", t] => plan.truncated = *t == "1",
            ["#", ..] => {}
            [op @ ("+" | "-"), a, b] => {
                let a: usize = a.parse().map_err(|_| at("bad node id"))?;
                let b: usize = b.parse().map_err(|_| at("bad node id"))?;
                let e = Edge::try_new(a, b).ok_or_else(|| at("self-loop"))?;
                if *op == "+" {
                    plan.insert.push(e);
                } else {
                    plan.delete.push(e);
                }
            }
            _ => return Err(at("expected `+ u v` or `- u v`")),
        }
    }
    Ok(plan)
}

pub fn save_plan(path: &Path, plan: &RewirePlan) -> Result<()> {
    fs::write(path, format_plan(plan))?;
    Ok(())
}

pub fn load_plan(path: &Path) -> Result<RewirePlan> {
    let text = fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
    parse_plan(&text, path)
}

#[cfg(test)]
mod tests;
