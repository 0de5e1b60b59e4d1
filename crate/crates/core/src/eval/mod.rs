//! Misclassification rate, degree statistics, embedding projections and
//! gamma sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::graph::{degree_histogram, Graph};
use crate::nn::{self, ModelParams};

mod report;
mod sweep;

pub use report::{
    csv_row, read_jsonl, reports_to_csv, summarize, write_csv, write_jsonl, EvalReport, SummaryRow,
    CSV_COLUMNS,
};
pub use sweep::{
    attack_once, explainer_seed, plan_seed, run_sweep, AttackOutcome, ModelCache, ModelKey,
    PlanVariant, SweepBudget, SweepConfig,
};

/// Fraction of test nodes whose prediction differs from the label.
pub fn mcr_from_predictions(predictions: &[usize], graph: &Graph) -> Result<f64> {
    let test = graph.test_nodes();
    if test.is_empty() {
        return Err(Error::EmptyMask);
    }
    if predictions.len() != graph.num_nodes() {
        return Err(Error::Shape(format!(
            "{} predictions for {} nodes",
            predictions.len(),
            graph.num_nodes()
        )));
    }
    let wrong = test
        .iter()
        .filter(|&&v| predictions[v] != graph.labels()[v])
        .count();
    Ok(wrong as f64 / test.len() as f64)
}

/// Misclassification rate of the model on the graph's test nodes.
pub fn mcr(params: &ModelParams, graph: &Graph) -> Result<f64> {
    mcr_from_predictions(&nn::predict(params, graph)?, graph)
}

/// Total-variation distance between the normalised degree histograms.
pub fn degree_distance(g: &Graph, g_r: &Graph) -> f64 {
    let normalised = |g: &Graph| -> BTreeMap<usize, f64> {
        let n = g.num_nodes().max(1) as f64;
        degree_histogram(g)
            .into_iter()
            .map(|(d, c)| (d, c as f64 / n))
            .collect()
    };
    let (p, q) = (normalised(g), normalised(g_r));
    let mut keys: Vec<usize> = p.keys().chain(q.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    let sum: f64 = keys
        .iter()
        .map(|k| (p.get(k).unwrap_or(&0.0) - q.get(k).unwrap_or(&0.0)).abs())
        .sum();
    (0.5 * sum).min(1.0)
}

/// `degree,count` rows.
pub fn degree_histogram_csv(graph: &Graph) -> String {
    let mut s = String::from("degree,count\n");
    for (d, c) in degree_histogram(graph) {
        writeln!(s, "{d},{c}").unwrap();
    }
    s
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Guards the overlap ratio against a zero spread.
pub const SPREAD_EPS: f64 = 1e-12;

/// Class separation of an embedding: mean distance between class centroids
/// divided by the mean distance of a node to its own class centroid. Larger
/// means better separated classes; more overlap lowers it.
pub fn overlap_score(embeddings: &Matrix, labels: &[usize]) -> f64 {
    let d = embeddings.ncols();
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for (row, &l) in embeddings.rows().into_iter().zip(labels) {
        let entry = sums.entry(l).or_insert_with(|| (vec![0.0; d], 0));
        for (acc, x) in entry.0.iter_mut().zip(row) {
            *acc += x;
        }
        entry.1 += 1;
    }
    let centroids: BTreeMap<usize, Vec<f64>> = sums
        .into_iter()
        .map(|(l, (s, c))| (l, s.into_iter().map(|x| x / c as f64).collect()))
        .collect();
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    };
    let cs: Vec<&Vec<f64>> = centroids.values().collect();
    let mut inter = 0.0;
    let mut pairs = 0usize;
    for i in 0..cs.len() {
        for j in i + 1..cs.len() {
            inter += dist(cs[i], cs[j]);
            pairs += 1;
        }
    }
    if pairs == 0 {
        return 0.0;
    }
    inter /= pairs as f64;
    let spread: f64 = embeddings
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, l)| dist(row.as_slice().expect("row-major"), &centroids[l]))
        .sum::<f64>()
        / labels.len() as f64;
    inter / spread.max(SPREAD_EPS)
}

/// Rows projected on the top two principal components. Each component's
/// sign is fixed so that its largest-magnitude loading is positive.
pub fn pca_2d(data: &Matrix) -> Vec<(f64, f64)> {
    let (n, d) = data.dim();
    if n == 0 {
        return Vec::new();
    }
    let mean = data.mean_axis(ndarray::Axis(0)).expect("non-empty");
    let centred = DMatrix::from_fn(n, d, |i, j| data[[i, j]] - mean[j]);
    let cov = centred.transpose() * &centred / (n.max(2) - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let component = |k: usize| -> Option<Vec<f64>> {
        let c = eig.eigenvectors.column(*order.get(k)?);
        let pivot = c.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        Some(c.iter().map(|x| sign * x).collect())
    };
    let project = |c: &Option<Vec<f64>>, i: usize| -> f64 {
        c.as_ref()
            .map_or(0.0, |c| (0..d).map(|j| centred[(i, j)] * c[j]).sum())
    };
    let (c0, c1) = (component(0), component(1));
    (0..n).map(|i| (project(&c0, i), project(&c1, i))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedNode {
    pub node: usize,
    pub class: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingProjection {
    pub nodes: Vec<ProjectedNode>,
    /// [`overlap_score`] of the final-layer embeddings.
    pub overlap: f64,
}

impl EmbeddingProjection {
    /// `node,class,x,y` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("node,class,x,y\n");
        for p in &self.nodes {
            writeln!(s, "{},{},{},{}", p.node, p.class, p.x, p.y).unwrap();
        }
        s
    }
}

/// 2-D PCA of the model's final-layer outputs on `graph`, with the overlap
/// score of those outputs.
pub fn embedding_projection(params: &ModelParams, graph: &Graph) -> Result<EmbeddingProjection> {
    let z = nn::logits(params, graph)?;
    let coords = pca_2d(&z);
    let nodes = coords
        .into_iter()
        .enumerate()
        .map(|(node, (x, y))| ProjectedNode {
            node,
            class: graph.labels()[node],
            x,
            y,
        })
        .collect();
    Ok(EmbeddingProjection {
        nodes,
        overlap: overlap_score(&z, graph.labels()),
    })
}
