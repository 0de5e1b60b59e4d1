//! Stochastic block model fixtures.
//!
//! Node `i` of block `b` gets label `b` and features `e_b * signal + noise`,
//! where `e_b` is the one-hot block indicator padded with `extra_dims` pure
//! noise columns.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Split};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub signal: f64,
    pub noise: f64,
    pub extra_dims: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl SbmParams {
    /// `blocks` equal blocks of `size` nodes with the default feature model
    /// (signal 1.0, noise 0.1, 8 extra dims) and a 20/20/60 split.
    pub fn new(blocks: usize, size: usize, p_in: f64, p_out: f64, seed: u64) -> Self {
        SbmParams {
            block_sizes: vec![size; blocks],
            p_in,
            p_out,
            signal: 1.0,
            noise: 0.1,
            extra_dims: 8,
            train_fraction: 0.2,
            val_fraction: 0.2,
            seed,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_sizes.is_empty() {
            return Err(Error::Parameter("SBM needs at least one block".into()));
        }
        if let Some(b) = self.block_sizes.iter().position(|&s| s == 0) {
            return Err(Error::Parameter(format!("SBM block {b} is empty")));
        }
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Parameter(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if !(self.noise >= 0.0) || !self.signal.is_finite() {
            return Err(Error::Parameter("noise must be >= 0 and signal finite".into()));
        }
        let (t, v) = (self.train_fraction, self.val_fraction);
        if !(0.0..=1.0).contains(&t) || !(0.0..=1.0).contains(&v) || t + v > 1.0 {
            return Err(Error::Parameter(format!(
                "split fractions train={t} val={v} must be in [0, 1] and sum to at most 1"
            )));
        }
        Ok(())
    }
}

/// Deterministic SBM graph: same parameters, same graph.
pub fn generate_sbm(params: &SbmParams) -> Result<Graph> {
    params.validate()?;
    let n = params.num_nodes();
    let k = params.block_sizes.len();
    let labels: Vec<usize> = params
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
        .collect();

    let mut edge_rng = seed::rng(seed::derive(params.seed, "sbm-edges", 0));
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] {
                params.p_in
            } else {
                params.p_out
            };
            if p > 0.0 && edge_rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }

    let mut feat_rng = seed::rng(seed::derive(params.seed, "sbm-features", 0));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let d = k + params.extra_dims;
    let mut features = Array2::zeros((n, d));
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        for x in row.iter_mut() {
            *x = params.noise * normal.sample(&mut feat_rng);
        }
        row[labels[i]] += params.signal;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(params.seed, "sbm-split", 0)));
    let n_train = (params.train_fraction * n as f64).round() as usize;
    let n_val = ((params.val_fraction * n as f64).round() as usize).min(n - n_train);
    let split = Split::from_indices(
        n,
        &order[..n_train],
        &order[n_train..n_train + n_val],
        &order[n_train + n_val..],
    );
    Graph::new(features, edges, labels, k, split)
}
