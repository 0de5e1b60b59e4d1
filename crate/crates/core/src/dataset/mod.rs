//! Dataset ingestion, synthetic fixtures and graph serialisation.

mod container;
mod pickle;
mod plain;
mod planetoid;
mod sbm;

use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::Graph;

pub use container::{load_graph, save_graph, CONTAINER_VERSION};
pub use plain::{load_plain, save_plain};
pub use planetoid::{load_planetoid, PlanetoidName};
pub use sbm::{generate_sbm, SbmParams};

/// Where a graph comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    /// Planetoid raw files (`ind.<name>.{x,y,tx,ty,allx,ally,graph,test.index}`)
    /// under `root`, either directly or in `root/<Name>/raw/`.
    Planetoid {
        name: PlanetoidName,
        root: PathBuf,
        normalize_features: bool,
    },
    /// Plain-text directory (see [`load_plain`]).
    Plain { dir: PathBuf },
    /// Binary container written by [`save_graph`].
    Container { path: PathBuf },
    Sbm(SbmParams),
}

impl DatasetSpec {
    pub fn name(&self) -> String {
        match self {
            DatasetSpec::Planetoid { name, .. } => name.as_str().into(),
            DatasetSpec::Plain { dir } => file_stem(dir),
            DatasetSpec::Container { path } => file_stem(path),
            DatasetSpec::Sbm(p) => format!(
                "sbm-{}x{}-seed{}",
                p.block_sizes.len(),
                p.block_sizes.first().copied().unwrap_or(0),
                p.seed
            ),
        }
    }

    pub fn load(&self) -> Result<Graph> {
        match self {
            DatasetSpec::Planetoid {
                name,
                root,
                normalize_features,
            } => load_planetoid(*name, root, *normalize_features),
            DatasetSpec::Plain { dir } => load_plain(dir),
            DatasetSpec::Container { path } => load_graph(path),
            DatasetSpec::Sbm(p) => generate_sbm(p),
        }
    }
}

fn file_stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "graph".into())
}

/// Scales every non-zero row to sum to one.
pub fn row_normalize(features: &mut Array2<f64>) {
    for mut row in features.rows_mut() {
        let s: f64 = row.sum();
        if s != 0.0 {
            row /= s;
        }
    }
}

/// Summary counts for a loaded graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphStats {
    pub nodes: usize,
    pub directed_edges: usize,
    pub features: usize,
    pub classes: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub intra_directed: usize,
    pub inter_directed: usize,
}

pub fn stats(graph: &Graph) -> GraphStats {
    let part = crate::graph::partition_edges_by_class(graph);
    GraphStats {
        nodes: graph.num_nodes(),
        directed_edges: graph.num_directed_edges(),
        features: graph.num_features(),
        classes: graph.num_classes(),
        train: graph.train_nodes().len(),
        val: graph.val_nodes().len(),
        test: graph.test_nodes().len(),
        intra_directed: 2 * part.intra_count(),
        inter_directed: 2 * part.inter_count(),
    }
}

impl std::fmt::Display for GraphStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "nodes={} directed_edges={} features={} classes={} train={} val={} test={} intra={} inter={}",
            self.nodes,
            self.directed_edges,
            self.features,
            self.classes,
            self.train,
            self.val,
            self.test,
            self.intra_directed,
            self.inter_directed
        )
    }
}

pub(crate) fn invalid(path: &Path, reason: impl Into<String>) -> Error {
    Error::load(path, reason)
}
