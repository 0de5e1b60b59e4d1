//! Planetoid citation datasets (Cora, CiteSeer, PubMed) in their raw
//! `ind.<name>.*` form, with the standard public split:
//! the first `|y|` nodes train, the next 500 validate, `test.index` tests.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::pickle::{self, Value};
use super::{invalid, row_normalize};
use crate::error::{Error, Result};
use crate::graph::{Graph, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanetoidName {
    Cora,
    CiteSeer,
    PubMed,
}

impl PlanetoidName {
    pub const ALL: [PlanetoidName; 3] = [PlanetoidName::Cora, PlanetoidName::CiteSeer, PlanetoidName::PubMed];

    pub fn as_str(self) -> &'static str {
        match self {
            PlanetoidName::Cora => "cora",
            PlanetoidName::CiteSeer => "citeseer",
            PlanetoidName::PubMed => "pubmed",
        }
    }

    fn dir_name(self) -> &'static str {
        match self {
            PlanetoidName::Cora => "Cora",
            PlanetoidName::CiteSeer => "CiteSeer",
            PlanetoidName::PubMed => "PubMed",
        }
    }
}

impl fmt::Display for PlanetoidName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlanetoidName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cora" => Ok(PlanetoidName::Cora),
            "citeseer" => Ok(PlanetoidName::CiteSeer),
            "pubmed" => Ok(PlanetoidName::PubMed),
            other => Err(Error::Parameter(format!("unknown Planetoid dataset {other:?}"))),
        }
    }
}

const SUFFIXES: [&str; 8] = ["x", "y", "tx", "ty", "allx", "ally", "graph", "test.index"];
const VAL_SIZE: usize = 500;

/// Directory holding `ind.<name>.*`: `root`, `root/<Name>/raw` or `root/<name>/raw`.
pub fn locate(name: PlanetoidName, root: &Path) -> Option<PathBuf> {
    let probe = format!("ind.{}.graph", name.as_str());
    [
        root.to_path_buf(),
        root.join(name.dir_name()).join("raw"),
        root.join(name.as_str()).join("raw"),
        root.join(name.dir_name()),
        root.join(name.as_str()),
    ]
    .into_iter()
    .find(|d| d.join(&probe).is_file())
}

fn read_pickle(path: &Path) -> Result<Value> {
    let bytes = fs::read(path).map_err(|e| invalid(path, e.to_string()))?;
    pickle::loads(&bytes).map_err(|e| invalid(path, e))
}

fn matrix(dir: &Path, name: PlanetoidName, suffix: &str) -> Result<Array2<f64>> {
    let path = dir.join(format!("ind.{}.{suffix}", name.as_str()));
    let v = read_pickle(&path)?;
    pickle::to_dense_matrix(&v).map_err(|e| invalid(&path, e))
}

/// Loads a Planetoid dataset from `root`, optionally row-normalising features.
pub fn load_planetoid(name: PlanetoidName, root: &Path, normalize_features: bool) -> Result<Graph> {
    let dir = locate(name, root).ok_or_else(|| {
        invalid(
            &root.join(format!("ind.{}.graph", name.as_str())),
            format!(
                "dataset files not found (looked in {}, {}/{}/raw)",
                root.display(),
                root.display(),
                name.dir_name()
            ),
        )
    })?;
    for suffix in SUFFIXES {
        let p = dir.join(format!("ind.{}.{suffix}", name.as_str()));
        if !p.is_file() {
            return Err(invalid(&p, "file missing"));
        }
    }
    let y = matrix(&dir, name, "y")?;
    let tx = matrix(&dir, name, "tx")?;
    let ty = matrix(&dir, name, "ty")?;
    let allx = matrix(&dir, name, "allx")?;
    let ally = matrix(&dir, name, "ally")?;
    let index_path = dir.join(format!("ind.{}.test.index", name.as_str()));
    let test_index: Vec<usize> = fs::read_to_string(&index_path)
        .map_err(|e| invalid(&index_path, e.to_string()))?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|e| invalid(&index_path, format!("line {}: {e}", i + 1)))
        })
        .collect::<Result<_>>()?;
    let graph_path = dir.join(format!("ind.{}.graph", name.as_str()));
    let adjacency = pickle::to_adjacency(&read_pickle(&graph_path)?)
        .map_err(|e| invalid(&graph_path, e))?;

    let raw = Raw { y, tx, ty, allx, ally };
    assemble(raw, &test_index, &adjacency, VAL_SIZE, normalize_features)
        .map_err(|e| invalid(&dir, e.to_string()))
}

struct Raw {
    y: Array2<f64>,
    tx: Array2<f64>,
    ty: Array2<f64>,
    allx: Array2<f64>,
    ally: Array2<f64>,
}

/// Stitches the raw pieces together the same way the reference loaders do.
fn assemble(
    raw: Raw,
    test_index: &[usize],
    adjacency: &[(usize, Vec<usize>)],
    val_size: usize,
    normalize_features: bool,
) -> Result<Graph> {
    let Raw { y, tx, ty, allx, ally } = raw;
    if test_index.is_empty() || test_index.len() != tx.nrows() || tx.nrows() != ty.nrows() {
        return Err(Error::InvalidGraph(format!(
            "{} test indices for {} tx rows and {} ty rows",
            test_index.len(),
            tx.nrows(),
            ty.nrows()
        )));
    }
    if allx.nrows() != ally.nrows() || allx.ncols() != tx.ncols() || ally.ncols() != ty.ncols() {
        return Err(Error::InvalidGraph("allx/ally/tx/ty shapes disagree".into()));
    }
    let mut sorted = test_index.to_vec();
    sorted.sort_unstable();
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if lo < allx.nrows() {
        return Err(Error::InvalidGraph(format!(
            "test index {lo} overlaps the {} allx rows",
            allx.nrows()
        )));
    }
    // Some test ids have no features (CiteSeer); they become all-zero rows.
    let span = hi - lo + 1;
    let mut tx_ext = Array2::zeros((span, tx.ncols()));
    let mut ty_ext = Array2::zeros((span, ty.ncols()));
    for (r, &idx) in sorted.iter().enumerate() {
        tx_ext.row_mut(idx - lo).assign(&tx.row(r));
        ty_ext.row_mut(idx - lo).assign(&ty.row(r));
    }
    let mut x = concatenate(Axis(0), &[allx.view(), tx_ext.view()]).expect("matching columns");
    let yy = concatenate(Axis(0), &[ally.view(), ty_ext.view()]).expect("matching columns");
    let n = x.nrows();

    // Row `sorted[r]` of the stacked matrix holds the entry meant for `test_index[r]`.
    let x_before = x.clone();
    let mut labels: Vec<usize> = yy.rows().into_iter().map(|r| argmax(r.iter())).collect();
    let labels_before = labels.clone();
    for (&dst, &src) in test_index.iter().zip(&sorted) {
        x.row_mut(dst).assign(&x_before.row(src));
        labels[dst] = labels_before[src];
    }
    if normalize_features {
        row_normalize(&mut x);
    }

    let n_train = y.nrows();
    if n_train + val_size > n {
        return Err(Error::InvalidGraph(format!(
            "{n_train} train + {val_size} val nodes exceed {n} nodes"
        )));
    }
    let train: Vec<usize> = (0..n_train).collect();
    let val: Vec<usize> = (n_train..n_train + val_size).collect();
    let split = Split::from_indices(n, &train, &val, test_index);

    let mut edges = Vec::new();
    for (src, nbrs) in adjacency {
        for &dst in nbrs {
            if *src >= n || dst >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({src}, {dst}) outside {n} nodes"
                )));
            }
            if *src != dst {
                edges.push((*src, dst));
            }
        }
    }
    Graph::new(x, edges, labels, ty.ncols(), split)
}

fn argmax<'a>(values: impl Iterator<Item = &'a f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn assemble_reorders_and_fills_gaps() {
        // Rows 0..2 labelled, test ids listed as [5, 2] with 3 and 4 missing.
        let raw = Raw {
            y: array![[1.0, 0.0]],
            allx: array![[1.0, 0.0], [0.0, 1.0]],
            ally: array![[1.0, 0.0], [0.0, 1.0]],
            tx: array![[3.0, 1.0], [1.0, 1.0]],
            ty: array![[0.0, 1.0], [1.0, 0.0]],
        };
        let adj = vec![(0, vec![1, 0]), (1, vec![0]), (5, vec![2, 2])];
        let g = assemble(raw, &[5, 2], &adj, 1, false).unwrap();
        assert_eq!(g.num_nodes(), 6);
        // tx row r belongs to sorted id r, then the file order permutes it.
        assert_eq!(g.features().row(5).to_vec(), vec![3.0, 1.0]);
        assert_eq!(g.features().row(2).to_vec(), vec![1.0, 1.0]);
        assert_eq!(g.features().row(3).to_vec(), vec![0.0, 0.0]);
        assert_eq!(g.labels(), &[0, 1, 0, 0, 0, 1]);
        assert_eq!(g.train_nodes(), vec![0]);
        assert_eq!(g.val_nodes(), vec![1]);
        assert_eq!(g.test_nodes(), vec![2, 5]);
        assert_eq!(g.num_edges(), 2);
    }

    /// Files written by `tests/fixtures/make_planetoid.py` with real numpy and
    /// scipy pickles.
    fn load_fixture(protocol: u32) -> Graph {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
            .join(format!("tests/fixtures/planetoid/p{protocol}"));
        let m = |s: &str| {
            let v = read_pickle(&dir.join(format!("ind.tiny.{s}"))).unwrap();
            pickle::to_dense_matrix(&v).unwrap()
        };
        let raw = Raw { y: m("y"), tx: m("tx"), ty: m("ty"), allx: m("allx"), ally: m("ally") };
        let adj = pickle::to_adjacency(&read_pickle(&dir.join("ind.tiny.graph")).unwrap()).unwrap();
        let index: Vec<usize> = fs::read_to_string(dir.join("ind.tiny.test.index"))
            .unwrap()
            .lines()
            .map(|l| l.parse().unwrap())
            .collect();
        assemble(raw, &index, &adj, 2, false).unwrap()
    }

    #[test]
    fn loads_numpy_and_scipy_pickles() {
        let feats = [
            [1, 0, 0, 1], [0, 1, 0, 0], [0, 0, 1, 1], [1, 1, 0, 0], [0, 0, 0, 1],
            [1, 0, 1, 0], [0, 1, 1, 0], [1, 0, 0, 0], [0, 0, 0, 0], [0, 1, 0, 1],
        ];
        for protocol in [2, 4] {
            let g = load_fixture(protocol);
            assert_eq!((g.num_nodes(), g.num_features(), g.num_classes()), (10, 4, 3));
            for (v, row) in feats.iter().enumerate() {
                let expected: Vec<f64> = row.iter().map(|&x| f64::from(x)).collect();
                assert_eq!(g.features().row(v).to_vec(), expected, "node {v}");
            }
            // Node 8 has no test row, so it keeps an all-zero label row.
            assert_eq!(g.labels(), &[0, 1, 2, 0, 1, 2, 0, 1, 0, 1]);
            assert_eq!(g.train_nodes(), vec![0, 1, 2]);
            assert_eq!(g.val_nodes(), vec![3, 4]);
            assert_eq!(g.test_nodes(), vec![6, 7, 9]);
            // The self-loop on node 1 is dropped.
            assert_eq!(g.num_edges(), 9);
            assert!(g.has_edge(5, 9) && g.has_edge(7, 0) && !g.has_edge(1, 1));
        }
    }

    #[test]
    fn argmax_prefers_first_maximum() {
        assert_eq!(argmax([0.0, 1.0, 1.0].iter()), 1);
        assert_eq!(argmax([0.0, 0.0].iter()), 0);
    }
}
