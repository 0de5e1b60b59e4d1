//! Plain-text graph directory.
//!
//! ```text
//! edges.txt     one "u v" pair per line, whitespace separated; '#' starts a comment
//! features.csv  N rows of d comma-separated reals, no header
//! labels.csv    N lines, one class index each
//! masks.csv     N lines, one of: train, val, test, -
//! ```
//!
//! Node ids are 0-based row indices. The class count is `max(label) + 1`.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::invalid;
use crate::error::Result;
use crate::graph::{Graph, Split};

fn read_csv_rows(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| invalid(path, e.to_string()))?;
    reader
        .records()
        .map(|r| r.map_err(|e| invalid(path, e.to_string())))
        .filter(|r| !matches!(r, Ok(rec) if rec.iter().all(str::is_empty)))
        .collect()
}

pub fn load_plain(dir: &Path) -> Result<Graph> {
    let feat_path = dir.join("features.csv");
    let rows = read_csv_rows(&feat_path)?;
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    let mut values = Vec::with_capacity(n * d);
    for (i, rec) in rows.iter().enumerate() {
        if rec.len() != d {
            return Err(invalid(
                &feat_path,
                format!("row {i} has {} columns, expected {d}", rec.len()),
            ));
        }
        for field in rec {
            values.push(
                field
                    .parse::<f64>()
                    .map_err(|e| invalid(&feat_path, format!("row {i}: {field:?}: {e}")))?,
            );
        }
    }
    let features = Array2::from_shape_vec((n, d), values).expect("checked shape");

    let label_path = dir.join("labels.csv");
    let labels: Vec<usize> = read_csv_rows(&label_path)?
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            rec.get(0)
                .unwrap_or("")
                .parse::<usize>()
                .map_err(|e| invalid(&label_path, format!("line {}: {e}", i + 1)))
        })
        .collect::<Result<_>>()?;
    if labels.len() != n {
        return Err(invalid(
            &label_path,
            format!("{} labels for {n} feature rows", labels.len()),
        ));
    }
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);

    let mask_path = dir.join("masks.csv");
    let tokens = read_csv_rows(&mask_path)?;
    if tokens.len() != n {
        return Err(invalid(
            &mask_path,
            format!("{} mask entries for {n} nodes", tokens.len()),
        ));
    }
    let mut split = Split::empty(n);
    for (i, rec) in tokens.iter().enumerate() {
        match rec.get(0).unwrap_or("") {
            "train" => split.train[i] = true,
            "val" => split.val[i] = true,
            "test" => split.test[i] = true,
            "-" | "" => {}
            other => {
                return Err(invalid(
                    &mask_path,
                    format!("line {}: unknown mask token {other:?}", i + 1),
                ))
            }
        }
    }

    let edge_path = dir.join("edges.txt");
    let text = fs::read_to_string(&edge_path).map_err(|e| invalid(&edge_path, e.to_string()))?;
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace().map(str::parse::<usize>);
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(u)), Some(Ok(v)), None) => edges.push((u, v)),
            _ => {
                return Err(invalid(
                    &edge_path,
                    format!("line {}: expected two node ids", lineno + 1),
                ))
            }
        }
    }
    Graph::new(features, edges, labels, num_classes, split)
        .map_err(|e| invalid(dir, e.to_string()))
}

pub fn save_plain(dir: &Path, graph: &Graph) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(dir.join("features.csv"))?;
    for row in graph.features().rows() {
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;

    let mut edges = fs::File::create(dir.join("edges.txt"))?;
    for e in graph.edges() {
        writeln!(edges, "{} {}", e.u(), e.v())?;
    }

    let labels: String = graph.labels().iter().map(|l| format!("{l}\n")).collect();
    fs::write(dir.join("labels.csv"), labels)?;

    let split = graph.split();
    let masks: String = (0..graph.num_nodes())
        .map(|i| {
            if split.train[i] {
                "train\n"
            } else if split.val[i] {
                "val\n"
            } else if split.test[i] {
                "test\n"
            } else {
                "-\n"
            }
        })
        .collect();
    fs::write(dir.join("masks.csv"), masks)?;
    Ok(())
}
