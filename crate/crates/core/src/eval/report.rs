use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sweep cell: a model, a plan and the resulting error rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub architecture: String,
    /// Explainer name, or `none` for whole-graph random plans.
    pub explainer: String,
    /// `guided` or `random`.
    pub variant: String,
    pub top_k: usize,
    /// Requested insertion/deletion ratio.
    pub gamma: f64,
    pub seed: u64,
    pub n_ins: usize,
    pub n_del: usize,
    pub edr_net: Option<f64>,
    pub edr_total: Option<f64>,
    pub mcr_clean: Option<f64>,
    pub mcr_attacked: Option<f64>,
    pub degree_tv_distance: Option<f64>,
    pub truncated: bool,
    /// `ok` or the error that stopped the cell.
    pub status: String,
    pub wall_time_ms: u64,
}

impl EvalReport {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// CSV column order. Wall time is left out so that reruns produce
/// byte-identical files; it is kept in the JSON lines output.
pub const CSV_COLUMNS: [&str; 16] = [
    "dataset",
    "architecture",
    "explainer",
    "variant",
    "top_k",
    "gamma",
    "seed",
    "n_ins",
    "n_del",
    "edr_net",
    "edr_total",
    "mcr_clean",
    "mcr_attacked",
    "degree_tv_distance",
    "truncated",
    "status",
];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_record(r: &EvalReport) -> [String; 16] {
    [
        r.dataset.clone(),
        r.architecture.clone(),
        r.explainer.clone(),
        r.variant.clone(),
        r.top_k.to_string(),
        r.gamma.to_string(),
        r.seed.to_string(),
        r.n_ins.to_string(),
        r.n_del.to_string(),
        opt(r.edr_net),
        opt(r.edr_total),
        opt(r.mcr_clean),
        opt(r.mcr_attacked),
        opt(r.degree_tv_distance),
        r.truncated.to_string(),
        r.status.clone(),
    ]
}

/// Header plus one row per report.
pub fn write_csv<W: Write>(out: W, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in reports {
        w.write_record(csv_record(r))?;
    }
    w.flush()?;
    Ok(())
}

/// One CSV data row, without header, ending in a newline.
pub fn csv_row(report: &EvalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_record(report))?;
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn reports_to_csv(reports: &[EvalReport]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, reports)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn write_jsonl<W: Write>(mut out: W, reports: &[EvalReport]) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<EvalReport>> {
    let file = fs::File::open(path).map_err(|e| Error::load(path, e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::load(path, format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

/// Mean attacked MCR per (variant, gamma) over successful cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variant: String,
    pub gamma: f64,
    pub cells: usize,
    pub failed: usize,
    pub mean_mcr_clean: f64,
    pub mean_mcr_attacked: f64,
    pub mean_edr_net: f64,
    pub mean_degree_tv: f64,
}

pub fn summarize(reports: &[EvalReport]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, u64), Vec<&EvalReport>> = BTreeMap::new();
    for r in reports {
        // Order groups by gamma; the bit pattern of a non-negative float
        // sorts like the float.
        groups
            .entry((r.variant.clone(), r.gamma.to_bits()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((variant, bits), rs)| {
            let ok: Vec<&&EvalReport> = rs.iter().filter(|r| r.is_ok()).collect();
            let mean = |f: fn(&EvalReport) -> Option<f64>| {
                let xs: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
                if xs.is_empty() {
                    f64::NAN
                } else {
                    xs.iter().sum::<f64>() / xs.len() as f64
                }
            };
            SummaryRow {
                variant,
                gamma: f64::from_bits(bits),
                cells: ok.len(),
                failed: rs.len() - ok.len(),
                mean_mcr_clean: mean(|r| r.mcr_clean),
                mean_mcr_attacked: mean(|r| r.mcr_attacked),
                mean_edr_net: mean(|r| r.edr_net),
                mean_degree_tv: mean(|r| r.degree_tv_distance),
            }
        })
        .collect()
}
