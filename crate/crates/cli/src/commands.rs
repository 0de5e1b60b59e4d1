use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::Mutex;

use anyhow::{anyhow, Context, Result};

use rewire_core::attack::save_plan;
use rewire_core::dataset::{save_graph, save_plain, stats, DatasetSpec};
use rewire_core::eval::{
    attack_once, csv_row, degree_histogram_csv, embedding_projection, least_squares_slope, mcr,
    read_jsonl, reports_to_csv, run_sweep, summarize, write_jsonl, EvalReport, ModelCache,
    PlanVariant, SweepConfig, CSV_COLUMNS,
};
use rewire_core::explain::{combine_masks, explain_all, load_combined_mask, save_combined_mask, CombinedMask};
use rewire_core::nn::{load_checkpoint, save_checkpoint, train, ModelParams};
use rewire_core::Graph;

use crate::config::RunConfig;
use crate::run::RunDir;

/// Runs `command` in a fresh run directory and writes its manifest.
pub fn run(command: &str, cfg: &RunConfig, run_dir: Option<&Path>) -> Result<()> {
    let mut run = RunDir::create(command, cfg, run_dir)?;
    let result = match command {
        "ingest" => ingest(cfg, &mut run),
        "gen-sbm" => gen_sbm(cfg, &mut run),
        "train" => cmd_train(cfg, &mut run),
        "explain" => cmd_explain(cfg, &mut run),
        "attack" => cmd_attack(cfg, &mut run),
        "sweep" => cmd_sweep(cfg, &mut run),
        other => Err(anyhow!("unknown command {other}")),
    };
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("failed: {e:#}"),
    };
    run.finish(&status)?;
    println!("run directory: {}", run.path.display());
    result
}

fn load_dataset(cfg: &RunConfig) -> Result<(String, Graph)> {
    let spec = cfg.dataset_spec().map_err(|e| anyhow!(e))?;
    let graph = spec.load()?;
    Ok((spec.name(), graph))
}

fn load_model(cfg: &RunConfig, graph: &Graph) -> Result<ModelParams> {
    let path = cfg
        .checkpoint
        .as_ref()
        .context("no checkpoint given (use --checkpoint)")?;
    let ckpt = load_checkpoint(path)?;
    if ckpt.params.d_in != graph.num_features() || ckpt.params.classes != graph.num_classes() {
        return Err(anyhow!(
            "checkpoint {} expects {} features / {} classes, dataset has {} / {}",
            path.display(),
            ckpt.params.d_in,
            ckpt.params.classes,
            graph.num_features(),
            graph.num_classes()
        ));
    }
    Ok(ckpt.params)
}

fn ingest(cfg: &RunConfig, run: &mut RunDir) -> Result<()> {
    let (name, graph) = load_dataset(cfg)?;
    save_graph(&run.file("graph.bin"), &graph)?;
    run.record("graph.bin");
    let summary = stats(&graph).to_string();
    run.write("stats.txt", format!("{name}\n{summary}\n"))?;
    println!("{name}: {summary}");
    Ok(())
}

fn gen_sbm(cfg: &RunConfig, run: &mut RunDir) -> Result<()> {
    let spec = DatasetSpec::Sbm(cfg.sbm.clone());
    let graph = spec.load()?;
    save_graph(&run.file("graph.bin"), &graph)?;
    run.record("graph.bin");
    let plain = run.file("plain");
    fs::create_dir_all(&plain)?;
    save_plain(&plain, &graph)?;
    for f in fs::read_dir(&plain)? {
        let f = f?.file_name();
        run.record(&format!("plain/{}", f.to_string_lossy()));
    }
    let summary = stats(&graph).to_string();
    run.write("stats.txt", format!("{}\n{summary}\n", spec.name()))?;
    println!("{}: {summary}", spec.name());
    Ok(())
}

fn cmd_train(cfg: &RunConfig, run: &mut RunDir) -> Result<()> {
    let (name, graph) = load_dataset(cfg)?;
    let train_cfg = cfg.train_config();
    let (params, log) = train(&graph, cfg.arch, &train_cfg)?;
    save_checkpoint(&run.file("model.ckpt"), &params, &train_cfg)?;
    run.record("model.ckpt");
    run.write("training_log.json", serde_json::to_string_pretty(&log)?)?;
    let clean = mcr(&params, &graph)?;
    run.write(
        "metrics.json",
        serde_json::to_string_pretty(&serde_json::json!({
            "dataset": name,
            "architecture": cfg.arch.as_str(),
            "seed": cfg.seed,
            "best_epoch": log.best_epoch,
            "mcr_clean": clean,
        }))?,
    )?;
    println!(
        "clean MCR {clean:.4} ({name}, {}, seed {}, best epoch {})",
        cfg.arch, cfg.seed, log.best_epoch
    );
    println!("checkpoint: {}", run.file("model.ckpt").display());
    Ok(())
}

fn explain_graph(cfg: &RunConfig, params: &ModelParams, graph: &Graph, run: &mut RunDir) -> Result<CombinedMask> {
    let masks = explain_all(params, graph, &cfg.explainer_config())?;
    let combined = combine_masks(&masks, graph);
    save_combined_mask(&run.file("mask.txt"), &combined)?;
    run.record("mask.txt");
    println!(
        "{}: {} important edges, {} important nodes",
        cfg.explainer,
        combined.num_edges(),
        combined.nodes.len()
    );
    Ok(combined)
}

fn cmd_explain(cfg: &RunConfig, run: &mut RunDir) -> Result<()> {
    let (_, graph) = load_dataset(cfg)?;
    let params = load_model(cfg, &graph)?;
    explain_graph(cfg, &params, &graph, run)?;
    Ok(())
}

fn cmd_attack(cfg: &RunConfig, run: &mut RunDir) -> Result<()> {
    let (name, graph) = load_dataset(cfg)?;
    let params = load_model(cfg, &graph)?;
    let mask = match (cfg.attack_variant, &cfg.mask) {
        (PlanVariant::Random, _) => None,
        (PlanVariant::Guided, Some(p)) => Some(load_combined_mask(p, &graph)?),
        (PlanVariant::Guided, None) => Some(explain_graph(cfg, &params, &graph, run)?),
    };
    let budget = cfg.attack_budget();
    let clean = mcr(&params, &graph)?;
    let start = std::time::Instant::now();
    let outcome = attack_once(&graph, &params, mask.as_ref(), &budget)?;
    save_plan(&run.file("plan.txt"), &outcome.plan)?;
    run.record("plan.txt");
    save_graph(&run.file("rewired.bin"), &outcome.rewired)?;
    run.record("rewired.bin");
    run.write("degree_clean.csv", degree_histogram_csv(&graph))?;
    run.write("degree_attacked.csv", degree_histogram_csv(&outcome.rewired))?;
    let clean_proj = embedding_projection(&params, &graph)?;
    let attacked_proj = embedding_projection(&params, &outcome.rewired)?;
    run.write("projection_clean.csv", clean_proj.to_csv())?;
    run.write("projection_attacked.csv", attacked_proj.to_csv())?;
    let ex = cfg.explainer_config();
    let report = EvalReport {
        dataset: name,
        architecture: params.arch.to_string(),
        explainer: match cfg.attack_variant {
            PlanVariant::Guided => ex.method.to_string(),
            PlanVariant::Random => "none".into(),
        },
        variant: cfg.attack_variant.as_str().into(),
        top_k: match cfg.attack_variant {
            PlanVariant::Guided => ex.top_k,
            PlanVariant::Random => 0,
        },
        gamma: budget.gamma,
        seed: cfg.seed,
        n_ins: outcome.plan.insert.len(),
        n_del: outcome.plan.delete.len(),
        edr_net: Some(outcome.edr_net),
        edr_total: Some(outcome.edr_total),
        mcr_clean: Some(clean),
        mcr_attacked: Some(outcome.mcr_attacked),
        degree_tv_distance: Some(outcome.degree_tv),
        truncated: outcome.plan.truncated,
        status: "ok".into(),
        wall_time_ms: start.elapsed().as_millis() as u64,
    };
    run.write("report.json", serde_json::to_string_pretty(&report)?)?;
    run.write("report.csv", reports_to_csv(std::slice::from_ref(&report))?)?;
    if outcome.plan.truncated {
        eprintln!("warning: candidate pool smaller than the requested budget; plan truncated");
    }
    println!(
        "inserted {} deleted {} (EDR net {:.4}, total {:.4}, degree TV {:.4})",
        report.n_ins, report.n_del, outcome.edr_net, outcome.edr_total, outcome.degree_tv
    );
    println!(
        "clean MCR {clean:.4} attacked MCR {:.4}; overlap {:.4} -> {:.4}",
        outcome.mcr_attacked, clean_proj.overlap, attacked_proj.overlap
    );
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, run: &mut RunDir) -> Result<()> {
    let (name, graph) = load_dataset(cfg)?;
    let sweep = SweepConfig {
        dataset: name,
        arch: cfg.arch,
        train: cfg.train_config(),
        explainer: cfg.explainer_config(),
        gammas: cfg.effective_gammas(),
        budget: cfg.sweep_budget.resolve(graph.num_edges()),
        seeds: cfg.sweep_seeds.clone(),
        variants: cfg.sweep_variants.clone(),
        jobs: cfg.jobs,
    };
    // Rows are appended as cells finish so an interrupted sweep keeps them;
    // the file is rewritten in cell order at the end.
    let csv_path = run.file("sweep.csv");
    let mut file = fs::File::create(&csv_path)?;
    writeln!(file, "{}", CSV_COLUMNS.join(","))?;
    run.record("sweep.csv");
    let file = Mutex::new(file);
    let sink = |r: &EvalReport| {
        let mut f = file.lock().expect("csv lock");
        if let Err(e) = csv_row(r).map_err(anyhow::Error::from).and_then(|row| {
            f.write_all(row.as_bytes())?;
            f.flush()?;
            Ok(())
        }) {
            log::error!("writing sweep row: {e}");
        }
        log::info!("cell gamma={} seed={} {}: {}", r.gamma, r.seed, r.variant, r.status);
    };
    let reports = run_sweep(&graph, &sweep, &ModelCache::new(), &sink)?;
    drop(file);
    fs::write(&csv_path, reports_to_csv(&reports)?)?;
    let mut jsonl = Vec::new();
    write_jsonl(&mut jsonl, &reports)?;
    run.write("sweep.jsonl", jsonl)?;
    let failed = reports.iter().filter(|r| !r.is_ok()).count();
    println!("{} cells, {failed} failed", reports.len());
    print!("{}", summary_text(&reports));
    Ok(())
}

fn summary_text(reports: &[EvalReport]) -> String {
    let rows = summarize(reports);
    let mut s = String::from("variant,gamma,cells,failed,mean_mcr_clean,mean_mcr_attacked,mean_edr_net,mean_degree_tv\n");
    for r in &rows {
        writeln!(
            s,
            "{},{},{},{},{:.4},{:.4},{:.4},{:.4}",
            r.variant, r.gamma, r.cells, r.failed, r.mean_mcr_clean, r.mean_mcr_attacked, r.mean_edr_net, r.mean_degree_tv
        )
        .unwrap();
    }
    let mut variants: Vec<&str> = rows.iter().map(|r| r.variant.as_str()).collect();
    variants.dedup();
    for v in variants {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.variant == v && r.mean_mcr_attacked.is_finite())
            .map(|r| (r.gamma, r.mean_mcr_attacked))
            .collect();
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let inv: Vec<f64> = xs.iter().map(|x| 1.0 / x).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |x| format!("{x:.5}"));
        writeln!(
            s,
            "# {v}: slope vs gamma {}, slope vs 1/gamma {}",
            fmt(least_squares_slope(&xs, &ys)),
            fmt(least_squares_slope(&inv, &ys))
        )
        .unwrap();
    }
    s
}

pub fn report(input: &Path, cfg: &RunConfig, run_dir: Option<&Path>) -> Result<()> {
    let path = if input.is_dir() {
        input.join("sweep.jsonl")
    } else {
        input.to_path_buf()
    };
    let reports = read_jsonl(&path)?;
    let mut run = RunDir::create("report", cfg, run_dir)?;
    let text = summary_text(&reports);
    run.write("summary.csv", &text)?;
    run.finish("ok")?;
    print!("{text}");
    Ok(())
}
