use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::Hash;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{degree_distance, mcr, EvalReport};
use crate::attack::{apply_plan, build_plan, edr_between, random_baseline_plan, AttackBudget, RewirePlan};
use crate::error::{Error, Result};
use crate::explain::{combine_masks, explain_all, CombinedMask, ExplainerConfig};
use crate::graph::Graph;
use crate::nn::{train, Architecture, ModelParams, TrainConfig};
use crate::seed;

/// Seed of the explainer run for a model trained with `global`.
pub fn explainer_seed(global: u64) -> u64 {
    seed::derive(global, "explain", 0)
}

/// Seed of the plan at ratio `gamma` for global seed `global`; independent
/// of the order in which ratios are listed.
pub fn plan_seed(global: u64, gamma: f64) -> u64 {
    seed::derive(global, "plan", gamma.to_bits())
}

/// Whether a plan's pools are restricted to the important nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanVariant {
    Guided,
    Random,
}

impl PlanVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanVariant::Guided => "guided",
            PlanVariant::Random => "random",
        }
    }
}

impl FromStr for PlanVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "guided" => Ok(PlanVariant::Guided),
            "random" => Ok(PlanVariant::Random),
            other => Err(Error::Parameter(format!("unknown plan variant {other:?}"))),
        }
    }
}

/// Budget shared by every ratio of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SweepBudget {
    Edr(f64),
    Total(usize),
}

impl SweepBudget {
    pub fn at(self, gamma: f64, seed: u64) -> AttackBudget {
        match self {
            SweepBudget::Edr(t) => AttackBudget::edr(gamma, t, seed),
            SweepBudget::Total(n) => AttackBudget::total(gamma, n, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub dataset: String,
    pub arch: Architecture,
    /// Training settings; the seed is replaced by each sweep seed.
    pub train: TrainConfig,
    /// Explainer settings; the seed is derived from each sweep seed.
    pub explainer: ExplainerConfig,
    pub gammas: Vec<f64>,
    pub budget: SweepBudget,
    pub seeds: Vec<u64>,
    pub variants: Vec<PlanVariant>,
    /// Worker threads.
    pub jobs: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() || self.seeds.is_empty() || self.variants.is_empty() {
            return Err(Error::Parameter("sweep needs gammas, seeds and variants".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Parameter("jobs must be at least 1".into()));
        }
        self.train.validate()?;
        self.explainer.validate()?;
        for &g in &self.gammas {
            self.budget.at(g, 0).validate()?;
        }
        Ok(())
    }

    /// Number of cells: ratios x seeds x variants.
    pub fn num_cells(&self) -> usize {
        self.gammas.len() * self.seeds.len() * self.variants.len()
    }
}

/// Identity of a trained model within a cache.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelKey {
    pub dataset: String,
    pub arch: Architecture,
    pub config_hash: String,
    pub seed: u64,
}

/// Hex SHA-256 prefix of a value's JSON form.
pub fn config_hash(value: &impl Serialize) -> String {
    let json = serde_json::to_vec(value).expect("config serialises");
    let digest = Sha256::digest(&json);
    digest[..8].iter().fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

type Slot<T> = Arc<Mutex<Option<Arc<T>>>>;

/// Trained models and combined masks, computed at most once per key.
#[derive(Debug, Default)]
pub struct ModelCache {
    models: Mutex<HashMap<ModelKey, Slot<ModelParams>>>,
    masks: Mutex<HashMap<(ModelKey, String), Slot<CombinedMask>>>,
}

fn get_or_try<K: Eq + Hash, T>(
    map: &Mutex<HashMap<K, Slot<T>>>,
    key: K,
    make: impl FnOnce() -> Result<T>,
) -> Result<Arc<T>> {
    let slot = map.lock().expect("cache lock").entry(key).or_default().clone();
    let mut guard = slot.lock().expect("slot lock");
    if let Some(v) = guard.as_ref() {
        return Ok(v.clone());
    }
    let v = Arc::new(make()?);
    *guard = Some(v.clone());
    Ok(v)
}

impl ModelCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn key(dataset: &str, arch: Architecture, train: &TrainConfig) -> ModelKey {
        ModelKey {
            dataset: dataset.to_string(),
            arch,
            config_hash: config_hash(train),
            seed: train.seed,
        }
    }

    /// Trained parameters for `(dataset, arch, train)`, training on a miss.
    pub fn model(
        &self,
        graph: &Graph,
        dataset: &str,
        arch: Architecture,
        train_cfg: &TrainConfig,
    ) -> Result<(ModelKey, Arc<ModelParams>)> {
        let key = Self::key(dataset, arch, train_cfg);
        let params = get_or_try(&self.models, key.clone(), || {
            log::info!("training {} on {dataset} (seed {})", arch, train_cfg.seed);
            Ok(train(graph, arch, train_cfg)?.0)
        })?;
        Ok((key, params))
    }

    /// Registers externally trained parameters, e.g. from a checkpoint.
    pub fn insert_model(&self, key: ModelKey, params: ModelParams) {
        let slot = self.models.lock().expect("cache lock").entry(key).or_default().clone();
        *slot.lock().expect("slot lock") = Some(Arc::new(params));
    }

    /// Combined mask of every node's explanation for a cached model.
    pub fn mask(
        &self,
        graph: &Graph,
        key: &ModelKey,
        params: &ModelParams,
        explainer: &ExplainerConfig,
    ) -> Result<Arc<CombinedMask>> {
        get_or_try(&self.masks, (key.clone(), config_hash(explainer)), || {
            log::info!("explaining {} nodes with {}", graph.num_nodes(), explainer.method.as_str());
            Ok(combine_masks(&explain_all(params, graph, explainer)?, graph))
        })
    }

    pub fn num_models(&self) -> usize {
        self.models.lock().expect("cache lock").len()
    }

    pub fn num_masks(&self) -> usize {
        self.masks.lock().expect("cache lock").len()
    }
}

/// Result of applying one plan.
#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub plan: RewirePlan,
    pub rewired: Graph,
    pub mcr_attacked: f64,
    pub degree_tv: f64,
    pub edr_net: f64,
    pub edr_total: f64,
}

/// Plans (guided by `mask`, or over all nodes when `None`), applies and
/// evaluates one attack against a fixed model.
pub fn attack_once(
    graph: &Graph,
    params: &ModelParams,
    mask: Option<&CombinedMask>,
    budget: &AttackBudget,
) -> Result<AttackOutcome> {
    let plan = match mask {
        Some(m) => build_plan(graph, m, budget)?,
        None => random_baseline_plan(graph, budget)?,
    };
    let rewired = apply_plan(graph, &plan)?;
    Ok(AttackOutcome {
        mcr_attacked: mcr(params, &rewired)?,
        degree_tv: degree_distance(graph, &rewired),
        edr_net: edr_between(graph, &rewired),
        edr_total: plan.edr_total(graph),
        plan,
        rewired,
    })
}

struct Prepared {
    params: Arc<ModelParams>,
    mcr_clean: f64,
    mask: Option<Arc<CombinedMask>>,
}

/// Runs every (ratio, seed, variant) cell. Models and masks come from
/// `cache`. `sink` sees each report as soon as its cell finishes (calls are
/// serialised); the returned reports are in cell order. A failing cell is
/// reported with its error and the sweep continues.
pub fn run_sweep(
    graph: &Graph,
    cfg: &SweepConfig,
    cache: &ModelCache,
    sink: &(dyn Fn(&EvalReport) + Sync),
) -> Result<Vec<EvalReport>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    let need_mask = cfg.variants.contains(&PlanVariant::Guided);
    let sink_lock = Mutex::new(());

    pool.install(|| {
        let prepared: Vec<std::result::Result<Prepared, String>> = cfg
            .seeds
            .par_iter()
            .map(|&s| {
                let train_cfg = TrainConfig { seed: s, ..cfg.train.clone() };
                let (key, params) = cache.model(graph, &cfg.dataset, cfg.arch, &train_cfg)?;
                let mcr_clean = mcr(&params, graph)?;
                let mask = if need_mask {
                    let ex = ExplainerConfig { seed: explainer_seed(s), ..cfg.explainer.clone() };
                    Some(cache.mask(graph, &key, &params, &ex)?)
                } else {
                    None
                };
                Ok(Prepared { params, mcr_clean, mask })
            })
            .map(|r: Result<Prepared>| r.map_err(|e| e.to_string()))
            .collect();

        let cells: Vec<(usize, f64, PlanVariant)> = cfg
            .gammas
            .iter()
            .flat_map(|&g| {
                (0..cfg.seeds.len()).flat_map(move |si| cfg.variants.iter().map(move |&v| (si, g, v)))
            })
            .collect();

        let reports = cells
            .par_iter()
            .map(|&(si, gamma, variant)| {
                let start = Instant::now();
                let s = cfg.seeds[si];
                let mut report = EvalReport {
                    dataset: cfg.dataset.clone(),
                    architecture: cfg.arch.to_string(),
                    explainer: match variant {
                        PlanVariant::Guided => cfg.explainer.method.as_str().to_string(),
                        PlanVariant::Random => "none".to_string(),
                    },
                    variant: variant.as_str().to_string(),
                    top_k: match variant {
                        PlanVariant::Guided => cfg.explainer.top_k,
                        PlanVariant::Random => 0,
                    },
                    gamma,
                    seed: s,
                    n_ins: 0,
                    n_del: 0,
                    edr_net: None,
                    edr_total: None,
                    mcr_clean: None,
                    mcr_attacked: None,
                    degree_tv_distance: None,
                    truncated: false,
                    status: "ok".to_string(),
                    wall_time_ms: 0,
                };
                match &prepared[si] {
                    Err(e) => report.status = format!("failed: {e}"),
                    Ok(p) => {
                        report.mcr_clean = Some(p.mcr_clean);
                        let budget = cfg.budget.at(gamma, plan_seed(s, gamma));
                        let mask = match variant {
                            PlanVariant::Guided => p.mask.as_deref(),
                            PlanVariant::Random => None,
                        };
                        match attack_once(graph, &p.params, mask, &budget) {
                            Ok(o) => {
                                report.n_ins = o.plan.insert.len();
                                report.n_del = o.plan.delete.len();
                                report.truncated = o.plan.truncated;
                                report.edr_net = Some(o.edr_net);
                                report.edr_total = Some(o.edr_total);
                                report.mcr_attacked = Some(o.mcr_attacked);
                                report.degree_tv_distance = Some(o.degree_tv);
                            }
                            Err(e) => report.status = format!("failed: {e}"),
                        }
                    }
                }
                report.wall_time_ms = start.elapsed().as_millis() as u64;
                let _guard = sink_lock.lock().expect("sink lock");
                sink(&report);
                report
            })
            .collect();
        Ok(reports)
    })
}
