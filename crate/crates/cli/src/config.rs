//! Run configuration as flat `key = value` pairs.
//!
//! Values are layered: built-in defaults, then a config file, then command
//! line flags. The fully resolved configuration is written back in the same
//! format so that it can be fed to a later run unchanged.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use rewire_core::dataset::{DatasetSpec, PlanetoidName, SbmParams};
use rewire_core::eval::{PlanVariant, SweepBudget};
use rewire_core::explain::{ExplainerConfig, ExplainerMethod};
use rewire_core::nn::{Architecture, TrainConfig};
use rewire_core::attack::AttackBudget;

/// Budget for every ratio of a sweep, possibly relative to the edge count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetSpec {
    Edr(f64),
    Total(usize),
    /// `n_ins + n_del = round(rate * |E|)`.
    Rate(f64),
}

impl BudgetSpec {
    pub fn resolve(self, num_edges: usize) -> SweepBudget {
        match self {
            BudgetSpec::Edr(t) => SweepBudget::Edr(t),
            BudgetSpec::Total(n) => SweepBudget::Total(n),
            BudgetSpec::Rate(r) => SweepBudget::Total((r * num_edges as f64).round() as usize),
        }
    }
}

impl FromStr for BudgetSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| format!("expected edr:X, total:N or rate:X, got {s:?}"))?;
        match kind.trim() {
            "edr" => Ok(BudgetSpec::Edr(parse(value)?)),
            "total" => Ok(BudgetSpec::Total(parse(value)?)),
            "rate" => Ok(BudgetSpec::Rate(parse(value)?)),
            other => Err(format!("unknown budget kind {other:?}")),
        }
    }
}

impl std::fmt::Display for BudgetSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BudgetSpec::Edr(t) => write!(f, "edr:{t}"),
            BudgetSpec::Total(n) => write!(f, "total:{n}"),
            BudgetSpec::Rate(r) => write!(f, "rate:{r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// `cora`, `citeseer`, `pubmed`, `sbm`, `plain:<dir>` or
    /// `container:<file>`.
    pub dataset: String,
    pub data_dir: PathBuf,
    pub normalize_features: bool,
    pub sbm: SbmParams,
    pub arch: Architecture,
    pub train_epochs: usize,
    pub train_lr: f64,
    pub train_weight_decay: f64,
    pub train_dropout: Option<f64>,
    pub train_hidden: usize,
    pub explainer: ExplainerMethod,
    pub explainer_epochs: Option<usize>,
    pub explainer_lr: Option<f64>,
    pub explainer_top_k: Option<usize>,
    pub attack_gamma: f64,
    pub attack_edr: f64,
    pub attack_total: Option<usize>,
    pub attack_variant: PlanVariant,
    pub sweep_gammas: Vec<f64>,
    /// Use `1 / gamma` for every listed ratio.
    pub sweep_inverse: bool,
    pub sweep_budget: BudgetSpec,
    pub sweep_seeds: Vec<u64>,
    pub sweep_variants: Vec<PlanVariant>,
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub checkpoint: Option<PathBuf>,
    pub mask: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::for_arch(Architecture::Gcn);
        RunConfig {
            seed: 0,
            dataset: "cora".into(),
            data_dir: PathBuf::from("data"),
            normalize_features: true,
            sbm: SbmParams::new(2, 100, 0.05, 0.005, 0),
            arch: Architecture::Gcn,
            train_epochs: train.epochs,
            train_lr: train.lr,
            train_weight_decay: train.weight_decay,
            train_dropout: None,
            train_hidden: train.hidden,
            explainer: ExplainerMethod::GnnExplainer,
            explainer_epochs: None,
            explainer_lr: None,
            explainer_top_k: None,
            attack_gamma: 3.0,
            attack_edr: 0.04,
            attack_total: None,
            attack_variant: PlanVariant::Guided,
            sweep_gammas: (1..=7).map(f64::from).collect(),
            sweep_inverse: false,
            sweep_budget: BudgetSpec::Rate(0.08),
            sweep_seeds: (0..5).collect(),
            sweep_variants: vec![PlanVariant::Guided, PlanVariant::Random],
            out_dir: PathBuf::from("runs"),
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            checkpoint: None,
            mask: None,
        }
    }
}

fn parse<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.trim().parse::<T>().map_err(|e| format!("{s:?}: {e}"))
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',').filter(|t| !t.trim().is_empty()).map(parse).collect()
}

fn parse_optional<T: FromStr>(s: &str) -> Result<Option<T>, String>
where
    T::Err: std::fmt::Display,
{
    match s.trim() {
        "" | "auto" | "none" => Ok(None),
        v => parse(v).map(Some),
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn optional_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "none".into())
}

/// Every accepted key, in the order the effective config lists them.
pub const KEYS: &[&str] = &[
    "seed",
    "dataset",
    "data_dir",
    "normalize_features",
    "sbm.blocks",
    "sbm.block_size",
    "sbm.p_in",
    "sbm.p_out",
    "sbm.signal",
    "sbm.noise",
    "sbm.extra_dims",
    "sbm.train_fraction",
    "sbm.val_fraction",
    "sbm.seed",
    "arch",
    "train.epochs",
    "train.lr",
    "train.weight_decay",
    "train.dropout",
    "train.hidden",
    "explainer",
    "explainer.epochs",
    "explainer.lr",
    "explainer.top_k",
    "attack.gamma",
    "attack.edr",
    "attack.total",
    "attack.variant",
    "sweep.gammas",
    "sweep.inverse",
    "sweep.budget",
    "sweep.seeds",
    "sweep.variants",
    "out_dir",
    "jobs",
    "checkpoint",
    "mask",
];

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        let sbm_blocks = |c: &mut RunConfig, blocks: usize, size: usize| {
            c.sbm.block_sizes = vec![size; blocks];
        };
        match key {
            "seed" => self.seed = parse(v)?,
            "dataset" => self.dataset = v.to_string(),
            "data_dir" => self.data_dir = PathBuf::from(v),
            "normalize_features" => self.normalize_features = parse(v)?,
            "sbm.blocks" => {
                let size = self.sbm.block_sizes.first().copied().unwrap_or(0);
                sbm_blocks(self, parse(v)?, size);
            }
            "sbm.block_size" => {
                let blocks = self.sbm.block_sizes.len();
                sbm_blocks(self, blocks, parse(v)?);
            }
            "sbm.p_in" => self.sbm.p_in = parse(v)?,
            "sbm.p_out" => self.sbm.p_out = parse(v)?,
            "sbm.signal" => self.sbm.signal = parse(v)?,
            "sbm.noise" => self.sbm.noise = parse(v)?,
            "sbm.extra_dims" => self.sbm.extra_dims = parse(v)?,
            "sbm.train_fraction" => self.sbm.train_fraction = parse(v)?,
            "sbm.val_fraction" => self.sbm.val_fraction = parse(v)?,
            "sbm.seed" => self.sbm.seed = parse(v)?,
            "arch" => self.arch = parse(v)?,
            "train.epochs" => self.train_epochs = parse(v)?,
            "train.lr" => self.train_lr = parse(v)?,
            "train.weight_decay" => self.train_weight_decay = parse(v)?,
            "train.dropout" => self.train_dropout = parse_optional(v)?,
            "train.hidden" => self.train_hidden = parse(v)?,
            "explainer" => self.explainer = parse(v)?,
            "explainer.epochs" => self.explainer_epochs = parse_optional(v)?,
            "explainer.lr" => self.explainer_lr = parse_optional(v)?,
            "explainer.top_k" => self.explainer_top_k = parse_optional(v)?,
            "attack.gamma" => self.attack_gamma = parse(v)?,
            "attack.edr" => self.attack_edr = parse(v)?,
            "attack.total" => self.attack_total = parse_optional(v)?,
            "attack.variant" => self.attack_variant = parse(v)?,
            "sweep.gammas" => self.sweep_gammas = parse_list(v)?,
            "sweep.inverse" => self.sweep_inverse = parse(v)?,
            "sweep.budget" => self.sweep_budget = parse(v)?,
            "sweep.seeds" => self.sweep_seeds = parse_list(v)?,
            "sweep.variants" => self.sweep_variants = parse_list(v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "jobs" => self.jobs = parse(v)?,
            "checkpoint" => self.checkpoint = parse_optional::<PathBuf>(v)?,
            "mask" => self.mask = parse_optional::<PathBuf>(v)?,
            other => return Err(format!("unknown config key {other:?}")),
        }
        Ok(())
    }

    /// Resolved `(key, value)` pairs in [`KEYS`] order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let train = self.train_config();
        let ex = self.explainer_config();
        let values = [
            self.seed.to_string(),
            self.dataset.clone(),
            self.data_dir.display().to_string(),
            self.normalize_features.to_string(),
            self.sbm.block_sizes.len().to_string(),
            self.sbm.block_sizes.first().copied().unwrap_or(0).to_string(),
            self.sbm.p_in.to_string(),
            self.sbm.p_out.to_string(),
            self.sbm.signal.to_string(),
            self.sbm.noise.to_string(),
            self.sbm.extra_dims.to_string(),
            self.sbm.train_fraction.to_string(),
            self.sbm.val_fraction.to_string(),
            self.sbm.seed.to_string(),
            self.arch.to_string(),
            train.epochs.to_string(),
            train.lr.to_string(),
            train.weight_decay.to_string(),
            train.dropout.to_string(),
            train.hidden.to_string(),
            self.explainer.to_string(),
            ex.epochs.to_string(),
            ex.lr.to_string(),
            ex.top_k.to_string(),
            self.attack_gamma.to_string(),
            self.attack_edr.to_string(),
            self.attack_total.map_or_else(|| "none".into(), |t| t.to_string()),
            self.attack_variant.as_str().to_string(),
            join(&self.sweep_gammas),
            self.sweep_inverse.to_string(),
            self.sweep_budget.to_string(),
            join(&self.sweep_seeds),
            self.sweep_variants.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(","),
            self.out_dir.display().to_string(),
            self.jobs.to_string(),
            optional_path(&self.checkpoint),
            optional_path(&self.mask),
        ];
        KEYS.iter().copied().zip(values).collect()
    }

    /// Text of the effective configuration.
    pub fn render(&self) -> String {
        let mut s = String::from("# effective configuration\n");
        for (k, v) in self.pairs() {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }

    /// Applies layers in order; later layers win.
    pub fn from_layers<'a>(
        layers: impl IntoIterator<Item = &'a [(String, String)]>,
    ) -> Result<Self, String> {
        let mut cfg = RunConfig::default();
        let mut merged: BTreeMap<&str, &str> = BTreeMap::new();
        for layer in layers {
            for (k, v) in layer {
                merged.insert(k.as_str(), v.as_str());
            }
        }
        for (k, v) in &merged {
            cfg.set(k, v).map_err(|e| format!("{k}: {e}"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.jobs == 0 {
            return Err("jobs must be at least 1".into());
        }
        if self.sweep_gammas.iter().any(|g| !(*g > 0.0)) {
            return Err("sweep.gammas must be positive".into());
        }
        self.train_config().validate().map_err(|e| e.to_string())?;
        self.explainer_config().validate().map_err(|e| e.to_string())?;
        self.attack_budget().validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec, String> {
        if let Some(dir) = self.dataset.strip_prefix("plain:") {
            return Ok(DatasetSpec::Plain { dir: dir.into() });
        }
        if let Some(path) = self.dataset.strip_prefix("container:") {
            return Ok(DatasetSpec::Container { path: path.into() });
        }
        if self.dataset.eq_ignore_ascii_case("sbm") {
            return Ok(DatasetSpec::Sbm(self.sbm.clone()));
        }
        let name: PlanetoidName = self.dataset.parse().map_err(|e: rewire_core::Error| e.to_string())?;
        Ok(DatasetSpec::Planetoid {
            name,
            root: self.data_dir.clone(),
            normalize_features: self.normalize_features,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train_epochs,
            lr: self.train_lr,
            weight_decay: self.train_weight_decay,
            dropout: self.train_dropout.unwrap_or(self.arch.default_dropout()),
            hidden: self.train_hidden,
            seed: self.seed,
        }
    }

    pub fn explainer_config(&self) -> ExplainerConfig {
        let base = ExplainerConfig::for_method(self.explainer);
        ExplainerConfig {
            epochs: self.explainer_epochs.unwrap_or(base.epochs),
            lr: self.explainer_lr.unwrap_or(base.lr),
            top_k: self.explainer_top_k.unwrap_or(base.top_k),
            seed: rewire_core::eval::explainer_seed(self.seed),
            ..base
        }
    }

    /// Single-attack budget: a total budget when `attack.total` is set,
    /// otherwise the EDR target.
    pub fn attack_budget(&self) -> AttackBudget {
        let seed = rewire_core::eval::plan_seed(self.seed, self.attack_gamma);
        match self.attack_total {
            Some(t) => AttackBudget::total(self.attack_gamma, t, seed),
            None => AttackBudget::edr(self.attack_gamma, self.attack_edr, seed),
        }
    }

    /// Ratios actually swept.
    pub fn effective_gammas(&self) -> Vec<f64> {
        if self.sweep_inverse {
            self.sweep_gammas.iter().map(|g| 1.0 / g).collect()
        } else {
            self.sweep_gammas.clone()
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(format!("line {}: unknown config key {k:?}", i + 1));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_follow_architecture_and_method() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.train_config().dropout, 0.5);
        assert_eq!(cfg.explainer_config().top_k, 2);
        let gat = RunConfig::from_layers([pairs(&[("arch", "gat"), ("explainer", "pg")]).as_slice()]).unwrap();
        assert_eq!(gat.train_config().dropout, 0.6);
        assert_eq!(gat.explainer_config().top_k, 1000);
        assert_eq!(gat.explainer_config().epochs, 30);
    }

    #[test]
    fn later_layers_win() {
        let file = pairs(&[("seed", "3"), ("arch", "gat"), ("train.epochs", "50")]);
        let flags = pairs(&[("seed", "9")]);
        let cfg = RunConfig::from_layers([file.as_slice(), flags.as_slice()]).unwrap();
        assert_eq!((cfg.seed, cfg.arch, cfg.train_epochs), (9, Architecture::Gat, 50));
    }

    #[test]
    fn effective_config_round_trips() {
        let flags = pairs(&[
            ("dataset", "sbm"),
            ("sbm.blocks", "3"),
            ("sbm.block_size", "40"),
            ("sweep.gammas", "1,2.5,4"),
            ("sweep.budget", "total:30"),
            ("attack.total", "12"),
            ("checkpoint", "a/model.ckpt"),
            ("sweep.variants", "random"),
        ]);
        let cfg = RunConfig::from_layers([flags.as_slice()]).unwrap();
        let text = cfg.render();
        let again = RunConfig::from_layers([parse_config_text(&text).unwrap().as_slice()]).unwrap();
        assert_eq!(again, RunConfig { train_dropout: Some(0.5), explainer_epochs: Some(200), explainer_lr: Some(0.01), explainer_top_k: Some(2), ..cfg.clone() });
        assert_eq!(again.render(), text);
        assert_eq!(again.sbm.block_sizes, vec![40; 3]);
    }

    #[test]
    fn bad_input_is_rejected() {
        assert!(parse_config_text("seed 3").is_err());
        assert!(parse_config_text("colour = red").is_err());
        assert!(RunConfig::from_layers([pairs(&[("seed", "x")]).as_slice()]).is_err());
        assert!(RunConfig::from_layers([pairs(&[("arch", "mlp")]).as_slice()]).is_err());
        assert!(RunConfig::from_layers([pairs(&[("sweep.budget", "all")]).as_slice()]).is_err());
        assert!(RunConfig::from_layers([pairs(&[("attack.gamma", "1"), ("attack.edr", "0.1")]).as_slice()]).is_err());
    }

    #[test]
    fn budget_specs() {
        assert_eq!("rate:0.08".parse::<BudgetSpec>().unwrap().resolve(5278), SweepBudget::Total(422));
        assert_eq!("edr:0.1".parse::<BudgetSpec>().unwrap().resolve(10), SweepBudget::Edr(0.1));
        assert_eq!(BudgetSpec::Total(7).to_string(), "total:7");
    }
}
