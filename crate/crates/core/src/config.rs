//! Run configuration: one TOML file with nested sections, validated with field paths.

use crate::data::{load_dataset, Dataset, Quarter, TransformCode};
use crate::dgp::{study_priors, DgpKind, DgpScenario, SignalLaw, StudyConfig};
use crate::diagnostics::Marginal;
use crate::error::{Error, Result};
use crate::forecast::{ExerciseConfig, ForecastModel, Subset};
use crate::priors::PriorConfig;
use crate::sampler::{McmcConfig, ModelPriors};
use crate::sv::SvConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub models: Vec<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast: Option<ForecastConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dma: Option<DmaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_diagnose: Option<PriorDiagnoseConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variables: Option<Vec<String>>,
    #[serde(default = "default_transform")]
    pub default_transform: TransformCode,
    #[serde(default)]
    pub transforms: BTreeMap<String, TransformCode>,
}

fn default_transform() -> TransformCode {
    TransformCode::LogDifference
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    /// Defaults to every data variable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variables: Option<Vec<String>>,
    #[serde(default = "one")]
    pub p: usize,
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default = "PriorConfig::r2d2_default")]
    pub phi: PriorConfig,
    #[serde(default = "PriorConfig::r2d2_default")]
    pub l: PriorConfig,
    #[serde(default)]
    pub sv: SvConfig,
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}

impl ModelConfig {
    pub fn priors(&self) -> ModelPriors {
        ModelPriors { phi: self.phi.clone(), l: self.l.clone(), sv: self.sv }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    pub first_window_end: Quarter,
    pub last_target: Quarter,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    #[serde(default = "default_subsets")]
    pub subsets: Vec<Subset>,
    #[serde(default = "one")]
    pub paths_per_draw: usize,
    #[serde(default)]
    pub stable_only: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<String>,
}

fn default_horizons() -> Vec<usize> {
    vec![1]
}
fn default_subsets() -> Vec<Subset> {
    vec![Subset { name: "all".into(), variables: None }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmaConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
    /// Score panel CSV; defaults to `scores/h{horizon}_{subset}.csv` in the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panel: Option<PathBuf>,
    #[serde(default = "one")]
    pub horizon: usize,
    #[serde(default = "default_subset_name")]
    pub subset: String,
}

fn default_alpha() -> f64 {
    0.99
}
fn default_subset_name() -> String {
    "all".into()
}

/// A scenario entry; unspecified laws take the sparse/dense defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: DgpKind,
    pub m: usize,
    pub t: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub own: Option<SignalLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross: Option<SignalLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<SignalLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<usize>,
}

impl ScenarioConfig {
    pub fn scenario(&self) -> DgpScenario {
        let mut s = DgpScenario::new(self.kind, self.m, self.t);
        if let Some(p) = self.p {
            s.p = p;
        }
        if let Some(v) = self.own {
            s.own = v;
        }
        if let Some(v) = self.cross {
            s.cross = v;
        }
        if let Some(v) = self.l {
            s.l = v;
        }
        if let Some(v) = self.warmup {
            s.warmup = v;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub scenarios: Vec<ScenarioConfig>,
    #[serde(default = "default_reps")]
    pub replications: usize,
    /// Names from the study prior set; all eleven when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priors: Option<Vec<String>>,
    /// Write the truth and data CSV of every replication.
    #[serde(default = "yes")]
    pub write_data: bool,
}

fn default_reps() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedPrior {
    pub name: String,
    pub prior: PriorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedMarginal {
    pub name: String,
    pub marginal: Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InducedConfig {
    pub m: usize,
    #[serde(default = "default_flat_var")]
    pub variance: f64,
    pub draws: usize,
}

fn default_flat_var() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorDiagnoseConfig {
    /// Length of each simulated coefficient vector.
    #[serde(default = "default_hoyer_n")]
    pub n: usize,
    #[serde(default = "default_hoyer_draws")]
    pub draws: usize,
    #[serde(default)]
    pub hoyer: Vec<NamedPrior>,
    #[serde(default)]
    pub marginals: Vec<NamedMarginal>,
    #[serde(default = "default_grid")]
    pub grid: DensityGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub induced: Option<InducedConfig>,
}

fn default_hoyer_n() -> usize {
    1000
}
fn default_hoyer_draws() -> usize {
    10_000
}
fn default_grid() -> DensityGrid {
    DensityGrid { lo: -3.0, hi: 3.0, points: 601 }
}

fn cfg_err(field: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Config { field: field.into(), message: msg.into() }
}

impl RunConfig {
    /// Parse TOML text; errors carry the dotted path of the offending field.
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| cfg_err("<toml>", e.to_string().trim().to_string()))?;
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            cfg_err(if path == "." { "<root>".to_string() } else { path }, e.into_inner().message().trim().to_string())
        })?;
        if cfg.mcmc.seed != 0 && cfg.mcmc.seed != cfg.seed {
            return Err(cfg_err("mcmc.seed", "set the top-level `seed` instead"));
        }
        cfg.mcmc.seed = cfg.seed;
        Ok(cfg)
    }

    /// Load, resolve relative paths against the config's directory, validate.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(d) = &mut self.data {
            fix(&mut d.path);
        }
        if let Some(p) = self.dma.as_mut().and_then(|d| d.panel.as_mut()) {
            fix(p);
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.mcmc.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == Some(0) {
            return Err(cfg_err("threads", "must be at least 1"));
        }
        self.mcmc.validate("mcmc")?;
        let mut names = HashSet::new();
        for (i, m) in self.models.iter().enumerate() {
            let at = format!("models[{i}]");
            if m.name.is_empty() || m.name.contains([',', '/', '\\']) {
                return Err(cfg_err(format!("{at}.name"), "must be non-empty without `,`, `/` or `\\`"));
            }
            if !names.insert(m.name.as_str()) {
                return Err(cfg_err(format!("{at}.name"), format!("duplicate model name `{}`", m.name)));
            }
            if m.p == 0 {
                return Err(cfg_err(format!("{at}.p"), "lag order must be at least 1"));
            }
            if let Some(v) = &m.variables {
                if v.is_empty() {
                    return Err(cfg_err(format!("{at}.variables"), "must not be empty"));
                }
                if let Some(d) = &self.data {
                    if let Some(dv) = &d.variables {
                        if let Some(x) = v.iter().find(|x| !dv.contains(x)) {
                            return Err(cfg_err(format!("{at}.variables"), format!("`{x}` is not among data.variables")));
                        }
                    }
                }
            }
            m.phi.validate(&format!("{at}.phi"))?;
            m.l.validate(&format!("{at}.l"))?;
            m.sv.validate(&format!("{at}.sv"))?;
        }
        if let Some(f) = &self.forecast {
            if f.last_target <= f.first_window_end {
                return Err(cfg_err("forecast.last_target", "must come after forecast.first_window_end"));
            }
            if f.horizons.is_empty() || f.horizons.contains(&0) {
                return Err(cfg_err("forecast.horizons", "need at least one positive horizon"));
            }
            if f.paths_per_draw == 0 {
                return Err(cfg_err("forecast.paths_per_draw", "must be at least 1"));
            }
            let mut seen = HashSet::new();
            for (i, s) in f.subsets.iter().enumerate() {
                if s.name.is_empty() || !seen.insert(s.name.as_str()) {
                    return Err(cfg_err(format!("forecast.subsets[{i}].name"), "names must be non-empty and unique"));
                }
                if s.variables.as_ref().is_some_and(|v| v.is_empty()) {
                    return Err(cfg_err(format!("forecast.subsets[{i}].variables"), "must not be empty"));
                }
            }
            if let Some(b) = &f.benchmark {
                if !self.models.iter().any(|m| &m.name == b) {
                    return Err(cfg_err("forecast.benchmark", format!("no model named `{b}`")));
                }
            }
        }
        if let Some(d) = &self.dma {
            if !(0.0..=1.0).contains(&d.alpha) {
                return Err(cfg_err("dma.alpha", format!("must lie in [0, 1], got {}", d.alpha)));
            }
            if let Some(w) = &d.init {
                if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                    return Err(cfg_err("dma.init", "weights must be non-negative with a positive sum"));
                }
            }
            if d.horizon == 0 {
                return Err(cfg_err("dma.horizon", "must be at least 1"));
            }
        }
        if let Some(s) = &self.simulate {
            if s.scenarios.is_empty() {
                return Err(cfg_err("simulate.scenarios", "need at least one scenario"));
            }
            for (i, sc) in s.scenarios.iter().enumerate() {
                sc.scenario().validate().map_err(|e| match e {
                    Error::Config { field, message } => cfg_err(field.replacen("simulate.scenario", &format!("simulate.scenarios[{i}]"), 1), message),
                    other => other,
                })?;
            }
            if s.replications == 0 {
                return Err(cfg_err("simulate.replications", "must be at least 1"));
            }
            if let Some(p) = &s.priors {
                let known: Vec<String> = study_priors().into_iter().map(|(n, _)| n).collect();
                if let Some(x) = p.iter().find(|x| !known.contains(x)) {
                    return Err(cfg_err("simulate.priors", format!("unknown prior `{x}`; known: {}", known.join(", "))));
                }
            }
        }
        if let Some(p) = &self.prior_diagnose {
            if p.n < 2 || p.draws == 0 {
                return Err(cfg_err("prior_diagnose.n", "need n >= 2 and draws >= 1"));
            }
            for (i, h) in p.hoyer.iter().enumerate() {
                h.prior.validate(&format!("prior_diagnose.hoyer[{i}].prior"))?;
            }
            for (i, m) in p.marginals.iter().enumerate() {
                m.marginal.validate().map_err(|e| cfg_err(format!("prior_diagnose.marginals[{i}].marginal"), e.to_string()))?;
            }
            let g = p.grid;
            if !(g.lo < g.hi && g.lo.is_finite() && g.hi.is_finite()) || g.points < 2 {
                return Err(cfg_err("prior_diagnose.grid", "need lo < hi and at least 2 points"));
            }
            if let Some(ind) = p.induced {
                if ind.m < 2 || ind.draws < 2 || !(ind.variance > 0.0) {
                    return Err(cfg_err("prior_diagnose.induced", "need m >= 2, draws >= 2 and a positive variance"));
                }
            }
        }
        Ok(())
    }

    pub fn data_config(&self) -> Result<&DataConfig> {
        self.data.as_ref().ok_or_else(|| cfg_err("data", "section required by this subcommand"))
    }

    pub fn load_data(&self) -> Result<Dataset> {
        let d = self.data_config()?;
        let overrides: HashMap<String, TransformCode> = d.transforms.iter().map(|(k, v)| (k.clone(), *v)).collect();
        load_dataset(&d.path, d.variables.as_deref(), &overrides, d.default_transform)
    }

    /// Models with variable lists resolved against the loaded data.
    pub fn forecast_models(&self, ds: &Dataset) -> Result<Vec<ForecastModel>> {
        if self.models.is_empty() {
            return Err(cfg_err("models", "at least one model is required"));
        }
        self.models
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let variables = m.variables.clone().unwrap_or_else(|| ds.names.clone());
                if let Some(x) = variables.iter().find(|x| !ds.names.contains(x)) {
                    return Err(cfg_err(format!("models[{i}].variables"), format!("`{x}` is not in the data")));
                }
                Ok(ForecastModel { name: m.name.clone(), variables, p: m.p, intercept: m.intercept, priors: m.priors() })
            })
            .collect()
    }

    pub fn exercise(&self) -> Result<ExerciseConfig> {
        let f = self.forecast.as_ref().ok_or_else(|| cfg_err("forecast", "section required by this subcommand"))?;
        Ok(ExerciseConfig {
            first_window_end: f.first_window_end,
            last_target: f.last_target,
            horizons: f.horizons.clone(),
            subsets: f.subsets.clone(),
            paths_per_draw: f.paths_per_draw,
            stable_only: f.stable_only,
            mcmc: self.mcmc,
            threads: self.threads,
        })
    }

    pub fn study(&self) -> Result<StudyConfig> {
        let s = self.simulate.as_ref().ok_or_else(|| cfg_err("simulate", "section required by this subcommand"))?;
        let all = study_priors();
        let priors = match &s.priors {
            None => all,
            Some(names) => names.iter().filter_map(|n| all.iter().find(|(k, _)| k == n).cloned()).collect(),
        };
        Ok(StudyConfig {
            scenarios: s.scenarios.iter().map(ScenarioConfig::scenario).collect(),
            priors,
            replications: s.replications,
            mcmc: self.mcmc,
            seed: self.seed,
            threads: self.threads,
        })
    }

    /// Canonical TOML of the effective configuration.
    pub fn canonical(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| cfg_err("<serialize>", e.to_string()))
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn content_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.canonical()?.as_bytes())))
    }

    /// `config.lock`: the hash line followed by the canonical configuration.
    pub fn write_lock(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let body = format!("# sha256 = {}\n{}", self.content_hash()?, self.canonical()?);
        std::fs::write(dir.join("config.lock"), body)?;
        Ok(())
    }
}
