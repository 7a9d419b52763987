//! Shrinkage priors: configuration, state and full-conditional updates.

mod dl;
mod hm;
mod r2d2;
mod ssvs;

pub use dl::DlState;
pub use hm::{ar_residual_variance, hm_scale_constants, HmState};
pub use r2d2::{a_pi_rule, R2d2State};
pub use ssvs::{slab_probability, ssvs_l_scales, ssvs_semiautomatic_scales, SsvsState};

use crate::error::{Error, Result};
use crate::groups::{GroupIndex, Grouping};
use crate::model::{Design, VarSpec};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Coefficients smaller than this are clamped before hyperparameter updates.
pub const BETA_FLOOR: f64 = 1e-150;
/// Prior variances are kept inside [VAR_FLOOR, VAR_CAP].
pub const VAR_FLOOR: f64 = 1e-200;
pub const VAR_CAP: f64 = 1e100;
/// Fixed prior variance of the intercept.
pub const INTERCEPT_VARIANCE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub points: Option<usize>,
}

/// A hyperparameter that is either fixed, given by keyword, or learned on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Hyper {
    Value(f64),
    Keyword(String),
    Grid(GridSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Inclusion {
    Fixed(f64),
    Beta { s1: f64, s2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatConfig {
    #[serde(default = "default_flat")]
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct R2d2Config {
    #[serde(default)]
    pub grouping: Grouping,
    #[serde(default = "default_grid")]
    pub b: Hyper,
    /// Fixed a_pi instead of the sample-size rule.
    #[serde(default)]
    pub a_pi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DlConfig {
    #[serde(default)]
    pub grouping: Grouping,
    /// A number, "inv-k" for 1/K, or a grid (default [1/n_g, 1/2] with 1000 points).
    #[serde(default = "default_grid")]
    pub a: Hyper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsvsConfig {
    #[serde(default)]
    pub grouping: Grouping,
    #[serde(default = "default_c0")]
    pub c0: f64,
    #[serde(default = "default_c1")]
    pub c1: f64,
    /// Explicit spike / slab scales; when absent the semiautomatic rule is used.
    #[serde(default)]
    pub tau0: Option<f64>,
    #[serde(default)]
    pub tau1: Option<f64>,
    #[serde(default = "default_inclusion")]
    pub p: Inclusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmConfig {
    #[serde(default = "default_hm")]
    pub c1: f64,
    #[serde(default = "default_hm")]
    pub d1: f64,
    #[serde(default = "default_hm")]
    pub c2: f64,
    #[serde(default = "default_hm")]
    pub d2: f64,
    /// Scale cross lags by the ratio of residual variances (true) or of their square roots.
    #[serde(default = "default_true")]
    pub variance_ratio: bool,
    /// Per-series scale estimates; computed from AR(6) fits when absent.
    #[serde(default)]
    pub sigma_hat: Option<Vec<f64>>,
}

fn default_flat() -> f64 {
    10.0
}
fn default_grid() -> Hyper {
    Hyper::Grid(GridSpec { lo: None, hi: None, points: None })
}
fn default_c0() -> f64 {
    0.01
}
fn default_c1() -> f64 {
    100.0
}
fn default_inclusion() -> Inclusion {
    Inclusion::Fixed(0.5)
}
fn default_hm() -> f64 {
    0.01
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum PriorConfig {
    Flat(FlatConfig),
    R2d2(R2d2Config),
    Dl(DlConfig),
    Ssvs(SsvsConfig),
    Hm(HmConfig),
}

impl PriorConfig {
    pub fn flat() -> Self {
        PriorConfig::Flat(FlatConfig { variance: 10.0 })
    }
    pub fn r2d2(grouping: Grouping, b: Hyper) -> Self {
        PriorConfig::R2d2(R2d2Config { grouping, b, a_pi: None })
    }
    pub fn r2d2_default() -> Self {
        Self::r2d2(Grouping::Global, default_grid())
    }
    pub fn dl(grouping: Grouping, a: Hyper) -> Self {
        PriorConfig::Dl(DlConfig { grouping, a })
    }
    pub fn ssvs(grouping: Grouping, c0: f64, c1: f64, p: Inclusion) -> Self {
        PriorConfig::Ssvs(SsvsConfig { grouping, c0, c1, tau0: None, tau1: None, p })
    }
    pub fn hm() -> Self {
        PriorConfig::Hm(HmConfig { c1: 0.01, d1: 0.01, c2: 0.01, d2: 0.01, variance_ratio: true, sigma_hat: None })
    }

    pub fn family(&self) -> &'static str {
        match self {
            PriorConfig::Flat(_) => "flat",
            PriorConfig::R2d2(_) => "r2d2",
            PriorConfig::Dl(_) => "dl",
            PriorConfig::Ssvs(_) => "ssvs",
            PriorConfig::Hm(_) => "hm",
        }
    }

    /// Validate numeric ranges, reporting the offending field under `path`.
    pub fn validate(&self, path: &str) -> Result<()> {
        let bad = |f: &str, m: String| Err(Error::config(format!("{path}.{f}"), m));
        match self {
            PriorConfig::Flat(c) => {
                if !(c.variance > 0.0) {
                    return bad("variance", format!("must be positive, got {}", c.variance));
                }
            }
            PriorConfig::R2d2(c) => {
                check_hyper(&c.b, &format!("{path}.b"), &[])?;
                if let Some(a) = c.a_pi {
                    if !(a > 0.0) {
                        return bad("a_pi", format!("must be positive, got {a}"));
                    }
                }
            }
            PriorConfig::Dl(c) => check_hyper(&c.a, &format!("{path}.a"), &["inv-k"])?,
            PriorConfig::Ssvs(c) => {
                if !(c.c0 > 0.0 && c.c1 > c.c0) {
                    return bad("c1", format!("need 0 < c0 < c1, got c0={} c1={}", c.c0, c.c1));
                }
                match (c.tau0, c.tau1) {
                    (Some(a), Some(b)) if !(a > 0.0 && b > a) => return bad("tau1", format!("need 0 < tau0 < tau1, got {a}, {b}")),
                    (Some(_), None) | (None, Some(_)) => return bad("tau0", "tau0 and tau1 must be given together".into()),
                    _ => {}
                }
                match c.p {
                    Inclusion::Fixed(p) if !(p > 0.0 && p < 1.0) => return bad("p", format!("must lie in (0, 1), got {p}")),
                    Inclusion::Beta { s1, s2 } if !(s1 > 0.0 && s2 > 0.0) => return bad("p", "beta parameters must be positive".into()),
                    _ => {}
                }
            }
            PriorConfig::Hm(c) => {
                for (f, v) in [("c1", c.c1), ("d1", c.d1), ("c2", c.c2), ("d2", c.d2)] {
                    if !(v > 0.0) {
                        return bad(f, format!("must be positive, got {v}"));
                    }
                }
                if let Some(s) = &c.sigma_hat {
                    if s.iter().any(|v| !(*v > 0.0)) {
                        return bad("sigma_hat", "entries must be positive".into());
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_hyper(h: &Hyper, path: &str, keywords: &[&str]) -> Result<()> {
    match h {
        Hyper::Value(v) if !(*v > 0.0) => Err(Error::config(path, format!("must be positive, got {v}"))),
        Hyper::Keyword(k) if !keywords.contains(&k.as_str()) => {
            Err(Error::config(path, format!("unknown keyword `{k}` (allowed: {keywords:?})")))
        }
        Hyper::Grid(g) => {
            if let (Some(lo), Some(hi)) = (g.lo, g.hi) {
                if !(lo > 0.0 && hi >= lo) {
                    return Err(Error::config(path, format!("grid needs 0 < lo <= hi, got [{lo}, {hi}]")));
                }
            }
            if g.points == Some(0) {
                return Err(Error::config(path, "grid needs at least one point"));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Equispaced grid.
pub fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

/// Information the priors need from the data at initialization.
#[derive(Debug, Clone)]
pub struct PriorContext {
    /// Rows of the regression (sample size in the a_pi rule).
    pub t_obs: usize,
    /// Regressors per equation.
    pub k: usize,
    /// Per-coefficient scale estimates sqrt(var-hat) for semiautomatic SSVS.
    pub scale: Option<Vec<f64>>,
    /// Per-coefficient Minnesota constants for HM (own/cross groups).
    pub rtilde: Option<Vec<f64>>,
}

/// Fixed variances.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatState {
    pub groups: GroupIndex,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriorState {
    Flat(FlatState),
    R2d2(R2d2State),
    Dl(DlState),
    Ssvs(SsvsState),
    Hm(HmState),
}

impl PriorState {
    /// Build the prior on vec(Phi).
    pub fn for_phi(cfg: &PriorConfig, spec: &VarSpec, design: &Design) -> Result<PriorState> {
        let t_obs = design.x.nrows();
        let mut ctx = PriorContext { t_obs, k: spec.k(), scale: None, rtilde: None };
        match cfg {
            PriorConfig::Ssvs(c) if c.tau0.is_none() => {
                ctx.scale = Some(ssvs_semiautomatic_scales(design, spec)?);
            }
            PriorConfig::Hm(c) => {
                let sig = match &c.sigma_hat {
                    Some(s) if s.len() == spec.m => s.clone(),
                    Some(s) => {
                        return Err(Error::config("phi_prior.sigma_hat", format!("{} entries for {} series", s.len(), spec.m)))
                    }
                    None => hm_scale_constants(&design.y)?,
                };
                ctx.rtilde = Some(hm::rtilde(spec, &sig, c.variance_ratio));
            }
            _ => {}
        }
        let groups = match cfg {
            PriorConfig::Flat(_) => GroupIndex::for_phi(spec, Grouping::Global),
            PriorConfig::R2d2(c) => GroupIndex::for_phi(spec, c.grouping),
            PriorConfig::Dl(c) => GroupIndex::for_phi(spec, c.grouping),
            PriorConfig::Ssvs(c) => GroupIndex::for_phi(spec, c.grouping),
            PriorConfig::Hm(_) => GroupIndex::own_cross(spec),
        };
        Self::init(cfg, groups, &ctx)
    }

    /// Build the prior on the free elements of the covariance factor. `scale`
    /// supplies semiautomatic SSVS scales when the config gives none.
    pub fn for_l(cfg: &PriorConfig, n_l: usize, t_obs: usize, k: usize, scale: Option<Vec<f64>>) -> Result<PriorState> {
        let ctx = PriorContext { t_obs, k, scale, rtilde: Some(vec![1.0; n_l]) };
        Self::init(cfg, GroupIndex::for_l(n_l), &ctx)
    }

    /// Initialize hyperparameters at prior means (grid midpoints for discrete hyperpriors).
    pub fn init(cfg: &PriorConfig, groups: GroupIndex, ctx: &PriorContext) -> Result<PriorState> {
        cfg.validate("prior")?;
        Ok(match cfg {
            PriorConfig::Flat(c) => PriorState::Flat(FlatState { groups, variance: c.variance }),
            PriorConfig::R2d2(c) => PriorState::R2d2(R2d2State::new(c, groups, ctx)?),
            PriorConfig::Dl(c) => PriorState::Dl(DlState::new(c, groups, ctx)?),
            PriorConfig::Ssvs(c) => PriorState::Ssvs(SsvsState::new(c, groups, ctx)?),
            PriorConfig::Hm(c) => PriorState::Hm(HmState::new(c, groups, ctx)?),
        })
    }

    pub fn groups(&self) -> &GroupIndex {
        match self {
            PriorState::Flat(s) => &s.groups,
            PriorState::R2d2(s) => &s.groups,
            PriorState::Dl(s) => &s.groups,
            PriorState::Ssvs(s) => &s.groups,
            PriorState::Hm(s) => &s.groups,
        }
    }

    /// One sweep over the hyperparameters given the current coefficients.
    pub fn update<R: Rng + ?Sized>(&mut self, beta: &[f64], rng: &mut R) -> Result<()> {
        if beta.len() != self.groups().n {
            return Err(Error::Dimension(format!("{} coefficients for a prior over {}", beta.len(), self.groups().n)));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("coefficients passed to prior update".into()));
        }
        match self {
            PriorState::Flat(_) => Ok(()),
            PriorState::R2d2(s) => s.update(beta, rng),
            PriorState::Dl(s) => s.update(beta, rng),
            PriorState::Ssvs(s) => s.update(beta, rng),
            PriorState::Hm(s) => s.update(beta, rng),
        }
    }

    /// Redraw all hyperparameters from their hyperprior.
    pub fn sample_from_prior<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        match self {
            PriorState::Flat(_) => Ok(()),
            PriorState::R2d2(s) => s.sample_from_prior(rng),
            PriorState::Dl(s) => s.sample_from_prior(rng),
            PriorState::Ssvs(s) => s.sample_from_prior(rng),
            PriorState::Hm(s) => s.sample_from_prior(rng),
        }
    }

    /// Prior variances of all coefficients.
    pub fn variances(&self) -> Vec<f64> {
        let g = self.groups();
        let mut v = vec![INTERCEPT_VARIANCE; g.n];
        match self {
            PriorState::Flat(s) => {
                for idx in &g.groups {
                    for &j in idx {
                        v[j] = s.variance;
                    }
                }
            }
            PriorState::R2d2(s) => s.fill_variances(&mut v),
            PriorState::Dl(s) => s.fill_variances(&mut v),
            PriorState::Ssvs(s) => s.fill_variances(&mut v),
            PriorState::Hm(s) => s.fill_variances(&mut v),
        }
        for x in v.iter_mut() {
            *x = x.clamp(VAR_FLOOR, VAR_CAP);
        }
        v
    }

    pub fn hyper_names(&self) -> Vec<String> {
        match self {
            PriorState::Flat(_) => Vec::new(),
            PriorState::R2d2(s) => s.hyper_names(),
            PriorState::Dl(s) => s.hyper_names(),
            PriorState::Ssvs(s) => s.hyper_names(),
            PriorState::Hm(s) => s.hyper_names(),
        }
    }

    pub fn hyper_values(&self) -> Vec<f64> {
        match self {
            PriorState::Flat(_) => Vec::new(),
            PriorState::R2d2(s) => s.hyper_values(),
            PriorState::Dl(s) => s.hyper_values(),
            PriorState::Ssvs(s) => s.hyper_values(),
            PriorState::Hm(s) => s.hyper_values(),
        }
    }
}

/// |beta| clamped away from zero.
#[inline]
pub(crate) fn clamp_abs(b: f64) -> f64 {
    b.abs().max(BETA_FLOOR)
}
