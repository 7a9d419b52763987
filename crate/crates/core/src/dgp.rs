//! Sparse and dense data-generating processes and the MAE/RMSPD study harness.

use crate::data::Dataset;
use crate::diagnostics::{mae, rmspd};
use crate::dist;
use crate::error::{Error, Result};
use crate::groups::Grouping;
use crate::model::{companion_stable, design_from_matrix, sigma_chol, VarSpec};
use crate::pool::{run_tasks, task_seed};
use crate::priors::{GridSpec, Hyper, Inclusion, PriorConfig};
use crate::sampler::{run_mcmc, McmcConfig, ModelPriors};
use crate::sv::{simulate_path, SvConfig, SvParams};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MAX_STABILITY_TRIES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DgpKind {
    Sparse,
    Dense,
}

impl std::fmt::Display for DgpKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DgpKind::Sparse => "sparse",
            DgpKind::Dense => "dense",
        })
    }
}

/// Inclusion probability plus Gaussian law of the nonzero values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalLaw {
    pub inclusion: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpScenario {
    pub kind: DgpKind,
    pub m: usize,
    pub t: usize,
    pub p: usize,
    pub own: SignalLaw,
    pub cross: SignalLaw,
    pub l: SignalLaw,
    pub sv_mu: f64,
    pub rho_range: (f64, f64),
    pub sigma_range: (f64, f64),
    pub warmup: usize,
}

impl DgpScenario {
    pub fn new(kind: DgpKind, m: usize, t: usize) -> Self {
        let own = SignalLaw { inclusion: 0.8, mean: 0.15, sd: 0.15 };
        let (cross, l) = match kind {
            DgpKind::Sparse => (SignalLaw { inclusion: 0.1, mean: 0.1, sd: 0.1 }, SignalLaw { inclusion: 0.1, mean: 0.001, sd: 0.001 }),
            DgpKind::Dense => (SignalLaw { inclusion: 0.8, mean: 0.01, sd: 0.01 }, SignalLaw { inclusion: 0.8, mean: 0.001, sd: 0.001 }),
        };
        DgpScenario { kind, m, t, p: 1, own, cross, l, sv_mu: -10.0, rho_range: (0.85, 0.98), sigma_range: (0.1, 0.3), warmup: 100 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, m: &str| Err(Error::config(format!("simulate.scenario.{f}"), m.to_string()));
        if self.m == 0 || self.p == 0 {
            return bad("m", "M and p must be positive");
        }
        if self.t <= self.p + 1 {
            return bad("t", "T must exceed p + 1");
        }
        for (name, s) in [("own", self.own), ("cross", self.cross), ("l", self.l)] {
            if !(0.0..=1.0).contains(&s.inclusion) || !(s.sd >= 0.0) || !s.mean.is_finite() {
                return bad(name, "inclusion must be in [0, 1] and sd non-negative");
            }
        }
        let (r0, r1) = self.rho_range;
        if !(-1.0 < r0 && r0 <= r1 && r1 < 1.0) {
            return bad("rho_range", "need -1 < lo <= hi < 1");
        }
        let (s0, s1) = self.sigma_range;
        if !(0.0 <= s0 && s0 <= s1 && s1.is_finite()) {
            return bad("sigma_range", "need 0 <= lo <= hi");
        }
        Ok(())
    }

    pub fn spec(&self) -> VarSpec {
        VarSpec { m: self.m, p: self.p, intercept: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpDraw {
    /// K x M, no intercept row.
    pub phi: DMatrix<f64>,
    pub l: Vec<f64>,
    pub sv: Vec<SvParams>,
    /// T x M log-variances of the kept sample.
    pub h: DMatrix<f64>,
    pub data: Dataset,
    /// Whole-Phi draws needed to reach a stable process.
    pub tries: usize,
}

fn signal<R: Rng + ?Sized>(law: SignalLaw, rng: &mut R) -> f64 {
    if rng.random::<f64>() < law.inclusion {
        law.mean + law.sd * dist::std_normal(rng)
    } else {
        0.0
    }
}

/// One unconstrained draw of (Phi, l) from the inclusion/Gaussian laws.
pub fn draw_coefficients<R: Rng + ?Sized>(sc: &DgpScenario, rng: &mut R) -> (DMatrix<f64>, Vec<f64>) {
    let spec = sc.spec();
    let mut phi = DMatrix::zeros(spec.k(), sc.m);
    for eq in 0..sc.m {
        for row in 0..spec.k() {
            let (_, var) = spec.row_lag_var(row).expect("no intercept row");
            phi[(row, eq)] = signal(if var == eq { sc.own } else { sc.cross }, rng);
        }
    }
    let l = (0..spec.n_l()).map(|_| signal(sc.l, rng)).collect();
    (phi, l)
}

/// Draw a stable truth and simulate T observations after a warm-up from zero.
pub fn generate_dgp<R: Rng + ?Sized>(sc: &DgpScenario, rng: &mut R) -> Result<DgpDraw> {
    sc.validate()?;
    let spec = sc.spec();
    let mut found = None;
    for tries in 1..=MAX_STABILITY_TRIES {
        let (phi, l) = draw_coefficients(sc, rng);
        if companion_stable(&phi, &spec, true)? {
            found = Some((phi, l, tries));
            break;
        }
    }
    let (phi, l, tries) = found.ok_or(Error::StabilityNotReached(MAX_STABILITY_TRIES))?;
    let total = sc.t + sc.warmup;
    let sv: Vec<SvParams> = (0..sc.m)
        .map(|_| SvParams {
            mu: sc.sv_mu,
            rho: rng.random_range(sc.rho_range.0..=sc.rho_range.1),
            sigma: rng.random_range(sc.sigma_range.0..=sc.sigma_range.1),
        })
        .collect();
    let paths: Vec<Vec<f64>> = sv.iter().map(|p| simulate_path(p, total, rng).h).collect();
    let mut y = DMatrix::zeros(total, sc.m);
    for t in 0..total {
        let mut mean = DVector::zeros(sc.m);
        for lag in 1..=sc.p {
            if t >= lag {
                for j in 0..sc.m {
                    let yl = y[(t - lag, j)];
                    for i in 0..sc.m {
                        mean[i] += phi[((lag - 1) * sc.m + j, i)] * yl;
                    }
                }
            }
        }
        let h: Vec<f64> = paths.iter().map(|p| p[t]).collect();
        let z = DVector::from_fn(sc.m, |_, _| dist::std_normal(rng));
        let e = sigma_chol(&l, &h)? * z;
        y.set_row(t, &(mean + e).transpose());
    }
    let kept = y.rows(sc.warmup, sc.t).into_owned();
    let h = DMatrix::from_fn(sc.t, sc.m, |t, i| paths[i][sc.warmup + t]);
    Ok(DgpDraw { phi, l, sv, h, data: Dataset::from_matrix(kept)?, tries })
}

/// The eleven prior set of the study table, keyed by display name.
pub fn study_priors() -> Vec<(String, ModelPriors)> {
    let sv = SvConfig::default();
    let mk = |p: PriorConfig| ModelPriors { phi: p.clone(), l: p, sv };
    let dl_grid = || Hyper::Grid(GridSpec { lo: None, hi: None, points: None });
    let ssvs = |g: Grouping, c0: f64, c1: f64, p: Inclusion| PriorConfig::ssvs(g, c0, c1, p);
    let beta11 = Inclusion::Beta { s1: 1.0, s2: 1.0 };
    vec![
        ("DL".into(), mk(PriorConfig::dl(Grouping::Global, Hyper::Keyword("inv-k".into())))),
        ("DL_h".into(), mk(PriorConfig::dl(Grouping::Global, dl_grid()))),
        ("DL*".into(), mk(PriorConfig::dl(Grouping::SemiGlobal, dl_grid()))),
        ("HM".into(), mk(PriorConfig::hm())),
        ("SSVS_bl".into(), mk(ssvs(Grouping::Global, 0.1, 10.0, Inclusion::Fixed(0.5)))),
        ("SSVS".into(), mk(ssvs(Grouping::Global, 0.01, 100.0, Inclusion::Fixed(0.5)))),
        ("SSVS_h".into(), mk(ssvs(Grouping::Global, 0.01, 100.0, beta11.clone()))),
        ("SSVS*".into(), mk(ssvs(Grouping::SemiGlobal, 0.01, 100.0, beta11.clone()))),
        ("R2D2".into(), mk(PriorConfig::r2d2(Grouping::Global, Hyper::Value(0.5)))),
        ("R2D2_h".into(), mk(PriorConfig::r2d2(Grouping::Global, dl_grid()))),
        ("R2D2*".into(), mk(PriorConfig::r2d2(Grouping::SemiGlobal, dl_grid()))),
    ]
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub scenarios: Vec<DgpScenario>,
    pub priors: Vec<(String, ModelPriors)>,
    pub replications: usize,
    pub mcmc: McmcConfig,
    pub seed: u64,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub kind: DgpKind,
    pub m: usize,
    pub t: usize,
    pub prior: String,
    pub median_mae: f64,
    pub median_rmspd: f64,
    /// Per-replication values (NaN for failed fits).
    pub mae: Vec<f64>,
    pub rmspd: Vec<f64>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
}

/// Median of the finite values; NaN when none.
pub fn median(v: &[f64]) -> f64 {
    let mut x: Vec<f64> = v.iter().cloned().filter(|v| v.is_finite()).collect();
    if x.is_empty() {
        return f64::NAN;
    }
    x.sort_by(|a, b| a.total_cmp(b));
    let n = x.len();
    if n % 2 == 1 {
        x[n / 2]
    } else {
        0.5 * (x[n / 2 - 1] + x[n / 2])
    }
}

/// Seed of the DGP for scenario `s`, replication `r`; shared by all priors.
pub fn dgp_seed(base: u64, s: usize, r: usize, reps: usize) -> u64 {
    task_seed(base, s * reps + r).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Fit every prior to every simulated dataset and collect median MAE/RMSPD per cell.
pub fn run_sim_study(cfg: &StudyConfig) -> Result<StudyTable> {
    if cfg.replications == 0 {
        return Err(Error::config("simulate.replications", "must be at least 1"));
    }
    if cfg.scenarios.is_empty() || cfg.priors.is_empty() {
        return Err(Error::EmptyInput("scenarios or priors".into()));
    }
    for sc in &cfg.scenarios {
        sc.validate()?;
    }
    let (ns, nr, np) = (cfg.scenarios.len(), cfg.replications, cfg.priors.len());
    let results = run_tasks(ns * nr * np, cfg.threads, |task| -> Result<(f64, f64)> {
        let s = task / (nr * np);
        let r = (task / np) % nr;
        let pi = task % np;
        let sc = &cfg.scenarios[s];
        let mut rng = ChaCha8Rng::seed_from_u64(dgp_seed(cfg.seed, s, r, nr));
        let truth = generate_dgp(sc, &mut rng)?;
        let spec = sc.spec();
        let design = design_from_matrix(&truth.data.y, &spec)?;
        let mcmc = McmcConfig { seed: task_seed(cfg.mcmc.seed, task), ..cfg.mcmc };
        let draws = run_mcmc(&design, &spec, &cfg.priors[pi].1, &mcmc)?;
        let t = truth.phi.as_slice();
        Ok((mae(&draws.phi, t)?, rmspd(&draws.phi, t)?))
    })?;
    let mut rows = Vec::new();
    for (s, sc) in cfg.scenarios.iter().enumerate() {
        for (pi, (name, _)) in cfg.priors.iter().enumerate() {
            let mut row = StudyRow {
                kind: sc.kind,
                m: sc.m,
                t: sc.t,
                prior: name.clone(),
                median_mae: f64::NAN,
                median_rmspd: f64::NAN,
                mae: Vec::new(),
                rmspd: Vec::new(),
                failures: Vec::new(),
            };
            for r in 0..nr {
                match &results[(s * nr + r) * np + pi] {
                    Ok((a, b)) => {
                        row.mae.push(*a);
                        row.rmspd.push(*b);
                    }
                    Err(e) => {
                        row.mae.push(f64::NAN);
                        row.rmspd.push(f64::NAN);
                        row.failures.push(format!("replication {r}: {e}"));
                    }
                }
            }
            row.median_mae = median(&row.mae);
            row.median_rmspd = median(&row.rmspd);
            rows.push(row);
        }
    }
    Ok(StudyTable { rows })
}

impl StudyTable {
    pub fn get(&self, kind: DgpKind, m: usize, t: usize, prior: &str) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.kind == kind && r.m == m && r.t == t && r.prior == prior)
    }

    /// Long-format summary: kind, M, T, prior, median MAE, median RMSPD, failures.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["scenario", "M", "T", "prior", "median_mae", "median_rmspd", "failures"])?;
        for r in &self.rows {
            w.write_record([
                r.kind.to_string(),
                r.m.to_string(),
                r.t.to_string(),
                r.prior.clone(),
                crate::forecast::fmt_f64(r.median_mae),
                crate::forecast::fmt_f64(r.median_rmspd),
                r.failures.len().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Directory stem of a scenario, e.g. `sparse_M5_T50`.
pub fn scenario_stem(sc: &DgpScenario) -> String {
    format!("{}_M{}_T{}", sc.kind, sc.m, sc.t)
}

/// Long-format truth: `parameter,value` with phi, l and SV entries.
pub fn write_truth(path: &Path, d: &DgpDraw) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["parameter", "value"])?;
    let m = d.phi.ncols();
    for eq in 0..m {
        for row in 0..d.phi.nrows() {
            w.write_record([format!("phi.{eq}.{row}"), crate::forecast::fmt_f64(d.phi[(row, eq)])])?;
        }
    }
    for j in 1..m {
        for i in 0..j {
            w.write_record([format!("l.{i}.{j}"), crate::forecast::fmt_f64(d.l[j * (j - 1) / 2 + i])])?;
        }
    }
    for (i, p) in d.sv.iter().enumerate() {
        for (n, v) in [("mu", p.mu), ("rho", p.rho), ("sigma", p.sigma)] {
            w.write_record([format!("sv.{n}.{i}"), crate::forecast::fmt_f64(v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Regenerate every replication from its seed and write `rep{r}_truth.csv` / `rep{r}_data.csv`
/// under `dir/{scenario_stem}/`.
pub fn write_replications(cfg: &StudyConfig, dir: &Path) -> Result<()> {
    let nr = cfg.replications;
    for (s, sc) in cfg.scenarios.iter().enumerate() {
        let sub = dir.join(scenario_stem(sc));
        std::fs::create_dir_all(&sub)?;
        for r in 0..nr {
            let mut rng = ChaCha8Rng::seed_from_u64(dgp_seed(cfg.seed, s, r, nr));
            let d = generate_dgp(sc, &mut rng)?;
            write_truth(&sub.join(format!("rep{r}_truth.csv")), &d)?;
            crate::data::write_dataset(&sub.join(format!("rep{r}_data.csv")), &d.data)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_model_is_pure_noise() {
        let mut sc = DgpScenario::new(DgpKind::Sparse, 3, 40);
        sc.own.inclusion = 0.0;
        sc.cross.inclusion = 0.0;
        sc.l.inclusion = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = generate_dgp(&sc, &mut rng).unwrap();
        assert_eq!(d.tries, 1);
        assert!(d.phi.iter().all(|v| *v == 0.0));
        assert_eq!(d.data.y.shape(), (40, 3));
        // innovations are exp(h/2) z with h near -10
        let sd = (d.data.y.iter().map(|v| v * v).sum::<f64>() / 120.0).sqrt();
        assert!(sd > 1e-3 && sd < 0.05, "{sd}");
    }

    #[test]
    fn seed_determinism_and_stability() {
        let sc = DgpScenario::new(DgpKind::Dense, 5, 60);
        let a = generate_dgp(&sc, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = generate_dgp(&sc, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert!(companion_stable(&a.phi, &sc.spec(), true).unwrap());
        for p in &a.sv {
            assert!((0.85..=0.98).contains(&p.rho) && (0.1..=0.3).contains(&p.sigma));
        }
    }

    #[test]
    fn median_of_one_and_even() {
        assert_eq!(median(&[0.3]), 0.3);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert!(median(&[f64::NAN]).is_nan());
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let mut sc = DgpScenario::new(DgpKind::Sparse, 2, 30);
        sc.cross.inclusion = 1.5;
        assert!(sc.validate().is_err());
        let mut sc = DgpScenario::new(DgpKind::Sparse, 2, 30);
        sc.rho_range = (0.9, 1.0);
        assert!(sc.validate().is_err());
    }
}
