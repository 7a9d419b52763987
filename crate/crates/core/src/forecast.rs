//! Predictive mixtures, log predictive likelihoods and the recursive
//! expanding-window forecast exercise.

use crate::data::{Dataset, Quarter};
use crate::dist;
use crate::error::{Error, Result};
use crate::model::{build_design, companion_stable, next_regressor, sigma_chol, VarSpec};
use crate::pool::{run_tasks, task_seed};
use crate::sampler::{run_mcmc, McmcConfig, ModelPriors, PosteriorDraws};
use crate::special::log_sum_exp;
use crate::sv::sv_forecast;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

/// One Gaussian component: mean and lower Cholesky factor of its covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub mean: DVector<f64>,
    pub chol: DMatrix<f64>,
}

impl Component {
    pub fn cov(&self) -> DMatrix<f64> {
        &self.chol * self.chol.transpose()
    }
}

/// Equally weighted Gaussian mixture approximating the h-step predictive density.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveMixture {
    pub horizon: usize,
    pub components: Vec<Component>,
}

impl PredictiveMixture {
    pub fn mean(&self) -> DVector<f64> {
        let m = self.components[0].mean.len();
        let mut out = DVector::zeros(m);
        for c in &self.components {
            out += &c.mean;
        }
        out / self.components.len() as f64
    }
}

/// Build the predictive mixture from posterior draws. `y_hist` holds the sample
/// (at least p rows); multi-step horizons simulate `paths_per_draw` paths per draw.
pub fn predictive_mixture<R: Rng + ?Sized>(
    draws: &PosteriorDraws,
    y_hist: &DMatrix<f64>,
    horizon: usize,
    paths_per_draw: usize,
    stable_only: bool,
    rng: &mut R,
) -> Result<PredictiveMixture> {
    let spec = draws.spec;
    if draws.n_draws == 0 {
        return Err(Error::EmptyInput("posterior draws".into()));
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    if y_hist.ncols() != spec.m || y_hist.nrows() < spec.p {
        return Err(Error::Dimension(format!("history is {}x{}, model needs {} series and {} lags", y_hist.nrows(), y_hist.ncols(), spec.m, spec.p)));
    }
    let paths = if horizon == 1 { 1 } else { paths_per_draw.max(1) };
    let mut comps = Vec::with_capacity(draws.n_draws * paths);
    let tail = y_hist.rows(y_hist.nrows() - spec.p, spec.p).into_owned();
    for d in 0..draws.n_draws {
        let phi = draws.phi_matrix(d);
        if stable_only && !companion_stable(&phi, &spec, true)? {
            continue;
        }
        let l = draws.l_draw(d);
        let params: Vec<_> = (0..spec.m).map(|i| draws.sv_params(d, i)).collect();
        for _ in 0..paths {
            let mut hist = tail.clone();
            let mut h: Vec<f64> = draws.h_last_draw(d).to_vec();
            for s in 1..=horizon {
                for i in 0..spec.m {
                    h[i] = sv_forecast(h[i], &params[i], 1, rng)[0];
                }
                let x = next_regressor(&hist, &spec)?;
                let mean = phi.transpose() * x;
                let chol = sigma_chol(l, &h)?;
                if chol.iter().any(|v| !v.is_finite()) || mean.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("predictive component of draw {d}")));
                }
                if s == horizon {
                    comps.push(Component { mean, chol });
                } else {
                    let z = DVector::from_fn(spec.m, |_, _| dist::std_normal(rng));
                    let y = mean + &chol * z;
                    hist = shift_in(&hist, &y);
                }
            }
        }
    }
    if comps.is_empty() {
        return Err(Error::EmptyInput("no draws passed the stability filter".into()));
    }
    Ok(PredictiveMixture { horizon, components: comps })
}

fn shift_in(hist: &DMatrix<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    let p = hist.nrows();
    let mut out = DMatrix::zeros(p, hist.ncols());
    for r in 0..p - 1 {
        out.set_row(r, &hist.row(r + 1));
    }
    out.set_row(p - 1, &y.transpose());
    out
}

fn ln_mvn_chol(y: &DVector<f64>, mean: &DVector<f64>, chol: &DMatrix<f64>) -> Result<f64> {
    let m = y.len();
    let z = chol.solve_lower_triangular(&(y - mean)).ok_or_else(|| Error::Singular("component covariance".into()))?;
    let ln_det: f64 = (0..m).map(|i| chol[(i, i)].ln()).sum();
    Ok(-0.5 * (m as f64 * (2.0 * PI).ln() + z.norm_squared()) - ln_det)
}

/// Log density of the mixture at `y_obs` (full length M) for the variables in `subset`.
pub fn log_predictive_likelihood(mix: &PredictiveMixture, y_obs: &DVector<f64>, subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::EmptyInput("variable subset".into()));
    }
    let m = mix.components[0].mean.len();
    if y_obs.len() != m || subset.iter().any(|&i| i >= m) {
        return Err(Error::Dimension(format!("subset {subset:?} or observation of length {} for M = {m}", y_obs.len())));
    }
    let full = subset.len() == m && subset.iter().enumerate().all(|(k, &i)| k == i);
    let ys = DVector::from_fn(subset.len(), |k, _| y_obs[subset[k]]);
    let mut lds = Vec::with_capacity(mix.components.len());
    for c in &mix.components {
        let ld = if full {
            ln_mvn_chol(y_obs, &c.mean, &c.chol)?
        } else {
            let cov = c.cov();
            let sub = DMatrix::from_fn(subset.len(), subset.len(), |a, b| cov[(subset[a], subset[b])]);
            let mean = DVector::from_fn(subset.len(), |k, _| c.mean[subset[k]]);
            let ch = sub.cholesky().ok_or(Error::Cholesky { equation: subset[0] })?;
            ln_mvn_chol(&ys, &mean, &ch.l())?
        };
        lds.push(ld);
    }
    let v = log_sum_exp(&lds) - (lds.len() as f64).ln();
    if v == f64::NEG_INFINITY || v.is_nan() {
        return Err(Error::Underflow);
    }
    Ok(v)
}

/// A model in the forecast exercise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastModel {
    pub name: String,
    pub variables: Vec<String>,
    pub p: usize,
    pub intercept: bool,
    pub priors: ModelPriors,
}

/// Named variable subset; `None` scores all of a model's variables jointly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subset {
    pub name: String,
    pub variables: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExerciseConfig {
    pub first_window_end: Quarter,
    pub last_target: Quarter,
    pub horizons: Vec<usize>,
    pub subsets: Vec<Subset>,
    pub paths_per_draw: usize,
    pub stable_only: bool,
    pub mcmc: McmcConfig,
    pub threads: Option<usize>,
}

/// Windows x models table of log predictive likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePanel {
    pub horizon: usize,
    pub subset: String,
    pub labels: Vec<Quarter>,
    pub models: Vec<String>,
    /// values[window][model]; NaN marks a failed cell.
    pub values: Vec<Vec<f64>>,
    pub failures: Vec<String>,
}

impl ScorePanel {
    /// File stem `h{horizon}_{subset}`.
    pub fn stem(&self) -> String {
        format!("h{}_{}", self.horizon, self.subset)
    }

    /// Prefix sums per model, minus the benchmark's prefix sums when named.
    pub fn cumulative(&self, benchmark: Option<&str>) -> Result<Vec<Vec<f64>>> {
        let b = match benchmark {
            Some(name) => Some(
                self.models.iter().position(|m| m == name).ok_or_else(|| Error::config("forecast.benchmark", format!("unknown model `{name}`")))?,
            ),
            None => None,
        };
        let mut acc = vec![0.0; self.models.len()];
        let mut out = Vec::with_capacity(self.values.len());
        for row in &self.values {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
            out.push(match b {
                Some(bi) => acc.iter().map(|a| a - acc[bi]).collect(),
                None => acc.clone(),
            });
        }
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_table(path, &self.labels, &self.models, &self.values)
    }

    pub fn write_cumulative_csv(&self, path: &Path, benchmark: Option<&str>) -> Result<()> {
        write_table(path, &self.labels, &self.models, &self.cumulative(benchmark)?)
    }

    /// Read a panel written by `write_csv`.
    pub fn read_csv(path: &Path, horizon: usize, subset: &str) -> Result<ScorePanel> {
        let (labels, models, values) = read_table(path)?;
        Ok(ScorePanel { horizon, subset: subset.to_string(), labels, models, values, failures: Vec::new() })
    }
}

/// Render a float at 17 significant digits; NaN as `NA`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    let s = s.trim();
    if s == "NA" {
        return Ok(f64::NAN);
    }
    s.parse().map_err(|_| Error::InvalidParameter(format!("not a number: `{s}`")))
}

pub(crate) fn write_table(path: &Path, labels: &[Quarter], cols: &[String], rows: &[Vec<f64>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["window".to_string()];
    header.extend(cols.iter().cloned());
    w.write_record(&header)?;
    for (l, row) in labels.iter().zip(rows) {
        let mut rec = vec![l.to_string()];
        rec.extend(row.iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_table(path: &Path) -> Result<(Vec<Quarter>, Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.len() < 2 || &header[0] != "window" {
        return Err(Error::Parse { path: path.to_path_buf(), line: 1, message: "expected header `window,<model>,...`".into() });
    }
    let cols: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let perr = |m: String| Error::Parse { path: path.to_path_buf(), line, message: m };
        if rec.len() != cols.len() + 1 {
            return Err(perr(format!("{} fields, expected {}", rec.len(), cols.len() + 1)));
        }
        labels.push(rec[0].parse::<Quarter>().map_err(|e| perr(e.to_string()))?);
        rows.push(rec.iter().skip(1).map(parse_f64).collect::<Result<Vec<f64>>>().map_err(|e| perr(e.to_string()))?);
    }
    Ok((labels, cols, rows))
}

/// Fit every model on each expanding window and score the realized observations.
pub fn recursive_exercise(ds: &Dataset, models: &[ForecastModel], cfg: &ExerciseConfig) -> Result<Vec<ScorePanel>> {
    if models.is_empty() {
        return Err(Error::EmptyInput("forecast models".into()));
    }
    if cfg.horizons.is_empty() || cfg.horizons.contains(&0) {
        return Err(Error::config("forecast.horizons", "need at least one positive horizon"));
    }
    let first = ds
        .date_index(cfg.first_window_end)
        .ok_or_else(|| Error::config("forecast.first_window_end", format!("{} not in the data", cfg.first_window_end)))?;
    let last = ds
        .date_index(cfg.last_target)
        .ok_or_else(|| Error::config("forecast.last_target", format!("{} not in the data", cfg.last_target)))?;
    if last <= first {
        return Err(Error::config("forecast.last_target", "must come after the first window end"));
    }
    let ends: Vec<usize> = (first..last).collect();
    let n_models = models.len();
    let model_data: Vec<Dataset> = models.iter().map(|m| ds.select(&m.variables)).collect::<Result<_>>()?;

    // one task per (window, model): fit, then score all horizons and subsets
    let tasks = run_tasks(ends.len() * n_models, cfg.threads, |task| {
        let (w, mi) = (task / n_models, task % n_models);
        let seed = task_seed(cfg.mcmc.seed, task);
        score_task(&model_data[mi], &models[mi], ends[w], last, cfg, seed)
    })?;

    let mut panels = Vec::new();
    for &h in &cfg.horizons {
        for (si, sub) in cfg.subsets.iter().enumerate() {
            let mut labels = Vec::new();
            let mut values = Vec::new();
            let mut failures = Vec::new();
            for (w, &end) in ends.iter().enumerate() {
                if end + h > last {
                    continue;
                }
                labels.push(ds.dates[end + h]);
                let mut row = Vec::with_capacity(n_models);
                for mi in 0..n_models {
                    match &tasks[w * n_models + mi] {
                        Ok(scores) => match &scores[&(h, si)] {
                            Ok(v) => row.push(*v),
                            Err(e) => {
                                failures.push(format!("{} {}: {e}", ds.dates[end + h], models[mi].name));
                                row.push(f64::NAN);
                            }
                        },
                        Err(e) => {
                            failures.push(format!("{} {}: {e}", ds.dates[end + h], models[mi].name));
                            row.push(f64::NAN);
                        }
                    }
                }
                values.push(row);
            }
            panels.push(ScorePanel {
                horizon: h,
                subset: sub.name.clone(),
                labels,
                models: models.iter().map(|m| m.name.clone()).collect(),
                values,
                failures,
            });
        }
    }
    Ok(panels)
}

type TaskScores = std::collections::HashMap<(usize, usize), Result<f64>>;

fn score_task(data: &Dataset, model: &ForecastModel, end: usize, last: usize, cfg: &ExerciseConfig, seed: u64) -> Result<TaskScores> {
    let spec = VarSpec::new(data.nvars(), model.p, model.intercept)?;
    let window = data.truncate(end);
    let design = build_design(&window, &spec)?;
    let mcmc = McmcConfig { seed, ..cfg.mcmc };
    let draws = run_mcmc(&design, &spec, &model.priors, &mcmc)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut out = TaskScores::new();
    for &h in &cfg.horizons {
        if end + h > last {
            continue;
        }
        let mix = predictive_mixture(&draws, &window.y, h, cfg.paths_per_draw, cfg.stable_only, &mut rng);
        let y_obs = data.y.row(end + h).transpose();
        for (si, sub) in cfg.subsets.iter().enumerate() {
            let r = match &mix {
                Ok(mix) => subset_indices(data, sub).and_then(|idx| log_predictive_likelihood(mix, &y_obs, &idx)),
                Err(e) => Err(Error::InvalidParameter(e.to_string())),
            };
            out.insert((h, si), r);
        }
    }
    Ok(out)
}

fn subset_indices(data: &Dataset, sub: &Subset) -> Result<Vec<usize>> {
    match &sub.variables {
        None => Ok((0..data.nvars()).collect()),
        Some(v) => data.indices_of(v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comp(mean: &[f64], cov: DMatrix<f64>) -> Component {
        Component { mean: DVector::from_column_slice(mean), chol: cov.cholesky().unwrap().l() }
    }

    #[test]
    fn standard_normal_at_mode() {
        let mix = PredictiveMixture { horizon: 1, components: vec![comp(&[0.0, 0.0], DMatrix::identity(2, 2))] };
        let v = log_predictive_likelihood(&mix, &DVector::zeros(2), &[0, 1]).unwrap();
        assert!((v + (2.0 * PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn subset_of_all_equals_joint() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let mix = PredictiveMixture { horizon: 1, components: vec![comp(&[0.1, -0.2], cov.clone()), comp(&[1.0, 0.0], cov * 2.0)] };
        let y = DVector::from_column_slice(&[0.5, 0.5]);
        let a = log_predictive_likelihood(&mix, &y, &[0, 1]).unwrap();
        let b = log_predictive_likelihood(&mix, &y, &[1, 0]).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(log_predictive_likelihood(&mix, &y, &[]).is_err());
        assert!(log_predictive_likelihood(&mix, &y, &[2]).is_err());
    }

    #[test]
    fn underflow_is_reported() {
        let mix = PredictiveMixture { horizon: 1, components: vec![comp(&[0.0], DMatrix::from_element(1, 1, 1e-10))] };
        let r = log_predictive_likelihood(&mix, &DVector::from_element(1, 1e200), &[0]);
        assert!(matches!(r, Err(Error::Underflow)), "{r:?}");
    }

    #[test]
    fn cumulative_relative_to_self_is_zero() {
        let p = ScorePanel {
            horizon: 1,
            subset: "all".into(),
            labels: vec![Quarter::new(2000, 1).unwrap(), Quarter::new(2000, 2).unwrap()],
            models: vec!["a".into(), "b".into()],
            values: vec![vec![-1.3, -2.0], vec![-0.7, 0.4]],
            failures: vec![],
        };
        let c = p.cumulative(Some("a")).unwrap();
        assert!(c.iter().all(|r| r[0] == 0.0));
        assert!((c[1][1] - (-1.6 + 2.0)).abs() < 1e-15);
        assert!(p.cumulative(Some("zz")).is_err());
    }

    #[test]
    fn panel_csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = ScorePanel {
            horizon: 1,
            subset: "all".into(),
            labels: vec![Quarter::new(1999, 4).unwrap()],
            models: vec!["x".into(), "y".into()],
            values: vec![vec![-1.0 / 3.0, f64::NAN]],
            failures: vec![],
        };
        let path = dir.path().join("p.csv");
        p.write_csv(&path).unwrap();
        let q = ScorePanel::read_csv(&path, 1, "all").unwrap();
        assert_eq!(q.values[0][0], -1.0 / 3.0);
        assert!(q.values[0][1].is_nan());
        assert_eq!(q.labels, p.labels);
    }
}
