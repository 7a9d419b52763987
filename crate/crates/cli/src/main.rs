use clap::{Parser, Subcommand};
use shrinkvar::config::RunConfig;
use shrinkvar::data::Dataset;
use shrinkvar::diagnostics::{induced_prior_experiment, posterior_hoyer, prior_hoyer};
use shrinkvar::dma::dma_run;
use shrinkvar::error::{Error, Result};
use shrinkvar::forecast::{fmt_f64, ScorePanel};
use shrinkvar::groups::GroupIndex;
use shrinkvar::io::{write_draws, PosteriorSummary};
use shrinkvar::model::{build_design, VarSpec};
use shrinkvar::pool::task_seed;
use shrinkvar::sampler::{run_mcmc, McmcConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const HOYER_SHARDS: usize = 64;
const QQ_POINTS: usize = 99;

#[derive(Parser)]
#[command(name = "shrinkvar", version, about = "Bayesian VARs with stochastic volatility and shrinkage priors")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit every configured model on the full sample.
    Estimate,
    /// Recursive out-of-sample exercise; writes score panels.
    Forecast,
    /// Simulation study over the configured scenarios.
    Simulate,
    /// Prior marginals, Hoyer summaries and the induced-prior experiment.
    PriorDiagnose,
    /// Dynamic model averaging over a score panel.
    Dma,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let field = match &e {
                Error::Config { field, .. } => serde_json::Value::String(field.clone()),
                _ => serde_json::Value::Null,
            };
            let record = serde_json::json!({ "kind": e.kind(), "message": e.to_string(), "field": field });
            eprintln!("{record}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config { field: "--config".into(), message: "a config file is required".into() })?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out)?;
    cfg.write_lock(&out)?;
    match cli.command {
        Command::Estimate => estimate(&cfg, &out),
        Command::Forecast => forecast(&cfg, &out),
        Command::Simulate => simulate(&cfg, &out),
        Command::PriorDiagnose => prior_diagnose(&cfg, &out),
        Command::Dma => dma(&cfg, &out),
    }
}

fn estimate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let ds = cfg.load_data()?;
    let models = cfg.forecast_models(&ds)?;
    for dir in ["draws", "summaries", "diagnostics"] {
        std::fs::create_dir_all(out.join(dir))?;
    }
    for (i, m) in models.iter().enumerate() {
        let sub: Dataset = ds.select(&m.variables)?;
        let spec = VarSpec::new(sub.nvars(), m.p, m.intercept)?;
        let design = build_design(&sub, &spec)?;
        let mcmc = McmcConfig { seed: task_seed(cfg.mcmc.seed, i), ..cfg.mcmc };
        let draws = run_mcmc(&design, &spec, &m.priors, &mcmc)?;
        write_draws(&out.join("draws").join(format!("{}.bin", m.name)), &draws)?;
        PosteriorSummary::from_draws(&draws, &m.variables)?.write_csv(&out.join("summaries").join(format!("{}.csv", m.name)))?;
        let h = posterior_hoyer(&draws, &GroupIndex::lag_class(&spec))?;
        let mut w = csv::Writer::from_path(out.join("diagnostics").join(format!("{}_hoyer.csv", m.name)))?;
        w.write_record(["group", "mean_hoyer", "draws_used", "draws_excluded"])?;
        for g in 0..h.labels.len() {
            w.write_record([h.labels[g].clone(), fmt_f64(h.mean[g]), h.used[g].to_string(), h.excluded[g].to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn forecast(cfg: &RunConfig, out: &Path) -> Result<()> {
    let ds = cfg.load_data()?;
    let models = cfg.forecast_models(&ds)?;
    let ex = cfg.exercise()?;
    let panels = shrinkvar::forecast::recursive_exercise(&ds, &models, &ex)?;
    let benchmark = cfg.forecast.as_ref().and_then(|f| f.benchmark.as_deref());
    let dir = out.join("scores");
    std::fs::create_dir_all(&dir)?;
    let mut failures = Vec::new();
    for p in &panels {
        p.write_csv(&dir.join(format!("{}.csv", p.stem())))?;
        p.write_cumulative_csv(&dir.join(format!("{}_cumulative.csv", p.stem())), benchmark)?;
        failures.extend(p.failures.iter().map(|f| (p.stem(), f.clone())));
    }
    let mut w = csv::Writer::from_path(dir.join("failures.csv"))?;
    w.write_record(["panel", "message"])?;
    for (stem, msg) in failures {
        w.write_record([stem, msg])?;
    }
    w.flush()?;
    Ok(())
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let study = cfg.study()?;
    let dir = out.join("simulate");
    std::fs::create_dir_all(&dir)?;
    if cfg.simulate.as_ref().is_some_and(|s| s.write_data) {
        shrinkvar::dgp::write_replications(&study, &dir)?;
    }
    let table = shrinkvar::dgp::run_sim_study(&study)?;
    table.write_csv(&dir.join("study.csv"))?;
    let mut w = csv::Writer::from_path(dir.join("study_replications.csv"))?;
    w.write_record(["scenario", "M", "T", "prior", "replication", "mae", "rmspd"])?;
    for r in &table.rows {
        for k in 0..r.mae.len() {
            w.write_record([r.kind.to_string(), r.m.to_string(), r.t.to_string(), r.prior.clone(), k.to_string(), fmt_f64(r.mae[k]), fmt_f64(r.rmspd[k])])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn prior_diagnose(cfg: &RunConfig, out: &Path) -> Result<()> {
    let pd = cfg.prior_diagnose.as_ref().ok_or_else(|| Error::Config { field: "prior_diagnose".into(), message: "section required by this subcommand".into() })?;
    let dir = out.join("diagnostics");
    std::fs::create_dir_all(&dir)?;

    if !pd.marginals.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("marginal_density.csv"))?;
        let mut header = vec!["phi".to_string()];
        header.extend(pd.marginals.iter().map(|m| m.name.clone()));
        w.write_record(&header)?;
        let g = pd.grid;
        for i in 0..g.points {
            let x = g.lo + (g.hi - g.lo) * i as f64 / (g.points - 1) as f64;
            let mut rec = vec![fmt_f64(x)];
            for m in &pd.marginals {
                rec.push(fmt_f64(m.marginal.density(x)?));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
    }

    if !pd.hoyer.is_empty() {
        let mut summary = csv::Writer::from_path(dir.join("hoyer_summary.csv"))?;
        summary.write_record(["prior", "mean", "sd", "q05", "median", "q95"])?;
        let mut draws_w = csv::Writer::from_path(dir.join("hoyer_draws.csv"))?;
        draws_w.write_record(["prior", "draw", "hoyer"])?;
        for (i, h) in pd.hoyer.iter().enumerate() {
            let v = prior_hoyer(&h.prior, pd.n, pd.draws, task_seed(cfg.seed, i), HOYER_SHARDS, cfg.threads)?;
            for (d, x) in v.iter().enumerate() {
                draws_w.write_record([h.name.clone(), d.to_string(), fmt_f64(*x)])?;
            }
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
            let mut s = v.clone();
            s.sort_by(f64::total_cmp);
            let q = |p| fmt_f64(shrinkvar::io::quantile_sorted(&s, p));
            summary.write_record([h.name.clone(), fmt_f64(mean), fmt_f64(sd), q(0.05), q(0.5), q(0.95)])?;
        }
        summary.flush()?;
        draws_w.flush()?;
    }

    if let Some(ind) = pd.induced {
        let r = induced_prior_experiment(ind.m, ind.variance, ind.draws, cfg.seed)?;
        let mut w = csv::Writer::from_path(dir.join("induced_kurtosis.csv"))?;
        w.write_record(["column", "excess_kurtosis", "ks_statistic", "ks_pvalue"])?;
        for c in 0..r.m {
            w.write_record([(c + 1).to_string(), fmt_f64(r.kurtosis[c]), fmt_f64(r.ks[c].0), fmt_f64(r.ks[c].1)])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("induced_qq.csv"))?;
        w.write_record(["column", "probability", "sample_quantile", "normal_quantile"])?;
        for c in 0..r.m {
            for (p, s, n) in r.qq(c, QQ_POINTS)? {
                w.write_record([(c + 1).to_string(), fmt_f64(p), fmt_f64(s), fmt_f64(n)])?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

fn dma(cfg: &RunConfig, out: &Path) -> Result<()> {
    let d = cfg.dma.as_ref().ok_or_else(|| Error::Config { field: "dma".into(), message: "section required by this subcommand".into() })?;
    let stem = format!("h{}_{}", d.horizon, d.subset);
    let path = d.panel.clone().unwrap_or_else(|| out.join("scores").join(format!("{stem}.csv")));
    let panel = ScorePanel::read_csv(&path, d.horizon, &d.subset)?;
    let res = dma_run(&panel, d.alpha, d.init.as_deref())?;
    let dir = out.join("dma");
    std::fs::create_dir_all(&dir)?;
    res.write(&dir, &stem)
}
