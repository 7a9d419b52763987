use std::path::{Path, PathBuf};
use std::process::Command;

const TOY_CSV: &str = include_str!("../../../configs/toy.csv");

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shrinkvar"))
}

fn setup(dir: &Path, body: &str) -> PathBuf {
    std::fs::write(dir.join("toy.csv"), TOY_CSV).unwrap();
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, body).unwrap();
    cfg
}

fn run(cfg: &Path, sub: &str, extra: &[&str]) -> std::process::Output {
    bin().arg(sub).arg("--config").arg(cfg).args(extra).output().unwrap()
}

fn read_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

const BASE: &str = r#"
seed = 5
output_dir = "out"

[data]
path = "toy.csv"
transforms = { FEDFUNDS = "level" }

[mcmc]
draws = 100
burnin = 50
thin = 1

[[models]]
name = "flat"
p = 1
phi = { family = "flat" }
l = { family = "flat" }

[[models]]
name = "dl"
p = 2
phi = { family = "dl", grouping = "semi-global-local", a = "inv-k" }
"#;

#[test]
fn estimate_writes_draws_and_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), BASE);
    let o = run(&cfg, "estimate", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let d = shrinkvar::io::read_draws(&out.join("draws/dl.bin")).unwrap();
    assert_eq!((d.spec.m, d.spec.p, d.spec.intercept, d.n_draws), (3, 2, true, 100));
    let s = shrinkvar::io::PosteriorSummary::read_csv(&out.join("summaries/dl.csv")).unwrap();
    // 3 x 7 coefficients, 3 covariance elements, 9 SV parameters, then hyperparameters
    assert!(s.rows.len() > 21 + 3 + 9);
    assert!(s.get("phi.GDP.lag2.FEDFUNDS").is_some());
    assert!(s.get("phi.PCE.const").is_some());
    assert!(out.join("config.lock").exists());
    assert!(out.join("diagnostics/dl_hoyer.csv").exists());
}

#[test]
fn forecast_panel_shape_and_dma() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "{BASE}\n[forecast]\nfirst_window_end = \"2005:Q1\"\nlast_target = \"2005:Q4\"\nhorizons = [1]\n\n[dma]\nalpha = 0.95\n"
    );
    let cfg = setup(dir.path(), &body);
    let o = run(&cfg, "forecast", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let (header, rows) = read_rows(&out.join("scores/h1_all.csv"));
    assert_eq!(header, ["window", "flat", "dl"]);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.len() == 3 && r[1..].iter().all(|v| v.parse::<f64>().unwrap().is_finite())));
    let o = run(&cfg, "dma", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, w) = read_rows(&out.join("dma/h1_all_weights_updated.csv"));
    assert_eq!(h, ["window", "flat", "dl"]);
    assert_eq!(w.len(), 3);
}

/// Direct recursion in probability space, no log-sum-exp.
fn oracle(pl: &[Vec<f64>], alpha: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
    let n = pl[0].len();
    let mut w = vec![1.0 / n as f64; n];
    let (mut pred, mut upd, mut score) = (vec![], vec![], vec![]);
    for row in pl {
        let p: Vec<f64> = w.iter().map(|v| v.powf(alpha)).collect();
        let sp: f64 = p.iter().sum();
        let p: Vec<f64> = p.iter().map(|v| v / sp).collect();
        let u: Vec<f64> = p.iter().zip(row).map(|(a, b)| a * b.exp()).collect();
        let su: f64 = u.iter().sum();
        w = u.iter().map(|v| v / su).collect();
        score.push(su.ln());
        pred.push(p);
        upd.push(w.clone());
    }
    (pred, upd, score)
}

#[test]
fn dma_hand_panel_matches_recursion() {
    let dir = tempfile::tempdir().unwrap();
    let panel = "window,a,b,c\n\
2001:Q1,-1.2,-0.7,-2.5\n\
2001:Q2,-0.3,-1.9,-0.8\n\
2001:Q3,-2.2,-0.4,-1.1\n\
2001:Q4,-0.9,-0.9,-0.2\n\
2002:Q1,-1.5,-3.0,-0.6\n";
    std::fs::write(dir.path().join("panel.csv"), panel).unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "output_dir = \"out\"\n[dma]\nalpha = 0.99\npanel = \"panel.csv\"\n").unwrap();
    let o = run(&cfg, "dma", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pl: Vec<Vec<f64>> = panel.lines().skip(1).map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect()).collect();
    let (pred, upd, score) = oracle(&pl, 0.99);
    let out = dir.path().join("out/dma");
    for (file, want) in [("h1_all_weights_predicted.csv", &pred), ("h1_all_weights_updated.csv", &upd)] {
        let (h, rows) = read_rows(&out.join(file));
        assert_eq!(h, ["window", "a", "b", "c"]);
        for (r, w) in rows.iter().zip(want.iter()) {
            for (got, exp) in r[1..].iter().zip(w) {
                assert!((got.parse::<f64>().unwrap() - exp).abs() < 1e-12, "{file}: {got} vs {exp}");
            }
        }
    }
    let (_, rows) = read_rows(&out.join("h1_all_score.csv"));
    for (r, s) in rows.iter().zip(&score) {
        assert!((r[1].parse::<f64>().unwrap() - s).abs() < 1e-12);
    }
}

#[test]
fn reruns_are_byte_identical_and_seed_matters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), BASE);
    let out = dir.path().join("out");
    let snapshot = || {
        ["config.lock", "draws/dl.bin", "summaries/dl.csv", "summaries/flat.csv"]
            .map(|f| std::fs::read(out.join(f)).unwrap())
    };
    assert!(run(&cfg, "estimate", &[]).status.success());
    let a = snapshot();
    assert!(run(&cfg, "estimate", &[]).status.success());
    assert_eq!(a, snapshot());
    assert!(run(&cfg, "estimate", &["--seed", "6"]).status.success());
    let c = snapshot();
    assert_ne!(a[0], c[0]);
    assert_ne!(a[1], c[1]);
}

#[test]
fn config_errors_are_json_records_with_field_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), &BASE.replace("p = 2", "p = 0"));
    let o = run(&cfg, "estimate", &[]);
    assert!(!o.status.success());
    let rec: serde_json::Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(rec["kind"], "config");
    assert_eq!(rec["field"], "models[1].p");

    let cfg = setup(dir.path(), &BASE.replace("path = \"toy.csv\"", "path = \"toy.csv\"\nvariables = [\"GDP\", \"NOPE\"]"));
    let o = run(&cfg, "estimate", &[]);
    assert!(!o.status.success());
    let rec: serde_json::Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(rec["field"], "data.variables.NOPE");

    let o = bin().arg("estimate").arg("--config").arg(dir.path().join("missing.toml")).output().unwrap();
    assert!(!o.status.success());
    let rec: serde_json::Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(rec["kind"], "io");
}

#[test]
fn simulate_writes_truth_data_pairs_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    std::fs::write(
        &cfg,
        r#"
seed = 3
output_dir = "out"
[mcmc]
draws = 50
burnin = 20
thin = 1
[simulate]
replications = 2
priors = ["HM", "SSVS_bl"]
scenarios = [{ kind = "sparse", m = 2, t = 40 }]
"#,
    )
    .unwrap();
    let o = bin().arg("simulate").arg("--config").arg(&cfg).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out/simulate");
    for r in 0..2 {
        let (h, rows) = read_rows(&out.join(format!("sparse_M2_T40/rep{r}_truth.csv")));
        assert_eq!(h, ["parameter", "value"]);
        assert_eq!(rows.len(), 4 + 1 + 6);
        let (h, rows) = read_rows(&out.join(format!("sparse_M2_T40/rep{r}_data.csv")));
        assert_eq!(h.len(), 3);
        assert_eq!(rows.len(), 40);
    }
    let (h, rows) = read_rows(&out.join("study.csv"));
    assert_eq!(h[0], "scenario");
    assert_eq!(rows.len(), 2);
}

#[test]
fn prior_diagnose_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pd.toml");
    std::fs::write(
        &cfg,
        r#"
output_dir = "out"
[prior_diagnose]
n = 50
draws = 200
grid = { lo = -1.0, hi = 1.0, points = 11 }
induced = { m = 3, draws = 500 }
hoyer = [{ name = "dl", prior = { family = "dl", a = 0.5 } }]
marginals = [{ name = "hm", marginal = { family = "hm", c = 0.3, d = 0.3 } }]
"#,
    )
    .unwrap();
    let o = bin().arg("prior-diagnose").arg("--config").arg(&cfg).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out/diagnostics");
    let (h, rows) = read_rows(&out.join("marginal_density.csv"));
    assert_eq!(h, ["phi", "hm"]);
    assert_eq!(rows.len(), 11);
    let (_, rows) = read_rows(&out.join("hoyer_summary.csv"));
    let mean: f64 = rows[0][1].parse().unwrap();
    assert!((0.0..=1.0).contains(&mean));
    let (_, rows) = read_rows(&out.join("induced_kurtosis.csv"));
    assert_eq!(rows.len(), 3);
    let (_, rows) = read_rows(&out.join("induced_qq.csv"));
    assert_eq!(rows.len(), 3 * 99);
}
