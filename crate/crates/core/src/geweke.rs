//! Joint-distribution ("getting it right") tests of the Gibbs sampler: the
//! marginal-conditional simulator draws (theta, Y) from prior and likelihood,
//! the successive-conditional simulator alternates a posterior sweep with a
//! fresh Y given theta. Both target the same joint law.

use crate::dist;
use crate::error::{Error, Result};
use crate::model::{sigma_chol, Design, VarSpec};
use crate::sampler::{draw_l, draw_phi_triangular, Chain, ModelPriors};
use crate::sv::{sample_params, simulate_path, SvConfig, SvState, MIX_M, MIX_P, MIX_V};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, PartialEq)]
pub struct GewekeStat {
    pub name: String,
    pub marginal_mean: f64,
    pub successive_mean: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GewekeReport {
    pub stats: Vec<GewekeStat>,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.stats.iter().map(|s| s.z.abs()).fold(0.0, f64::max)
    }

    pub fn passes(&self, z_crit: f64, min_stats: usize) -> bool {
        self.stats.len() >= min_stats && self.stats.iter().all(|s| s.z.abs() < z_crit)
    }
}

#[derive(Debug, Clone)]
pub struct GewekeConfig {
    pub m: usize,
    pub t: usize,
    pub priors: ModelPriors,
    pub sweeps: usize,
    pub batches: usize,
    pub seed: u64,
}

fn squash_pos(v: f64) -> f64 {
    if v > 0.0 {
        v.ln().atan()
    } else {
        -FRAC_PI_2
    }
}

fn mean_se(x: &[f64], batches: usize) -> (f64, f64) {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let b = batches.clamp(2, n);
    let size = n / b;
    let bm: Vec<f64> = (0..b).map(|i| x[i * size..(i + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let bmean = bm.iter().sum::<f64>() / b as f64;
    let var = bm.iter().map(|v| (v - bmean).powi(2)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

fn compare(names: &[String], mc: &[Vec<f64>], sc: &[Vec<f64>], batches: usize) -> GewekeReport {
    let stats = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let (m1, s1) = mean_se(&mc[k], batches);
            let (m2, s2) = mean_se(&sc[k], batches);
            let se = (s1 * s1 + s2 * s2).sqrt();
            let z = if se > 0.0 { (m1 - m2) / se } else if m1 == m2 { 0.0 } else { f64::INFINITY };
            GewekeStat { name: name.clone(), marginal_mean: m1, successive_mean: m2, z }
        })
        .collect();
    GewekeReport { stats }
}

/// Fixed log-variance path used when SV is held constant.
fn fixed_h(t: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(t, m, |s, i| 0.5 * ((s as f64) / 3.0 + i as f64).sin())
}

struct VarModel {
    chain: Chain,
    h: DMatrix<f64>,
}

impl VarModel {
    fn new(cfg: &GewekeConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let spec = VarSpec::new(cfg.m, 1, false)?;
        let x = DMatrix::from_fn(cfg.t, spec.k(), |_, _| dist::std_normal(rng));
        let y = DMatrix::from_fn(cfg.t, cfg.m, |_, _| dist::std_normal(rng));
        let design = Design { x, y };
        let chain = Chain::new(&design, &spec, &cfg.priors)?;
        Ok(VarModel { chain, h: fixed_h(cfg.t, cfg.m) })
    }

    fn draw_theta(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        let c = &mut self.chain;
        c.phi_prior.sample_from_prior(rng)?;
        c.l_prior.sample_from_prior(rng)?;
        let v = c.phi_prior.variances();
        for (j, p) in c.phi.as_mut_slice().iter_mut().enumerate() {
            *p = v[j].sqrt() * dist::std_normal(rng);
        }
        let vl = c.l_prior.variances();
        for (j, l) in c.l.iter_mut().enumerate() {
            *l = vl[j].sqrt() * dist::std_normal(rng);
        }
        Ok(())
    }

    fn draw_y(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        let c = &mut self.chain;
        let mean = &c.x * &c.phi;
        for t in 0..c.y.nrows() {
            let h: Vec<f64> = self.h.row(t).iter().cloned().collect();
            let z = DVector::from_fn(c.spec.m, |_, _| dist::std_normal(rng));
            let e = sigma_chol(&c.l, &h)? * z;
            for i in 0..c.spec.m {
                c.y[(t, i)] = mean[(t, i)] + e[i];
            }
        }
        Ok(())
    }

    fn sweep(&mut self, iter: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        let c = &mut self.chain;
        let v = c.phi_prior.variances();
        draw_phi_triangular(&c.x, &c.y, &mut c.phi, &c.l, &self.h, &v, rng).map_err(|e| e.at_step(iter, "phi"))?;
        let eps = c.residuals();
        let vl = c.l_prior.variances();
        c.l = draw_l(&eps, &self.h, &vl, rng).map_err(|e| e.at_step(iter, "l"))?;
        c.update_priors(rng, iter)
    }

    fn names(&self) -> Vec<String> {
        let c = &self.chain;
        let mut out = Vec::new();
        for j in 0..c.spec.n() {
            out.push(format!("phi{j}/(1+|phi{j}|)"));
            out.push(format!("phi{j}^2/(1+phi{j}^2)"));
            out.push(format!("atan ln v{j}"));
        }
        for j in 0..c.l.len() {
            out.push(format!("l{j}/(1+|l{j}|)"));
            out.push(format!("l{j}^2/(1+l{j}^2)"));
            out.push(format!("atan ln vl{j}"));
        }
        out.push("tanh(phi0 phi1)".into());
        for n in c.phi_prior.hyper_names() {
            out.push(format!("atan ln {n}"));
        }
        for n in c.l_prior.hyper_names() {
            out.push(format!("atan ln l:{n}"));
        }
        for i in 0..c.spec.m {
            out.push(format!("tanh mean y{i}"));
            out.push(format!("atan ln mean y{i}^2"));
        }
        out.push("tanh mean x0 y0".into());
        out
    }

    fn stats(&self) -> Vec<f64> {
        let c = &self.chain;
        let mut out = Vec::new();
        let v = c.phi_prior.variances();
        for (j, p) in c.phi.as_slice().iter().enumerate() {
            out.push(p / (1.0 + p.abs()));
            out.push(p * p / (1.0 + p * p));
            out.push(squash_pos(v[j]));
        }
        let vl = c.l_prior.variances();
        for (j, l) in c.l.iter().enumerate() {
            out.push(l / (1.0 + l.abs()));
            out.push(l * l / (1.0 + l * l));
            out.push(squash_pos(vl[j]));
        }
        let ph = c.phi.as_slice();
        out.push((ph[0] * ph[1]).tanh());
        out.extend(c.phi_prior.hyper_values().into_iter().map(squash_pos));
        out.extend(c.l_prior.hyper_values().into_iter().map(squash_pos));
        let t = c.y.nrows() as f64;
        for i in 0..c.spec.m {
            let col = c.y.column(i);
            out.push((col.sum() / t).tanh());
            out.push(squash_pos(col.norm_squared() / t));
        }
        out.push((c.x.column(0).dot(&c.y.column(0)) / t).tanh());
        out
    }
}

fn run<S, FT, FY, FS, FG>(sweeps: usize, state: &mut S, rng: &mut ChaCha8Rng, n_stats: usize, draw_theta: FT, draw_y: FY, sweep: FS, stats: FG) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)>
where
    FT: Fn(&mut S, &mut ChaCha8Rng) -> Result<()>,
    FY: Fn(&mut S, &mut ChaCha8Rng) -> Result<()>,
    FS: Fn(&mut S, usize, &mut ChaCha8Rng) -> Result<()>,
    FG: Fn(&S) -> Vec<f64>,
{
    let mut mc = vec![Vec::with_capacity(sweeps); n_stats];
    for _ in 0..sweeps {
        draw_theta(state, rng)?;
        draw_y(state, rng)?;
        for (k, v) in stats(state).into_iter().enumerate() {
            mc[k].push(v);
        }
    }
    let mut sc = vec![Vec::with_capacity(sweeps); n_stats];
    draw_theta(state, rng)?;
    draw_y(state, rng)?;
    for it in 0..sweeps {
        sweep(state, it, rng)?;
        draw_y(state, rng)?;
        for (k, v) in stats(state).into_iter().enumerate() {
            sc[k].push(v);
        }
    }
    Ok((mc, sc))
}

/// Test the coefficient, covariance-factor and prior blocks with volatility held fixed.
/// X is drawn once and kept; p = 1 without intercept.
pub fn geweke_var(cfg: &GewekeConfig) -> Result<GewekeReport> {
    if cfg.sweeps < 2 * cfg.batches.max(2) {
        return Err(Error::InvalidParameter("need at least two sweeps per batch".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = VarModel::new(cfg, &mut rng)?;
    let names = model.names();
    let (mc, sc) = run(
        cfg.sweeps,
        &mut model,
        &mut rng,
        names.len(),
        |m, r| m.draw_theta(r),
        |m, r| m.draw_y(r),
        |m, it, r| m.sweep(it, r),
        |m| m.stats(),
    )?;
    Ok(compare(&names, &mc, &sc, cfg.batches))
}

struct SvModel {
    state: SvState,
    ystar: Vec<f64>,
    cfg: SvConfig,
}

impl SvModel {
    fn draw_theta(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        let p = sample_params(&self.cfg, rng)?;
        self.state.params = p;
        self.state.path = simulate_path(&p, self.ystar.len(), rng);
        Ok(())
    }

    /// y*_t = h_t + log chi-square(1) approximated by the ten-component mixture.
    fn draw_y(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        let ln_p: Vec<f64> = MIX_P.iter().map(|p| p.ln()).collect();
        for t in 0..self.ystar.len() {
            let c = dist::discrete(&ln_p, rng)?;
            self.ystar[t] = self.state.path.h[t] + MIX_M[c] + MIX_V[c].sqrt() * dist::std_normal(rng);
        }
        Ok(())
    }

    fn stats(&self) -> Vec<f64> {
        let p = self.state.params;
        let h = &self.state.path.h;
        let t = h.len();
        let mh = h.iter().sum::<f64>() / t as f64;
        let vh = h.iter().map(|v| (v - mh).powi(2)).sum::<f64>() / t as f64;
        let my = self.ystar.iter().sum::<f64>() / t as f64;
        let sq = |v: f64| v / (1.0 + v.abs());
        vec![
            sq(p.mu),
            p.mu.atan(),
            sq(p.mu * p.mu),
            p.rho,
            p.rho * p.rho,
            p.rho.powi(4),
            sq(p.sigma),
            sq(p.sigma * p.sigma),
            p.sigma.ln().atan(),
            sq(self.state.path.h0),
            sq(h[0]),
            sq(h[t / 2]),
            sq(h[t - 1]),
            sq(mh),
            squash_pos(vh),
            sq(my),
            (p.mu * p.rho).tanh(),
            (p.sigma * p.rho).tanh(),
            (h[0] * h[t - 1]).tanh(),
            sq(h[t - 1] - h[0]),
            (my - mh).tanh(),
        ]
    }
}

pub const SV_STAT_NAMES: [&str; 21] = [
    "mu/(1+|mu|)",
    "atan mu",
    "mu^2/(1+mu^2)",
    "rho",
    "rho^2",
    "rho^4",
    "sigma/(1+sigma)",
    "sigma^2/(1+sigma^2)",
    "atan ln sigma",
    "h0",
    "h1",
    "h_mid",
    "h_T",
    "mean h",
    "atan ln var h",
    "mean y*",
    "tanh mu rho",
    "tanh sigma rho",
    "tanh h1 h_T",
    "h_T - h1",
    "tanh(mean y* - mean h)",
];

/// Test the volatility block on the mixture-approximated observation equation.
pub fn geweke_sv(cfg: &SvConfig, t: usize, sweeps: usize, batches: usize, seed: u64) -> Result<GewekeReport> {
    cfg.validate("sv")?;
    if t < 3 || sweeps < 2 * batches.max(2) {
        return Err(Error::InvalidParameter("need T >= 3 and at least two sweeps per batch".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = SvModel { state: SvState::init(t, 0.0, cfg), ystar: vec![0.0; t], cfg: *cfg };
    let (mc, sc) = run(
        sweeps,
        &mut model,
        &mut rng,
        SV_STAT_NAMES.len(),
        |m, r| m.draw_theta(r),
        |m, r| m.draw_y(r),
        |m, _, r| {
            let y = m.ystar.clone();
            m.state.update_ystar(&y, &m.cfg, r)
        },
        |m| m.stats(),
    )?;
    let names: Vec<String> = SV_STAT_NAMES.iter().map(|s| s.to_string()).collect();
    Ok(compare(&names, &mc, &sc, batches))
}
