//! Sparsity measures, accuracy metrics, univariate marginal prior densities,
//! prior simulation and the induced-prior experiment.

use crate::dist;
use crate::error::{Error, Result};
use crate::groups::GroupIndex;
use crate::model::reduced_from_structural;
use crate::pool::{run_tasks, task_seed};
use crate::priors::{PriorConfig, PriorState};
use crate::quad;
use crate::sampler::PosteriorDraws;
use crate::special::{excess_kurtosis, ln_bessel_k, ln_gamma};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::{LN_2, PI};

/// Hoyer sparseness of `x` (length at least 2, not all zero).
pub fn hoyer(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("hoyer needs at least 2 entries, got {n}")));
    }
    // rescale by the largest magnitude so tiny or huge entries neither underflow nor overflow
    let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::InvalidParameter("hoyer of an all-zero or non-finite vector".into()));
    }
    let (l1, l2) = x.iter().fold((0.0, 0.0), |(a, b), v| {
        let u = v.abs() / m;
        (a + u, b + u * u)
    });
    let sn = (n as f64).sqrt();
    Ok(((sn - l1 / l2.sqrt()) / (sn - 1.0)).clamp(0.0, 1.0))
}

/// Hoyer sparseness from log-magnitudes.
pub fn hoyer_ln(ln_abs: &[f64]) -> Result<f64> {
    let m = ln_abs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::InvalidParameter("hoyer of an all-zero or non-finite vector".into()));
    }
    let x: Vec<f64> = ln_abs.iter().map(|v| (v - m).exp()).collect();
    hoyer(&x)
}

fn prior_state(cfg: &PriorConfig, n: usize) -> Result<PriorState> {
    // a single group of n exchangeable coefficients; t_obs only enters the R2D2 a_pi rule
    PriorState::for_l(cfg, n, n.max(2), n, None)
}

/// Unclamped log prior variances of the current hyperparameter state.
fn ln_variances(state: &PriorState) -> Vec<f64> {
    match state {
        PriorState::R2d2(s) => {
            let mut out = vec![0.0; s.groups.n];
            for (g, idx) in s.groups.groups.iter().enumerate() {
                for &j in idx {
                    out[j] = s.psi[j].ln() + s.ln_theta[j] + s.zeta[g].ln() - LN_2;
                }
            }
            out
        }
        PriorState::Dl(s) => {
            let mut out = vec![0.0; s.groups.n];
            for (g, idx) in s.groups.groups.iter().enumerate() {
                for &j in idx {
                    out[j] = s.psi[j].ln() + 2.0 * (s.ln_theta[j] + s.zeta[g].ln());
                }
            }
            out
        }
        other => other.variances().iter().map(|v| v.ln()).collect(),
    }
}

/// Ancestral draws of `draws` coefficient vectors of length `n` (rows of the result).
pub fn prior_simulate(cfg: &PriorConfig, n: usize, draws: usize, seed: u64) -> Result<DMatrix<f64>> {
    let mut state = prior_state(cfg, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(draws, n);
    for d in 0..draws {
        state.sample_from_prior(&mut rng)?;
        for (j, lv) in ln_variances(&state).iter().enumerate() {
            out[(d, j)] = (0.5 * lv).exp() * dist::std_normal(&mut rng);
        }
    }
    Ok(out)
}

/// Hoyer measure of each of `draws` prior coefficient vectors of length `n`,
/// computed in log scale so that extreme shrinkage does not underflow.
/// Work is split into `shards` independently seeded streams.
pub fn prior_hoyer(cfg: &PriorConfig, n: usize, draws: usize, seed: u64, shards: usize, threads: Option<usize>) -> Result<Vec<f64>> {
    let shards = shards.clamp(1, draws.max(1));
    let per = draws.div_ceil(shards);
    let parts = run_tasks(shards, threads, |s| -> Result<Vec<f64>> {
        let count = per.min(draws.saturating_sub(s * per));
        let mut state = prior_state(cfg, n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(task_seed(seed, s));
        let mut out = Vec::with_capacity(count);
        let mut ln_abs = vec![0.0; n];
        for _ in 0..count {
            state.sample_from_prior(&mut rng)?;
            for (j, lv) in ln_variances(&state).iter().enumerate() {
                ln_abs[j] = 0.5 * lv + dist::std_normal(&mut rng).abs().ln();
            }
            out.push(hoyer_ln(&ln_abs)?);
        }
        Ok(out)
    })?;
    let mut all = Vec::with_capacity(draws);
    for p in parts {
        all.extend(p?);
    }
    Ok(all)
}

/// Univariate marginal prior of a single coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Marginal {
    Dl { a: f64 },
    R2d2 { a_pi: f64, b: f64 },
    Hm { c: f64, d: f64 },
    Ssvs { tau0: f64, tau1: f64, p: f64 },
}

impl Marginal {
    pub fn name(&self) -> &'static str {
        match self {
            Marginal::Dl { .. } => "dl",
            Marginal::R2d2 { .. } => "r2d2",
            Marginal::Hm { .. } => "hm",
            Marginal::Ssvs { .. } => "ssvs",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Marginal::Dl { a } => a > 0.0 && a.is_finite(),
            Marginal::R2d2 { a_pi, b } => a_pi > 0.0 && b > 0.0 && a_pi.is_finite() && b.is_finite(),
            Marginal::Hm { c, d } => c > 0.0 && d > 0.0 && c.is_finite() && d.is_finite(),
            Marginal::Ssvs { tau0, tau1, p } => tau0 > 0.0 && tau1 > tau0 && tau1.is_finite() && (0.0..=1.0).contains(&p),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("marginal hyperparameters {self:?}")))
        }
    }

    /// log p(phi). Singular families return +inf at zero.
    pub fn ln_density(&self, phi: f64) -> Result<f64> {
        self.validate()?;
        let x = phi.abs();
        match *self {
            Marginal::Ssvs { tau0, tau1, p } => {
                let a = (1.0 - p).ln() + dist::ln_normal_pdf(phi, 0.0, tau0 * tau0);
                let b = p.ln() + dist::ln_normal_pdf(phi, 0.0, tau1 * tau1);
                Ok(crate::special::log_sum_exp(&[a, b]))
            }
            _ if x == 0.0 => Ok(f64::INFINITY),
            Marginal::Dl { a } => {
                Ok(-(1.0 + a) / 2.0 * LN_2 + (a - 1.0) / 2.0 * x.ln() + ln_bessel_k(1.0 - a, (2.0 * x).sqrt())? - ln_gamma(a))
            }
            Marginal::Hm { c, d } => {
                let nu = c - 0.5;
                Ok(nu / 2.0 * (2.0 * x.ln() - (2.0 * d).ln()) + c * d.ln() + LN_2 + ln_bessel_k(nu, (2.0 * d).sqrt() * x)?
                    - ln_gamma(c)
                    - 0.5 * (2.0 * PI).ln())
            }
            Marginal::R2d2 { a_pi, b } => r2d2_ln_density(x, a_pi, b),
        }
    }

    pub fn density(&self, phi: f64) -> Result<f64> {
        self.ln_density(phi).map(f64::exp)
    }

    /// P(|phi| <= x).
    pub fn abs_cdf(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        if let Marginal::Ssvs { tau0, tau1, p } = *self {
            let f = |t: f64| 2.0 * Normal::new(0.0, t).unwrap().cdf(x) - 1.0;
            return Ok((1.0 - p) * f(tau0) + p * f(tau1));
        }
        let f = |v: f64| 2.0 * self.density(v).unwrap_or(0.0);
        Ok(quad::integrate_log_scale(f, 1e-200, x, 1e-13, 1e-11)?.value.min(1.0))
    }

    /// Total mass over the real line by quadrature.
    pub fn total_mass(&self) -> Result<f64> {
        let f = |v: f64| 2.0 * self.density(v).unwrap_or(0.0);
        let body = quad::integrate_log_scale(f, 1e-200, 1.0, 1e-13, 1e-11)?.value;
        let mid = quad::integrate_log_scale(f, 1.0, 1e8, 1e-13, 1e-11)?.value;
        let tail = quad::integrate_to_inf(f, 1e8, 1e-13, 1e-11)?.value;
        Ok(body + mid + tail)
    }

    /// Local slope d ln p / d ln|phi| by central differences in ln|phi|.
    pub fn log_slope(&self, x: f64) -> Result<f64> {
        let h: f64 = 1e-3;
        let up = self.ln_density(x * h.exp())?;
        let dn = self.ln_density(x * (-h).exp())?;
        Ok((up - dn) / (2.0 * h))
    }
}

/// R2D2 marginal with theta = 1: phi | zeta ~ Laplace(scale sqrt(zeta/2)),
/// zeta ~ BetaPrime(a_pi, b). One-dimensional quadrature over ln zeta.
fn r2d2_ln_density(x: f64, a: f64, b: f64) -> Result<f64> {
    let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    let lf = |u: f64| {
        let ln_s = 0.5 * (u - LN_2);
        let ln1p = if u > 0.0 { u + (-u).exp().ln_1p() } else { u.exp().ln_1p() };
        a * u - (a + b) * ln1p - ln_beta - LN_2 - ln_s - x * (-ln_s).exp()
    };
    let (lo, hi) = (-300.0, 300.0);
    let mut peak = f64::NEG_INFINITY;
    let mut u = lo;
    while u <= hi {
        peak = peak.max(lf(u));
        u += 0.25;
    }
    if !peak.is_finite() {
        return Ok(f64::NEG_INFINITY);
    }
    let width = 5.0;
    let mut total = 0.0;
    let mut s = lo;
    while s < hi {
        let r = quad::integrate(|u| (lf(u) - peak).exp(), s, s + width, 1e-15, 1e-12)?;
        total += r.value;
        s += width;
    }
    Ok(peak + total.ln())
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut s: Vec<f64> = sample.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in s.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Asymptotic KS p-value with Stephens' small-sample correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Mean absolute error of the posterior mean. `draws` is draw-major, `n` per draw.
pub fn mae(draws: &[f64], truth: &[f64]) -> Result<f64> {
    let n = truth.len();
    let r = check_draws(draws, n)?;
    let mut err = 0.0;
    for j in 0..n {
        let mean = (0..r).map(|d| draws[d * n + j]).sum::<f64>() / r as f64;
        err += (mean - truth[j]).abs();
    }
    Ok(err / n as f64)
}

/// Root mean squared posterior distance to the truth.
pub fn rmspd(draws: &[f64], truth: &[f64]) -> Result<f64> {
    let n = truth.len();
    let r = check_draws(draws, n)?;
    let ss: f64 = draws.iter().enumerate().map(|(i, v)| (v - truth[i % n]).powi(2)).sum();
    Ok((ss / (n * r) as f64).sqrt())
}

fn check_draws(draws: &[f64], n: usize) -> Result<usize> {
    if n == 0 || draws.is_empty() || draws.len() % n != 0 {
        return Err(Error::Dimension(format!("{} draw values for {n} coefficients", draws.len())));
    }
    Ok(draws.len() / n)
}

/// Posterior mean Hoyer per group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsitySummary {
    pub labels: Vec<String>,
    pub mean: Vec<f64>,
    /// Draws contributing to each mean.
    pub used: Vec<usize>,
    /// All-zero group draws skipped.
    pub excluded: Vec<usize>,
}

/// Hoyer per draw and group, averaged over draws. Groups with fewer than two
/// members are left out of the summary.
pub fn posterior_hoyer(draws: &PosteriorDraws, groups: &GroupIndex) -> Result<SparsitySummary> {
    if draws.n_draws == 0 {
        return Err(Error::EmptyInput("posterior draws".into()));
    }
    if groups.n != draws.spec.n() {
        return Err(Error::Dimension(format!("groups over {} coefficients, draws have {}", groups.n, draws.spec.n())));
    }
    let mut out = SparsitySummary { labels: Vec::new(), mean: Vec::new(), used: Vec::new(), excluded: Vec::new() };
    for (g, idx) in groups.groups.iter().enumerate() {
        if idx.len() < 2 {
            continue;
        }
        let (mut acc, mut used, mut excl) = (0.0, 0, 0);
        for d in 0..draws.n_draws {
            let v = draws.phi_vec(d);
            let x: Vec<f64> = idx.iter().map(|&j| v[j]).collect();
            match hoyer(&x) {
                Ok(h) => {
                    acc += h;
                    used += 1;
                }
                Err(_) => excl += 1,
            }
        }
        out.labels.push(groups.labels[g].clone());
        out.mean.push(if used > 0 { acc / used as f64 } else { f64::NAN });
        out.used.push(used);
        out.excluded.push(excl);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InducedPrior {
    pub m: usize,
    pub variance: f64,
    /// draws x M: entry (row 0, column c) of each recovered Phi.
    pub first_row: DMatrix<f64>,
    /// Excess kurtosis per column over all rows.
    pub kurtosis: Vec<f64>,
    /// KS statistic and p-value of each column's first row against N(0, variance).
    pub ks: Vec<(f64, f64)>,
}

/// Draw B (M x M) and l i.i.d. N(0, variance) and map to Phi = B L^{-1}.
pub fn induced_prior_experiment(m: usize, variance: f64, draws: usize, seed: u64) -> Result<InducedPrior> {
    if m < 2 {
        return Err(Error::InvalidParameter("induced-prior experiment needs M >= 2".into()));
    }
    if !(variance > 0.0) || draws < 2 {
        return Err(Error::InvalidParameter("need positive variance and at least two draws".into()));
    }
    let sd = variance.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_l = m * (m - 1) / 2;
    let mut first_row = DMatrix::zeros(draws, m);
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(draws * m); m];
    for d in 0..draws {
        let b = DMatrix::from_fn(m, m, |_, _| sd * dist::std_normal(&mut rng));
        let l: Vec<f64> = (0..n_l).map(|_| sd * dist::std_normal(&mut rng)).collect();
        let phi = reduced_from_structural(&b, &l)?;
        for c in 0..m {
            first_row[(d, c)] = phi[(0, c)];
            cols[c].extend(phi.column(c).iter());
        }
    }
    let normal = Normal::new(0.0, sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let ks = (0..m)
        .map(|c| {
            let s: Vec<f64> = first_row.column(c).iter().cloned().collect();
            let d = ks_statistic(&s, |x| normal.cdf(x));
            (d, ks_pvalue(d, draws))
        })
        .collect();
    Ok(InducedPrior { m, variance, first_row, kurtosis: cols.iter().map(|c| excess_kurtosis(c)).collect(), ks })
}

impl InducedPrior {
    /// QQ points of column `c` against N(0, variance) at `points` equally spaced probabilities.
    pub fn qq(&self, c: usize, points: usize) -> Result<Vec<(f64, f64, f64)>> {
        if c >= self.m || points == 0 {
            return Err(Error::InvalidParameter(format!("column {c} of {} or zero QQ points", self.m)));
        }
        let normal = Normal::new(0.0, self.variance.sqrt()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut x: Vec<f64> = self.first_row.column(c).iter().cloned().collect();
        x.sort_by(|a, b| a.total_cmp(b));
        Ok((0..points)
            .map(|i| {
                let p = (i as f64 + 0.5) / points as f64;
                (p, crate::io::quantile_sorted(&x, p), normal.inverse_cdf(p))
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hoyer_hand_values() {
        assert!(hoyer(&[2.0; 7]).unwrap().abs() < 1e-15);
        assert_eq!(hoyer(&[0.0, 0.0, -4.0, 0.0]).unwrap(), 1.0);
        let s2 = 2f64.sqrt();
        assert!((hoyer(&[3.0, 4.0]).unwrap() - (s2 - 1.4) / (s2 - 1.0)).abs() < 1e-15);
        assert!(hoyer(&[0.0, 0.0]).is_err());
        assert!(hoyer(&[1.0]).is_err());
        let x = [0.3, -1.2, 5.0, 0.0];
        let y: Vec<f64> = x.iter().map(|v| v * -1e-200).collect();
        assert!((hoyer(&x).unwrap() - hoyer(&y).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn mae_and_rmspd_by_hand() {
        let t = [1.0, -2.0];
        assert_eq!(mae(&[1.0, -2.0, 1.0, -2.0], &t).unwrap(), 0.0);
        assert_eq!(rmspd(&[1.0, -2.0], &t).unwrap(), 0.0);
        assert!((mae(&[2.0, -1.0], &t).unwrap() - 1.0).abs() < 1e-15);
        assert!((rmspd(&[2.0, -1.0], &t).unwrap() - 1.0).abs() < 1e-15);
        let d = [0.0, -3.0, 2.0, -1.0];
        assert!(mae(&d, &t).unwrap().abs() < 1e-15);
        assert!((rmspd(&d, &t).unwrap() - 1.0).abs() < 1e-15);
        assert!(mae(&[1.0, 2.0, 3.0], &t).is_err());
    }

    #[test]
    fn ssvs_density_at_mode() {
        let m = Marginal::Ssvs { tau0: 0.1, tau1: 16.0, p: 0.5 };
        let want = 0.5 * (1.0 / (0.1 * (2.0 * PI).sqrt()) + 1.0 / (16.0 * (2.0 * PI).sqrt()));
        assert!((m.density(0.0).unwrap() - want).abs() < 1e-12 * want);
    }

    #[test]
    fn flat_prior_simulation_has_variance_ten() {
        let x = prior_simulate(&PriorConfig::flat(), 50, 2000, 1).unwrap();
        let v = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((v - 10.0).abs() < 0.3, "{v}");
    }

    #[test]
    fn ks_pvalue_limits() {
        assert_eq!(ks_pvalue(0.0, 100), 1.0);
        assert!(ks_pvalue(0.5, 1000) < 1e-12);
        // lambda = 1.36 is the classical 5% point
        let n = 1_000_000;
        let d = 1.358 / ((n as f64).sqrt() + 0.12 + 0.11 / (n as f64).sqrt());
        assert!((ks_pvalue(d, n) - 0.05).abs() < 1e-3);
    }
}
