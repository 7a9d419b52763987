//! Univariate stochastic volatility: auxiliary mixture sampler with
//! interweaving of centered and non-centered parameterizations.

use crate::dist::{self, ln_beta_pdf, ln_normal_pdf};
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Ten-component normal mixture approximating the log chi-square(1) density.
pub const MIX_P: [f64; 10] = [0.00609, 0.04775, 0.13057, 0.20674, 0.22715, 0.18842, 0.12047, 0.05591, 0.01575, 0.00115];
pub const MIX_M: [f64; 10] = [1.92677, 1.34744, 0.73504, 0.02266, -0.85173, -1.97278, -3.46788, -5.55246, -8.68384, -14.65];
pub const MIX_V: [f64; 10] = [0.11265, 0.17788, 0.26768, 0.40611, 0.62699, 0.98583, 1.57469, 2.54498, 4.16591, 7.33342];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvParams {
    pub mu: f64,
    pub rho: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvPath {
    pub h: Vec<f64>,
    pub h0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvConfig {
    /// Constant variance with an inverse-gamma prior instead of SV.
    pub homoskedastic: bool,
    /// Add the non-centered step after the centered one.
    pub interweave: bool,
    pub mu_mean: f64,
    pub mu_sd: f64,
    /// (rho + 1) / 2 ~ Beta(rho_a, rho_b)
    pub rho_a: f64,
    pub rho_b: f64,
    /// sigma^2 ~ B_sigma chi^2_1
    pub b_sigma: f64,
    /// IG(shape, scale) prior of the constant variance in homoskedastic mode.
    pub homo_shape: f64,
    pub homo_scale: f64,
}

impl Default for SvConfig {
    fn default() -> Self {
        SvConfig {
            homoskedastic: false,
            interweave: true,
            mu_mean: 0.0,
            mu_sd: 100.0,
            rho_a: 20.0,
            rho_b: 1.5,
            b_sigma: 1.0,
            homo_shape: 0.01,
            homo_scale: 0.01,
        }
    }
}

impl SvConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        let pos = [
            ("mu_sd", self.mu_sd),
            ("rho_a", self.rho_a),
            ("rho_b", self.rho_b),
            ("b_sigma", self.b_sigma),
            ("homo_shape", self.homo_shape),
            ("homo_scale", self.homo_scale),
        ];
        for (f, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{path}.{f}"), format!("must be positive, got {v}")));
            }
        }
        if !self.mu_mean.is_finite() {
            return Err(Error::config(format!("{path}.mu_mean"), "must be finite"));
        }
        Ok(())
    }

    fn ln_prior_mu_rho(&self, mu: f64, rho: f64) -> f64 {
        ln_normal_pdf(mu, self.mu_mean, self.mu_sd * self.mu_sd) + ln_beta_pdf((rho + 1.0) / 2.0, self.rho_a, self.rho_b)
    }
}

/// SV state of one series plus Metropolis acceptance counters.
#[derive(Debug, Clone, PartialEq)]
pub struct SvState {
    pub params: SvParams,
    pub path: SvPath,
    pub accepted_sigma: u64,
    pub accepted_rho: u64,
    pub proposals: u64,
}

impl SvState {
    /// h at `level` (a log-variance), rho at its prior mean, sigma = 1.
    pub fn init(t: usize, level: f64, cfg: &SvConfig) -> SvState {
        let rho = 2.0 * cfg.rho_a / (cfg.rho_a + cfg.rho_b) - 1.0;
        let (rho, sigma) = if cfg.homoskedastic { (0.0, 0.0) } else { (rho, 1.0) };
        SvState {
            params: SvParams { mu: level, rho, sigma },
            path: SvPath { h: vec![level; t], h0: level },
            accepted_sigma: 0,
            accepted_rho: 0,
            proposals: 0,
        }
    }

    /// One sweep given orthogonalized residuals.
    pub fn update<R: Rng + ?Sized>(&mut self, xi: &[f64], cfg: &SvConfig, rng: &mut R) -> Result<()> {
        if xi.is_empty() {
            return Err(Error::EmptyInput("SV residual series".into()));
        }
        if xi.len() != self.path.h.len() {
            return Err(Error::Dimension(format!("{} residuals for a path of length {}", xi.len(), self.path.h.len())));
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("SV residuals".into()));
        }
        if cfg.homoskedastic {
            return self.update_homoskedastic(xi, cfg, rng);
        }
        let ystar: Vec<f64> = xi.iter().map(|v| (v * v).max(f64::MIN_POSITIVE).ln()).collect();
        self.update_ystar(&ystar, cfg, rng)
    }

    fn update_homoskedastic<R: Rng + ?Sized>(&mut self, xi: &[f64], cfg: &SvConfig, rng: &mut R) -> Result<()> {
        let ss: f64 = xi.iter().map(|v| v * v).sum();
        let s2 = dist::inv_gamma(cfg.homo_shape + xi.len() as f64 / 2.0, cfg.homo_scale + ss / 2.0, rng)?;
        let h = s2.ln();
        self.params = SvParams { mu: h, rho: 0.0, sigma: 0.0 };
        self.path.h.iter_mut().for_each(|v| *v = h);
        self.path.h0 = h;
        Ok(())
    }

    /// One sweep given y* = ln xi^2 directly.
    pub fn update_ystar<R: Rng + ?Sized>(&mut self, ystar: &[f64], cfg: &SvConfig, rng: &mut R) -> Result<()> {
        let t = ystar.len();
        if t == 0 {
            return Err(Error::EmptyInput("SV series".into()));
        }
        // 1. mixture indicators
        let mut r = vec![0usize; t];
        let mut lw = [0.0; 10];
        for i in 0..t {
            let e = ystar[i] - self.path.h[i];
            for k in 0..10 {
                lw[k] = MIX_P[k].ln() + ln_normal_pdf(e, MIX_M[k], MIX_V[k]);
            }
            r[i] = dist::discrete(&lw, rng)?;
        }

        // 2. h_{1:T} jointly, h0 integrated out under stationarity
        let SvParams { mu, rho, sigma } = self.params;
        let s2 = sigma * sigma;
        let mut diag = vec![0.0; t];
        let mut off = vec![0.0; t]; // off[i] couples i-1 and i
        let mut rhs = vec![0.0; t];
        if t == 1 {
            diag[0] = (1.0 - rho * rho) / s2;
        } else {
            for i in 0..t {
                diag[i] = if i == 0 || i == t - 1 { 1.0 / s2 } else { (1.0 + rho * rho) / s2 };
                if i > 0 {
                    off[i] = -rho / s2;
                }
            }
        }
        for i in 0..t {
            let mut qmu = diag[i] * mu;
            if i > 0 {
                qmu += off[i] * mu;
            }
            if i + 1 < t {
                qmu += off[i + 1] * mu;
            }
            rhs[i] = qmu + (ystar[i] - MIX_M[r[i]]) / MIX_V[r[i]];
            diag[i] += 1.0 / MIX_V[r[i]];
        }
        self.path.h = tridiag_gaussian(&diag, &off, &rhs, rng)?;

        // 3. h0 given h1
        self.path.h0 = mu + rho * (self.path.h[0] - mu) + sigma * dist::std_normal(rng);

        // 4. centered parameters
        self.centered_step(cfg, rng)?;

        // 5. non-centered (mu, sigma)
        if cfg.interweave {
            self.noncentered_step(ystar, &r, cfg, rng)?;
        }
        if !(self.params.mu.is_finite() && self.params.sigma > 0.0 && self.params.rho.abs() < 1.0) {
            return Err(Error::NonFinite(format!("SV parameters {:?}", self.params)));
        }
        Ok(())
    }

    fn centered_step<R: Rng + ?Sized>(&mut self, cfg: &SvConfig, rng: &mut R) -> Result<()> {
        let h = &self.path.h;
        let h0 = self.path.h0;
        let t = h.len();
        let lag = |i: usize| if i == 0 { h0 } else { h[i - 1] };
        let SvParams { mu, rho, sigma } = self.params;
        self.proposals += 1;

        // 4a. sigma^2 by independence MH
        let gamma = mu * (1.0 - rho);
        let ssr: f64 = (0..t).map(|i| (h[i] - gamma - rho * lag(i)).powi(2)).sum();
        let s = ssr + (h0 - mu).powi(2) * (1.0 - rho * rho);
        let prop = dist::inv_gamma(t as f64 / 2.0, s / 2.0, rng)?;
        let s2_old = sigma * sigma;
        let ln_acc = -(prop - s2_old) / (2.0 * cfg.b_sigma);
        let s2 = if rng.random::<f64>().ln() < ln_acc {
            self.accepted_sigma += 1;
            prop
        } else {
            s2_old
        };
        let sigma = s2.sqrt();

        // 4b. (gamma, rho) from the regression of h_t on (1, h_{t-1})
        let (mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..t {
            let x = lag(i);
            sx += x;
            sxx += x * x;
            sy += h[i];
            sxy += x * h[i];
        }
        let n = t as f64;
        let det = n * sxx - sx * sx;
        let mut new = (mu, rho);
        if det > 0.0 && det.is_finite() {
            // (X'X)^{-1} = [sxx, -sx; -sx, n] / det
            let g_hat = (sxx * sy - sx * sxy) / det;
            let r_hat = (n * sxy - sx * sy) / det;
            let v11 = sxx / det;
            let v12 = -sx / det;
            let v22 = n / det;
            let l11 = v11.sqrt();
            let l21 = v12 / l11;
            let l22 = (v22 - l21 * l21).max(0.0).sqrt();
            let (z1, z2) = (dist::std_normal(rng), dist::std_normal(rng));
            let g_p = g_hat + sigma * l11 * z1;
            let r_p = r_hat + sigma * (l21 * z1 + l22 * z2);
            if r_p.abs() < 1.0 {
                let mu_p = g_p / (1.0 - r_p);
                let target = |m: f64, r: f64| {
                    ln_normal_pdf(h0, m, s2 / (1.0 - r * r)) + cfg.ln_prior_mu_rho(m, r) - (1.0 - r).ln()
                };
                let ln_acc = target(mu_p, r_p) - target(mu, rho);
                if rng.random::<f64>().ln() < ln_acc {
                    self.accepted_rho += 1;
                    new = (mu_p, r_p);
                }
            }
        }
        self.params = SvParams { mu: new.0, rho: new.1, sigma };
        Ok(())
    }

    fn noncentered_step<R: Rng + ?Sized>(&mut self, ystar: &[f64], r: &[usize], cfg: &SvConfig, rng: &mut R) -> Result<()> {
        let SvParams { mu, sigma, .. } = self.params;
        let ht: Vec<f64> = self.path.h.iter().map(|v| (v - mu) / sigma).collect();
        let ht0 = (self.path.h0 - mu) / sigma;
        // posterior precision and linear term for (mu, sigma)
        let bmu = cfg.mu_sd * cfg.mu_sd;
        let (mut p11, mut p12, mut p22) = (1.0 / bmu, 0.0, 1.0 / cfg.b_sigma);
        let (mut b1, mut b2) = (cfg.mu_mean / bmu, 0.0);
        for i in 0..ystar.len() {
            let w = 1.0 / MIX_V[r[i]];
            let z = ystar[i] - MIX_M[r[i]];
            p11 += w;
            p12 += w * ht[i];
            p22 += w * ht[i] * ht[i];
            b1 += w * z;
            b2 += w * ht[i] * z;
        }
        let l11 = p11.sqrt();
        let l21 = p12 / l11;
        let d = p22 - l21 * l21;
        if !(d > 0.0) {
            return Err(Error::Cholesky { equation: 0 });
        }
        let l22 = d.sqrt();
        // mean = P^{-1} b, draw = mean + L'^{-1} z
        let a1 = b1 / l11;
        let a2 = (b2 - l21 * a1) / l22;
        let z2 = a2 + dist::std_normal(rng);
        let s_signed = z2 / l22;
        let z1 = a1 + dist::std_normal(rng);
        let mu_new = (z1 - l21 * s_signed) / l11;
        for (h, v) in self.path.h.iter_mut().zip(&ht) {
            *h = mu_new + s_signed * v;
        }
        self.path.h0 = mu_new + s_signed * ht0;
        self.params.mu = mu_new;
        self.params.sigma = s_signed.abs();
        Ok(())
    }
}

/// Draw from N(P^{-1} b, P^{-1}) for a symmetric tridiagonal precision P.
pub fn tridiag_gaussian<R: Rng + ?Sized>(diag: &[f64], off: &[f64], b: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let t = diag.len();
    let mut l = vec![0.0; t];
    let mut c = vec![0.0; t];
    for i in 0..t {
        let mut d = diag[i];
        if i > 0 {
            c[i] = off[i] / l[i - 1];
            d -= c[i] * c[i];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Cholesky { equation: i });
        }
        l[i] = d.sqrt();
    }
    let mut a = vec![0.0; t];
    for i in 0..t {
        let prev = if i > 0 { c[i] * a[i - 1] } else { 0.0 };
        a[i] = (b[i] - prev) / l[i];
    }
    for v in a.iter_mut() {
        *v += dist::std_normal(rng);
    }
    let mut x = vec![0.0; t];
    for i in (0..t).rev() {
        let next = if i + 1 < t { c[i + 1] * x[i + 1] } else { 0.0 };
        x[i] = (a[i] - next) / l[i];
    }
    Ok(x)
}

/// Iterate the log-variance forward `horizon` steps from h_T.
pub fn sv_forecast<R: Rng + ?Sized>(h_t: f64, p: &SvParams, horizon: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(horizon);
    let mut h = h_t;
    for _ in 0..horizon {
        h = p.mu + p.rho * (h - p.mu) + p.sigma * dist::std_normal(rng);
        out.push(h);
    }
    out
}

/// Simulate a stationary SV path of length t (h0 from the stationary law).
pub fn simulate_path<R: Rng + ?Sized>(p: &SvParams, t: usize, rng: &mut R) -> SvPath {
    let h0 = p.mu + p.sigma / (1.0 - p.rho * p.rho).sqrt() * dist::std_normal(rng);
    let h = sv_forecast(h0, p, t, rng);
    SvPath { h, h0 }
}

/// Draw (mu, rho, sigma) from the SV prior.
pub fn sample_params<R: Rng + ?Sized>(cfg: &SvConfig, rng: &mut R) -> Result<SvParams> {
    let mu = cfg.mu_mean + cfg.mu_sd * dist::std_normal(rng);
    let rho = 2.0 * dist::beta(cfg.rho_a, cfg.rho_b, rng)? - 1.0;
    let sigma = cfg.b_sigma.sqrt() * dist::std_normal(rng).abs();
    Ok(SvParams { mu, rho, sigma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mixture_moments_match_log_chi_square() {
        let ps: f64 = MIX_P.iter().sum();
        assert!((ps - 1.0).abs() < 1e-4);
        let m: f64 = MIX_P.iter().zip(&MIX_M).map(|(p, m)| p * m).sum();
        let v: f64 = MIX_P.iter().zip(MIX_M.iter().zip(&MIX_V)).map(|(p, (mm, vv))| p * (vv + mm * mm)).sum::<f64>() - m * m;
        // E ln chi2_1 = -gamma_E - ln 2, Var = pi^2 / 2
        assert!((m - (-0.577_215_664_901_532_9 - std::f64::consts::LN_2)).abs() < 2e-3, "{m}");
        assert!((v - std::f64::consts::PI.powi(2) / 2.0).abs() < 2e-2, "{v}");
    }

    #[test]
    fn tridiagonal_draw_moments() {
        // P = [[2, -1, 0], [-1, 2, -1], [0, -1, 2]], b = (1, 0, 1): mean = (1, 1, 1)
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut s = [0.0; 3];
        let mut s01 = 0.0;
        for _ in 0..n {
            let x = tridiag_gaussian(&[2.0, 2.0, 2.0], &[0.0, -1.0, -1.0], &[1.0, 0.0, 1.0], &mut rng).unwrap();
            for k in 0..3 {
                s[k] += x[k];
            }
            s01 += (x[0] - 1.0) * (x[1] - 1.0);
        }
        for v in s {
            assert!((v / n as f64 - 1.0).abs() < 0.02);
        }
        // inverse of P: entry (0,1) = 0.5
        assert!((s01 / n as f64 - 0.5).abs() < 0.02);
        assert!(tridiag_gaussian(&[1.0, 1.0], &[0.0, -2.0], &[0.0, 0.0], &mut rng).is_err());
    }

    #[test]
    fn forecast_variance_and_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = SvParams { mu: -1.0, rho: 0.9, sigma: 0.2 };
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sv_forecast(0.5, &p, 4, &mut rng)[3]).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
        let want = 0.04 * (1.0 + 0.81 + 0.81f64.powi(2) + 0.81f64.powi(3));
        assert!((v / want - 1.0).abs() < 0.02, "{v} {want}");
        assert!((m - (-1.0 + 0.9f64.powi(4) * 1.5)).abs() < 0.005);
        let det = sv_forecast(1.0, &SvParams { mu: 0.0, rho: 0.5, sigma: 0.0 }, 3, &mut rng);
        assert_eq!(det, vec![0.5, 0.25, 0.125]);
    }

    #[test]
    fn stationary_initial_state_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = SvParams { mu: 0.0, rho: 0.8, sigma: 0.3 };
        let n = 100_000;
        let v = (0..n).map(|_| simulate_path(&p, 1, &mut rng).h0.powi(2)).sum::<f64>() / n as f64;
        let want = 0.09 / 0.36;
        assert!((v / want - 1.0).abs() < 0.05);
    }

    #[test]
    fn empty_input_is_error() {
        let cfg = SvConfig::default();
        let mut s = SvState::init(0, 0.0, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(s.update(&[], &cfg, &mut rng).is_err());
    }

    #[test]
    fn recovers_constant_level() {
        // xi with constant variance e^mu; posterior mean of mu within 3 posterior sd
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (t, mu) = (2000, -2.0f64);
        let xi: Vec<f64> = (0..t).map(|_| (mu / 2.0).exp() * dist::std_normal(&mut rng)).collect();
        let cfg = SvConfig::default();
        let mut s = SvState::init(t, 0.0, &cfg);
        let mut draws = Vec::new();
        for i in 0..3000 {
            s.update(&xi, &cfg, &mut rng).unwrap();
            if i >= 1000 {
                draws.push(s.params.mu);
            }
        }
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let sd = (draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / draws.len() as f64).sqrt();
        assert!((m - mu).abs() < 3.0 * sd.max(0.02), "mean {m} sd {sd}");
    }

    #[test]
    fn homoskedastic_mode_keeps_constant_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = SvConfig { homoskedastic: true, ..SvConfig::default() };
        let xi: Vec<f64> = (0..500).map(|_| 2.0 * dist::std_normal(&mut rng)).collect();
        let mut s = SvState::init(500, 0.0, &cfg);
        let mut acc = 0.0;
        for _ in 0..2000 {
            s.update(&xi, &cfg, &mut rng).unwrap();
            assert!(s.path.h.iter().all(|&h| h == s.params.mu));
            acc += s.params.mu.exp();
        }
        let ss: f64 = xi.iter().map(|v| v * v).sum();
        let want = (0.01 + ss / 2.0) / (0.01 + 250.0 - 1.0);
        assert!((acc / 2000.0 / want - 1.0).abs() < 0.02);
    }

    #[test]
    fn centered_and_interweaved_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let truth = SvParams { mu: -1.0, rho: 0.9, sigma: 0.3 };
        let path = simulate_path(&truth, 300, &mut rng);
        let xi: Vec<f64> = path.h.iter().map(|h| (h / 2.0).exp() * dist::std_normal(&mut rng)).collect();
        let run = |interweave: bool, seed: u64| {
            let cfg = SvConfig { interweave, ..SvConfig::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = SvState::init(300, 0.0, &cfg);
            let mut acc = [0.0; 3];
            let n = 30_000;
            for i in 0..n + 2000 {
                s.update(&xi, &cfg, &mut rng).unwrap();
                if i >= 2000 {
                    acc[0] += s.params.mu;
                    acc[1] += s.params.rho;
                    acc[2] += s.params.sigma;
                }
            }
            acc.map(|v| v / n as f64)
        };
        let a = run(true, 11);
        let b = run(false, 12);
        assert!((a[0] - b[0]).abs() < 0.1, "{a:?} {b:?}");
        assert!((a[1] - b[1]).abs() < 0.03, "{a:?} {b:?}");
        assert!((a[2] - b[2]).abs() < 0.05, "{a:?} {b:?}");
    }
}
