//! Gibbs sampler for the VAR with a triangular covariance factor and SV.

use crate::dist;
use crate::error::{Error, Result};
use crate::model::{l_index, l_matrix, Design, VarSpec};
use crate::priors::{ssvs_l_scales, PriorConfig, PriorState};
use crate::sv::{SvConfig, SvParams, SvState};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_burnin")]
    pub burnin: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_draws() -> usize {
    10_000
}
fn default_burnin() -> usize {
    5_000
}
fn default_thin() -> usize {
    10
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig { draws: default_draws(), burnin: default_burnin(), thin: default_thin(), seed: 0 }
    }
}

impl McmcConfig {
    pub fn retained(&self) -> usize {
        self.draws / self.thin
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::config(format!("{path}.draws"), "must be at least 1"));
        }
        if self.thin == 0 || self.thin > self.draws {
            return Err(Error::config(format!("{path}.thin"), format!("must lie in [1, draws], got {}", self.thin)));
        }
        Ok(())
    }
}

/// Priors of one model: on vec(Phi), on the covariance factor, and the SV block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPriors {
    pub phi: PriorConfig,
    pub l: PriorConfig,
    pub sv: SvConfig,
}

impl Default for ModelPriors {
    fn default() -> Self {
        ModelPriors { phi: PriorConfig::r2d2_default(), l: PriorConfig::r2d2_default(), sv: SvConfig::default() }
    }
}

/// Precision-form Gaussian draw: N(P^{-1} b, P^{-1}). `equation` labels Cholesky failures.
fn gaussian_from_precision<R: Rng + ?Sized>(p: DMatrix<f64>, b: &DVector<f64>, equation: usize, rng: &mut R) -> Result<DVector<f64>> {
    let chol = p.cholesky().ok_or(Error::Cholesky { equation })?;
    let lo = chol.l();
    let a = lo.solve_lower_triangular(b).ok_or(Error::Cholesky { equation })?;
    let z = DVector::from_fn(b.len(), |_, _| dist::std_normal(rng));
    let x = lo.transpose().solve_upper_triangular(&(a + z)).ok_or(Error::Cholesky { equation })?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("Gaussian draw for equation {equation}")));
    }
    Ok(x)
}

/// X' diag(w) X.
fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (t, wt) in w.iter().enumerate() {
        xw.row_mut(t).scale_mut(wt.sqrt());
    }
    xw.transpose() * &xw
}

/// Conditional moments (precision, linear term) of column i of Phi given the rest.
/// With `corrected = false` only equation i's own orthogonalized error enters.
pub fn phi_column_conditional(
    x: &DMatrix<f64>,
    xi: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    lm: &DMatrix<f64>,
    w: &DMatrix<f64>,
    grams: &[DMatrix<f64>],
    v: &[f64],
    i: usize,
    corrected: bool,
) -> (DMatrix<f64>, DVector<f64>) {
    let (t, m) = xi.shape();
    let k = x.ncols();
    let fit = x * phi.column(i);
    let mut p = DMatrix::from_diagonal(&DVector::from_fn(k, |r, _| 1.0 / v[i * k + r]));
    let mut u = DVector::zeros(t);
    let js: Vec<usize> = if corrected { (i..m).collect() } else { vec![i] };
    for j in js {
        let lij = lm[(i, j)];
        if lij == 0.0 {
            continue;
        }
        p += &grams[j] * (lij * lij);
        for s in 0..t {
            let c = xi[(s, j)] + lij * fit[s];
            u[s] += lij * w[(s, j)] * c;
        }
    }
    (p, x.transpose() * u)
}

/// Draw every column of Phi from its full conditional (corrected triangular
/// algorithm). `h` is T x M, `v` the prior variances of vec(Phi).
pub fn draw_phi_triangular<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    phi: &mut DMatrix<f64>,
    l: &[f64],
    h: &DMatrix<f64>,
    v: &[f64],
    rng: &mut R,
) -> Result<()> {
    draw_phi_impl(x, y, phi, l, h, v, true, rng)
}

/// Per-equation variant that ignores the later equations' dependence on column i.
/// Exists only to demonstrate that the correction matters.
pub fn draw_phi_uncorrected<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    phi: &mut DMatrix<f64>,
    l: &[f64],
    h: &DMatrix<f64>,
    v: &[f64],
    rng: &mut R,
) -> Result<()> {
    draw_phi_impl(x, y, phi, l, h, v, false, rng)
}

#[allow(clippy::too_many_arguments)]
fn draw_phi_impl<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    phi: &mut DMatrix<f64>,
    l: &[f64],
    h: &DMatrix<f64>,
    v: &[f64],
    corrected: bool,
    rng: &mut R,
) -> Result<()> {
    let (t, m) = y.shape();
    let k = x.ncols();
    if x.nrows() != t || phi.shape() != (k, m) || h.shape() != (t, m) || v.len() != k * m {
        return Err(Error::Dimension("inconsistent shapes in coefficient draw".into()));
    }
    if v.iter().any(|x| !(*x > 0.0)) || h.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("prior variances or log-variances".into()));
    }
    let lm = l_matrix(l, m)?;
    let w = h.map(|v| (-v).exp());
    let grams: Vec<DMatrix<f64>> = (0..m).map(|j| weighted_gram(x, w.column(j).as_slice())).collect();
    let mut xi = (y - x * &*phi) * &lm;
    for i in 0..m {
        let (p, b) = phi_column_conditional(x, &xi, phi, &lm, &w, &grams, v, i, corrected);
        let old_fit = x * phi.column(i);
        let new = gaussian_from_precision(p, &b, i, rng)?;
        phi.set_column(i, &new);
        let delta = x * &new - old_fit;
        // xi_j changes by -L_ij * delta
        for j in i..m {
            let lij = lm[(i, j)];
            if lij != 0.0 {
                let mut col = xi.column_mut(j);
                col.axpy(-lij, &delta, 1.0);
            }
        }
    }
    Ok(())
}

/// Draw the free elements of the covariance factor: for equation j, regress
/// eps_j on -eps_{0..j} with weights exp(-h_j) under prior variances `v_l`.
pub fn draw_l<R: Rng + ?Sized>(eps: &DMatrix<f64>, h: &DMatrix<f64>, v_l: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let (t, m) = eps.shape();
    if v_l.len() != m * (m.max(1) - 1) / 2 || h.shape() != (t, m) {
        return Err(Error::Dimension("inconsistent shapes in covariance-factor draw".into()));
    }
    let mut out = vec![0.0; v_l.len()];
    for j in 1..m {
        let z = -eps.columns(0, j);
        let w: Vec<f64> = (0..t).map(|s| (-h[(s, j)]).exp()).collect();
        let mut p = weighted_gram(&z.clone_owned(), &w);
        for i in 0..j {
            p[(i, i)] += 1.0 / v_l[l_index(i, j)];
        }
        let wy = DVector::from_fn(t, |s, _| w[s] * eps[(s, j)]);
        let b = z.transpose() * wy;
        let d = gaussian_from_precision(p, &b, j, rng)?;
        for i in 0..j {
            out[l_index(i, j)] = d[i];
        }
    }
    Ok(out)
}

/// Full state of one Gibbs chain.
#[derive(Debug, Clone)]
pub struct Chain {
    pub spec: VarSpec,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub l: Vec<f64>,
    pub sv: Vec<SvState>,
    pub phi_prior: PriorState,
    pub l_prior: PriorState,
    pub sv_cfg: SvConfig,
}

impl Chain {
    /// Phi = 0, l = 0, h at the log sample variance of each series, hyperparameters at
    /// prior means or grid midpoints.
    pub fn new(design: &Design, spec: &VarSpec, priors: &ModelPriors) -> Result<Chain> {
        let (t, m) = design.y.shape();
        if design.x.ncols() != spec.k() || m != spec.m {
            return Err(Error::Dimension("design does not match the model dimensions".into()));
        }
        if t < 2 {
            return Err(Error::EmptyInput("estimation sample needs at least two rows".into()));
        }
        priors.sv.validate("sv")?;
        let phi_prior = PriorState::for_phi(&priors.phi, spec, design)?;
        let l_scale = match &priors.l {
            PriorConfig::Ssvs(c) if c.tau0.is_none() && spec.n_l() > 0 => Some(ssvs_l_scales(design, spec)?),
            _ => None,
        };
        let l_prior = PriorState::for_l(&priors.l, spec.n_l(), t, spec.k(), l_scale)?;
        let mut sv = Vec::with_capacity(m);
        for i in 0..m {
            let col = design.y.column(i);
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
            if !(var > 0.0 && var.is_finite()) {
                return Err(Error::Singular(format!("series {i} has zero sample variance")));
            }
            sv.push(SvState::init(t, var.ln(), &priors.sv));
        }
        Ok(Chain {
            spec: *spec,
            x: design.x.clone(),
            y: design.y.clone(),
            phi: DMatrix::zeros(spec.k(), m),
            l: vec![0.0; spec.n_l()],
            sv,
            phi_prior,
            l_prior,
            sv_cfg: priors.sv,
        })
    }

    /// T x M matrix of current log-variances.
    pub fn h(&self) -> DMatrix<f64> {
        let t = self.y.nrows();
        DMatrix::from_fn(t, self.spec.m, |s, i| self.sv[i].path.h[s])
    }

    pub fn residuals(&self) -> DMatrix<f64> {
        &self.y - &self.x * &self.phi
    }

    /// One Gibbs sweep; failures carry the iteration and step label.
    pub fn sweep<R: Rng + ?Sized>(&mut self, iter: usize, rng: &mut R) -> Result<()> {
        let h = self.h();
        let v = self.phi_prior.variances();
        draw_phi_triangular(&self.x, &self.y, &mut self.phi, &self.l, &h, &v, rng).map_err(|e| e.at_step(iter, "phi"))?;
        let eps = self.residuals();
        let v_l = self.l_prior.variances();
        self.l = draw_l(&eps, &h, &v_l, rng).map_err(|e| e.at_step(iter, "l"))?;
        self.update_sv(&eps, rng).map_err(|e| e.at_step(iter, "sv"))?;
        self.update_priors(rng, iter)
    }

    fn update_sv<R: Rng + ?Sized>(&mut self, eps: &DMatrix<f64>, rng: &mut R) -> Result<()> {
        let xi = eps * l_matrix(&self.l, self.spec.m)?;
        for (i, s) in self.sv.iter_mut().enumerate() {
            s.update(xi.column(i).as_slice(), &self.sv_cfg, rng)?;
        }
        Ok(())
    }

    pub(crate) fn update_priors<R: Rng + ?Sized>(&mut self, rng: &mut R, iter: usize) -> Result<()> {
        self.phi_prior.update(self.phi.as_slice(), rng).map_err(|e| e.at_step(iter, "phi_prior"))?;
        self.l_prior.update(&self.l, rng).map_err(|e| e.at_step(iter, "l_prior"))
    }

    fn record(&self, out: &mut PosteriorDraws) {
        out.phi.extend_from_slice(self.phi.as_slice());
        out.l.extend_from_slice(&self.l);
        for s in &self.sv {
            out.sv.extend([s.params.mu, s.params.rho, s.params.sigma]);
            out.h_last.push(*s.path.h.last().unwrap_or(&s.params.mu));
        }
        out.hyper_phi.extend(self.phi_prior.hyper_values());
        out.hyper_l.extend(self.l_prior.hyper_values());
        out.n_draws += 1;
    }
}

/// Retained draws, stored draw-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub spec: VarSpec,
    pub n_draws: usize,
    /// n_draws x n, each row vec(Phi)
    pub phi: Vec<f64>,
    /// n_draws x n_l
    pub l: Vec<f64>,
    /// n_draws x M x (mu, rho, sigma)
    pub sv: Vec<f64>,
    /// n_draws x M, log-variance at the last sample period
    pub h_last: Vec<f64>,
    pub hyper_phi_names: Vec<String>,
    pub hyper_phi: Vec<f64>,
    pub hyper_l_names: Vec<String>,
    pub hyper_l: Vec<f64>,
    /// Acceptance rates of the sigma and (mu, rho) Metropolis steps per series.
    pub sv_acceptance: Vec<(f64, f64)>,
}

impl PosteriorDraws {
    pub fn empty(spec: VarSpec, hyper_phi_names: Vec<String>, hyper_l_names: Vec<String>) -> Self {
        PosteriorDraws {
            spec,
            n_draws: 0,
            phi: Vec::new(),
            l: Vec::new(),
            sv: Vec::new(),
            h_last: Vec::new(),
            hyper_phi_names,
            hyper_phi: Vec::new(),
            hyper_l_names,
            hyper_l: Vec::new(),
            sv_acceptance: Vec::new(),
        }
    }

    pub fn phi_vec(&self, d: usize) -> &[f64] {
        let n = self.spec.n();
        &self.phi[d * n..(d + 1) * n]
    }

    /// K x M coefficient matrix of draw d.
    pub fn phi_matrix(&self, d: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.spec.k(), self.spec.m, self.phi_vec(d))
    }

    pub fn l_draw(&self, d: usize) -> &[f64] {
        let n = self.spec.n_l();
        &self.l[d * n..(d + 1) * n]
    }

    pub fn sv_params(&self, d: usize, i: usize) -> SvParams {
        let o = (d * self.spec.m + i) * 3;
        SvParams { mu: self.sv[o], rho: self.sv[o + 1], sigma: self.sv[o + 2] }
    }

    pub fn h_last_draw(&self, d: usize) -> &[f64] {
        let m = self.spec.m;
        &self.h_last[d * m..(d + 1) * m]
    }

    /// Posterior mean of vec(Phi).
    pub fn phi_mean(&self) -> Vec<f64> {
        let n = self.spec.n();
        let mut out = vec![0.0; n];
        for d in 0..self.n_draws {
            for (o, v) in out.iter_mut().zip(self.phi_vec(d)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= self.n_draws as f64);
        out
    }

    pub fn phi_mean_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.spec.k(), self.spec.m, &self.phi_mean())
    }
}

/// Run one chain with burn-in and thinning.
pub fn run_mcmc(design: &Design, spec: &VarSpec, priors: &ModelPriors, mcmc: &McmcConfig) -> Result<PosteriorDraws> {
    mcmc.validate("mcmc")?;
    let mut rng = ChaCha8Rng::seed_from_u64(mcmc.seed);
    let mut chain = Chain::new(design, spec, priors)?;
    let mut out = PosteriorDraws::empty(*spec, chain.phi_prior.hyper_names(), chain.l_prior.hyper_names());
    for it in 0..mcmc.burnin + mcmc.draws {
        chain.sweep(it, &mut rng)?;
        if it >= mcmc.burnin && (it - mcmc.burnin + 1) % mcmc.thin == 0 {
            chain.record(&mut out);
        }
    }
    out.sv_acceptance = chain
        .sv
        .iter()
        .map(|s| {
            let n = s.proposals.max(1) as f64;
            (s.accepted_sigma as f64 / n, s.accepted_rho as f64 / n)
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::design_from_matrix;

    fn toy(t: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = DMatrix::zeros(t, m);
        for s in 1..t {
            for i in 0..m {
                y[(s, i)] = 0.5 * y[(s - 1, i)] + dist::std_normal(&mut rng);
            }
        }
        y
    }

    #[test]
    fn minimal_chain_keeps_one_draw() {
        let spec = VarSpec::new(2, 1, true).unwrap();
        let d = design_from_matrix(&toy(30, 2, 1), &spec).unwrap();
        let mcmc = McmcConfig { draws: 1, burnin: 0, thin: 1, seed: 3 };
        let out = run_mcmc(&d, &spec, &ModelPriors::default(), &mcmc).unwrap();
        assert_eq!(out.n_draws, 1);
        assert_eq!(out.phi.len(), spec.n());
        assert_eq!(out.l.len(), 1);
        assert!(out.phi.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn retained_count_follows_thinning() {
        let spec = VarSpec::new(2, 1, false).unwrap();
        let d = design_from_matrix(&toy(30, 2, 2), &spec).unwrap();
        let mcmc = McmcConfig { draws: 25, burnin: 5, thin: 4, seed: 3 };
        let out = run_mcmc(&d, &spec, &ModelPriors::default(), &mcmc).unwrap();
        assert_eq!(out.n_draws, 6);
        assert_eq!(out.n_draws, mcmc.retained());
        assert_eq!(out.hyper_phi.len(), 6 * out.hyper_phi_names.len());
    }

    #[test]
    fn seed_determinism() {
        let spec = VarSpec::new(3, 2, true).unwrap();
        let d = design_from_matrix(&toy(40, 3, 4), &spec).unwrap();
        let mcmc = McmcConfig { draws: 30, burnin: 10, thin: 1, seed: 99 };
        for phi in [PriorConfig::r2d2_default(), PriorConfig::hm(), PriorConfig::flat()] {
            let pr = ModelPriors { phi, ..ModelPriors::default() };
            let a = run_mcmc(&d, &spec, &pr, &mcmc).unwrap();
            let b = run_mcmc(&d, &spec, &pr, &mcmc).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn single_series_reduces_to_weighted_regression() {
        // M = 1: conditional precision diag(1/v) + X'WX and mean P^{-1} X'Wy
        let spec = VarSpec::new(1, 2, true).unwrap();
        let d = design_from_matrix(&toy(25, 1, 5), &spec).unwrap();
        let t = d.y.nrows();
        let h = DMatrix::from_fn(t, 1, |s, _| 0.1 * s as f64 - 1.0);
        let v = vec![2.0, 3.0, 100.0];
        let w: Vec<f64> = (0..t).map(|s| (-h[(s, 0)]).exp()).collect();
        let grams = vec![weighted_gram(&d.x, &w)];
        let phi = DMatrix::zeros(3, 1);
        let xi = d.y.clone();
        let wm = DMatrix::from_column_slice(t, 1, &w);
        let (p, b) = phi_column_conditional(&d.x, &xi, &phi, &DMatrix::identity(1, 1), &wm, &grams, &v, 0, true);
        let mut want_p = weighted_gram(&d.x, &w);
        for r in 0..3 {
            want_p[(r, r)] += 1.0 / v[r];
        }
        let want_b = d.x.transpose() * DVector::from_fn(t, |s, _| w[s] * d.y[(s, 0)]);
        assert!((p - want_p).norm() < 1e-10);
        assert!((b - want_b).norm() < 1e-10);
    }

    #[test]
    fn zero_factor_makes_equations_independent() {
        // with l = 0 the corrected and uncorrected draws coincide draw for draw
        let spec = VarSpec::new(3, 1, false).unwrap();
        let d = design_from_matrix(&toy(30, 3, 6), &spec).unwrap();
        let h = DMatrix::from_element(29, 3, 0.3);
        let v = vec![1.0; 9];
        let l = vec![0.0; 3];
        let mut a = DMatrix::zeros(3, 3);
        let mut b = DMatrix::zeros(3, 3);
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        draw_phi_triangular(&d.x, &d.y, &mut a, &l, &h, &v, &mut r1).unwrap();
        draw_phi_uncorrected(&d.x, &d.y, &mut b, &l, &h, &v, &mut r2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn l_draw_concentrates_at_zero_for_independent_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = 20_000;
        let eps = DMatrix::from_fn(t, 2, |_, _| dist::std_normal(&mut rng));
        let h = DMatrix::zeros(t, 2);
        let mut acc = 0.0;
        for _ in 0..200 {
            acc += draw_l(&eps, &h, &[10.0], &mut rng).unwrap()[0];
        }
        assert!((acc / 200.0).abs() < 0.03);
        assert!(draw_l(&DMatrix::zeros(5, 1), &DMatrix::zeros(5, 1), &[], &mut rng).unwrap().is_empty());
    }

    #[test]
    fn step_errors_carry_iteration() {
        let spec = VarSpec::new(2, 1, false).unwrap();
        let d = design_from_matrix(&toy(30, 2, 9), &spec).unwrap();
        let mut c = Chain::new(&d, &spec, &ModelPriors::default()).unwrap();
        c.sv[0].path.h[3] = f64::NAN;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        match c.sweep(17, &mut rng) {
            Err(Error::Step { iteration, step, .. }) => {
                assert_eq!(iteration, 17);
                assert_eq!(step, "phi");
            }
            other => panic!("{other:?}"),
        }
    }
}
