use super::{Inclusion, PriorContext, SsvsConfig};
use crate::dist;
use crate::error::{Error, Result};
use crate::groups::GroupIndex;
use crate::model::{Design, VarSpec};
use nalgebra::DMatrix;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SsvsState {
    pub groups: GroupIndex,
    pub gamma: Vec<bool>,
    pub tau0: Vec<f64>,
    pub tau1: Vec<f64>,
    /// Inclusion probability per group.
    pub p: Vec<f64>,
    /// Beta hyperparameters when p is learned.
    pub beta_prior: Option<(f64, f64)>,
}

/// Posterior probability of the slab given beta.
pub fn slab_probability(beta: f64, tau0: f64, tau1: f64, p: f64) -> f64 {
    let b2 = beta * beta;
    let l1 = p.ln() - tau1.ln() - b2 / (2.0 * tau1 * tau1);
    let l0 = (1.0 - p).ln() - tau0.ln() - b2 / (2.0 * tau0 * tau0);
    1.0 / (1.0 + (l0 - l1).exp())
}

impl SsvsState {
    pub fn new(cfg: &SsvsConfig, groups: GroupIndex, ctx: &PriorContext) -> Result<Self> {
        let n = groups.n;
        let (tau0, tau1) = match (cfg.tau0, cfg.tau1, &ctx.scale) {
            (Some(t0), Some(t1), _) => (vec![t0; n], vec![t1; n]),
            (_, _, Some(sc)) if sc.len() == n => (sc.iter().map(|s| cfg.c0 * s).collect(), sc.iter().map(|s| cfg.c1 * s).collect()),
            (_, _, Some(sc)) => return Err(Error::Dimension(format!("{} scales for {n} coefficients", sc.len()))),
            _ => return Err(Error::config("tau0", "no spike/slab scales and no data for the semiautomatic rule")),
        };
        if tau0.iter().zip(&tau1).any(|(a, b)| !(*a > 0.0 && b > a && b.is_finite())) {
            return Err(Error::NonFinite("spike/slab scales".into()));
        }
        let (p0, beta_prior) = match cfg.p {
            Inclusion::Fixed(p) => (p, None),
            Inclusion::Beta { s1, s2 } => (s1 / (s1 + s2), Some((s1, s2))),
        };
        Ok(SsvsState { gamma: vec![true; n], tau0, tau1, p: vec![p0; groups.groups.len()], beta_prior, groups })
    }

    pub fn update<R: Rng + ?Sized>(&mut self, beta: &[f64], rng: &mut R) -> Result<()> {
        for (g, idx) in self.groups.groups.iter().enumerate() {
            let mut count = 0usize;
            for &j in idx {
                let pb = slab_probability(beta[j], self.tau0[j], self.tau1[j], self.p[g]);
                self.gamma[j] = rng.random::<f64>() < pb;
                count += self.gamma[j] as usize;
            }
            if let Some((s1, s2)) = self.beta_prior {
                self.p[g] = dist::beta(s1 + count as f64, s2 + (idx.len() - count) as f64, rng)?;
            }
        }
        Ok(())
    }

    pub fn sample_from_prior<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for (g, idx) in self.groups.groups.iter().enumerate() {
            if let Some((s1, s2)) = self.beta_prior {
                self.p[g] = dist::beta(s1, s2, rng)?;
            }
            for &j in idx {
                self.gamma[j] = rng.random::<f64>() < self.p[g];
            }
        }
        Ok(())
    }

    pub fn fill_variances(&self, v: &mut [f64]) {
        for idx in &self.groups.groups {
            for &j in idx {
                let t = if self.gamma[j] { self.tau1[j] } else { self.tau0[j] };
                v[j] = t * t;
            }
        }
    }

    pub fn hyper_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for l in &self.groups.labels {
            if self.beta_prior.is_some() {
                out.push(format!("p[{l}]"));
            }
            out.push(format!("included[{l}]"));
        }
        out
    }

    /// Inclusion probability (when learned) and share of included coefficients per group.
    pub fn hyper_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (g, idx) in self.groups.groups.iter().enumerate() {
            if self.beta_prior.is_some() {
                out.push(self.p[g]);
            }
            out.push(idx.iter().filter(|&&j| self.gamma[j]).count() as f64 / idx.len() as f64);
        }
        out
    }
}

fn ols(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let xtx = x.transpose() * x;
    let xtx_inv = xtx.clone().cholesky().ok_or_else(|| Error::Singular("regressor cross-product".into()))?.inverse();
    let coef = &xtx_inv * x.transpose() * y;
    let resid = y - x * &coef;
    Ok((xtx_inv, coef, resid))
}

/// Square roots of the posterior variances of vec(Phi) under a flat conjugate
/// normal-Wishart prior: S_ii (X'X)^{-1}_kk / (T - K - M - 1).
pub fn ssvs_semiautomatic_scales(design: &Design, spec: &VarSpec) -> Result<Vec<f64>> {
    let (t, k, m) = (design.x.nrows(), spec.k(), spec.m);
    let dof = t as f64 - k as f64 - m as f64 - 1.0;
    if dof <= 0.0 {
        return Err(Error::NonFinite(format!("posterior variance undefined with T={t}, K={k}, M={m}")));
    }
    let (xtx_inv, _, resid) = ols(&design.x, &design.y)?;
    let s = resid.transpose() * &resid;
    let mut out = vec![0.0; spec.n()];
    for eq in 0..m {
        for row in 0..k {
            let v = s[(eq, eq)] * xtx_inv[(row, row)] / dof;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::NonFinite(format!("posterior variance of coefficient ({row}, {eq})")));
            }
            out[spec.vec_index(row, eq)] = v.sqrt();
        }
    }
    Ok(out)
}

/// Scales for the free elements of the covariance factor: OLS standard errors from
/// regressing each OLS residual series on the preceding ones.
pub fn ssvs_l_scales(design: &Design, spec: &VarSpec) -> Result<Vec<f64>> {
    let m = spec.m;
    let (_, _, eps) = ols(&design.x, &design.y)?;
    let t = eps.nrows();
    let mut out = vec![0.0; spec.n_l()];
    for j in 1..m {
        if t <= j {
            return Err(Error::NonFinite(format!("too few observations for covariance scales of equation {j}")));
        }
        let x = eps.columns(0, j).into_owned();
        let y = eps.columns(j, 1).into_owned();
        let (xtx_inv, _, r) = ols(&x, &y)?;
        let s2 = r.norm_squared() / (t - j) as f64;
        for i in 0..j {
            let v = s2 * xtx_inv[(i, i)];
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::NonFinite(format!("covariance scale ({i}, {j})")));
            }
            out[crate::model::l_index(i, j)] = v.sqrt();
        }
    }
    Ok(out)
}
