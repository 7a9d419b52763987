use super::{clamp_abs, grid, DlConfig, Hyper, PriorContext};
use crate::dist::{self, GigParams};
use crate::error::{Error, Result};
use crate::groups::GroupIndex;
use crate::special::log_sum_exp;
use rand::Rng;

const LN_MU_BOUND: f64 = 300.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DlState {
    pub groups: GroupIndex,
    pub psi: Vec<f64>,
    pub ln_theta: Vec<f64>,
    pub zeta: Vec<f64>,
    pub a: Vec<f64>,
    /// Support of a per group; a single point means a is fixed.
    pub a_grid: Vec<Vec<f64>>,
}

impl DlState {
    pub fn new(cfg: &DlConfig, groups: GroupIndex, ctx: &PriorContext) -> Result<Self> {
        let mut a_grid = Vec::new();
        for idx in &groups.groups {
            let n_g = idx.len() as f64;
            let gr = match &cfg.a {
                Hyper::Value(a) => vec![*a],
                Hyper::Keyword(k) if k == "inv-k" => vec![1.0 / ctx.k as f64],
                Hyper::Keyword(k) => return Err(Error::config("a", format!("unknown keyword `{k}`"))),
                Hyper::Grid(g) => {
                    let lo = g.lo.unwrap_or((1.0 / n_g).min(0.5));
                    grid(lo, g.hi.unwrap_or(0.5), g.points.unwrap_or(1000))
                }
            };
            a_grid.push(gr);
        }
        let ng = groups.groups.len();
        let mut s = DlState {
            psi: vec![2.0; groups.n],
            ln_theta: vec![0.0; groups.n],
            zeta: vec![1.0; ng],
            a: a_grid.iter().map(|g| g[g.len() / 2]).collect(),
            a_grid,
            groups,
        };
        for g in 0..ng {
            let n_g = s.groups.groups[g].len() as f64;
            // prior mean of zeta
            s.zeta[g] = 2.0 * n_g * s.a[g];
            for &j in &s.groups.groups[g] {
                s.ln_theta[j] = -n_g.ln();
            }
        }
        Ok(s)
    }

    pub fn update<R: Rng + ?Sized>(&mut self, beta: &[f64], rng: &mut R) -> Result<()> {
        for g in 0..self.groups.groups.len() {
            self.update_group(g, beta, rng)?;
        }
        Ok(())
    }

    fn update_group<R: Rng + ?Sized>(&mut self, g: usize, beta: &[f64], rng: &mut R) -> Result<()> {
        let idx = self.groups.groups[g].clone();
        let n_g = idx.len() as f64;
        let a = self.a[g];

        // T_j ~ GIG(a - 1, 1, 2|beta_j|); theta = T / sum T
        let mut ln_t = Vec::with_capacity(idx.len());
        for &j in &idx {
            ln_t.push(dist::ln_gig(GigParams { theta: a - 1.0, psi: 1.0, chi: 2.0 * clamp_abs(beta[j]) }, rng)?);
        }
        let ln_sum = log_sum_exp(&ln_t);
        for (k, &j) in idx.iter().enumerate() {
            self.ln_theta[j] = ln_t[k] - ln_sum;
        }

        // zeta ~ GIG(n_g (a - 1), 1, 2 sum |beta_j| / theta_j)
        let terms: Vec<f64> = idx.iter().map(|&j| clamp_abs(beta[j]).ln() - self.ln_theta[j]).collect();
        let chi = (std::f64::consts::LN_2 + log_sum_exp(&terms)).min(700.0).exp();
        self.zeta[g] = dist::gig(GigParams { theta: n_g * (a - 1.0), psi: 1.0, chi }, rng)?;

        // psi_j^{-1} ~ IG(theta_j zeta / |beta_j|, 1)
        let lz = self.zeta[g].ln();
        for &j in &idx {
            let ln_mu = (self.ln_theta[j] + lz - clamp_abs(beta[j]).ln()).clamp(-LN_MU_BOUND, LN_MU_BOUND);
            let ln_inv = dist::ln_gig(GigParams { theta: -0.5, psi: (-2.0 * ln_mu).exp(), chi: 1.0 }, rng)?;
            self.psi[j] = (-ln_inv).exp();
        }

        // a on its grid
        let gr = &self.a_grid[g];
        if gr.len() > 1 {
            let ln_th: Vec<f64> = idx.iter().map(|&j| self.ln_theta[j]).collect();
            let lw: Vec<f64> = gr
                .iter()
                .map(|&at| dist::ln_dirichlet_sym_pdf(&ln_th, at) + dist::ln_gamma_pdf(self.zeta[g], n_g * at, 0.5))
                .collect();
            self.a[g] = gr[dist::discrete(&lw, rng)?];
        }
        Ok(())
    }

    pub fn sample_from_prior<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for g in 0..self.groups.groups.len() {
            let idx = &self.groups.groups[g];
            let gr = &self.a_grid[g];
            self.a[g] = gr[rng.random_range(0..gr.len())];
            self.zeta[g] = dist::gamma(idx.len() as f64 * self.a[g], 0.5, rng)?;
            let (_, ln_th) = dist::dirichlet_symmetric(self.a[g], idx.len(), rng)?;
            for (k, &j) in idx.iter().enumerate() {
                self.ln_theta[j] = ln_th[k];
                self.psi[j] = dist::gamma(1.0, 0.5, rng)?;
            }
        }
        Ok(())
    }

    /// v_j = psi_j theta_j^2 zeta^2.
    pub fn fill_variances(&self, v: &mut [f64]) {
        for (g, idx) in self.groups.groups.iter().enumerate() {
            let lz = self.zeta[g].ln();
            for &j in idx {
                v[j] = (self.psi[j].ln() + 2.0 * (self.ln_theta[j] + lz)).exp();
            }
        }
    }

    pub fn hyper_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for l in &self.groups.labels {
            out.push(format!("a[{l}]"));
            out.push(format!("zeta[{l}]"));
        }
        out
    }

    pub fn hyper_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in 0..self.groups.groups.len() {
            out.push(self.a[g]);
            out.push(self.zeta[g]);
        }
        out
    }
}
