use super::{clamp_abs, grid, Hyper, PriorContext, R2d2Config};
use crate::dist::{self, GigParams};
use crate::error::{Error, Result};
use crate::groups::GroupIndex;
use crate::special::log_sum_exp;
use rand::Rng;

const LN_MU_BOUND: f64 = 300.0;
const LN_CHI_CAP: f64 = 700.0;

/// a_pi = 1 / (n^(b/2) T^(b/2) ln T).
pub fn a_pi_rule(n_g: usize, t_obs: usize, b: f64) -> Result<f64> {
    if t_obs < 2 {
        return Err(Error::InvalidParameter(format!("a_pi rule needs T >= 2, got {t_obs}")));
    }
    let (n, t) = (n_g as f64, t_obs as f64);
    Ok(1.0 / ((0.5 * b * (n.ln() + t.ln())).exp() * t.ln()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct R2d2State {
    pub groups: GroupIndex,
    pub psi: Vec<f64>,
    /// ln theta per coefficient (indexed like psi); theta sums to one in each group.
    pub ln_theta: Vec<f64>,
    pub zeta: Vec<f64>,
    pub xi: Vec<f64>,
    pub b: Vec<f64>,
    pub a_pi: Vec<f64>,
    /// Support of b; a single point means b is fixed.
    pub b_grid: Vec<f64>,
    pub fixed_a_pi: Option<f64>,
    pub t_obs: usize,
}

impl R2d2State {
    pub fn new(cfg: &R2d2Config, groups: GroupIndex, ctx: &PriorContext) -> Result<Self> {
        let b_grid = match &cfg.b {
            Hyper::Value(b) => vec![*b],
            Hyper::Grid(g) => grid(g.lo.unwrap_or(0.01), g.hi.unwrap_or(1.0), g.points.unwrap_or(100)),
            Hyper::Keyword(k) => return Err(Error::config("b", format!("unknown keyword `{k}`"))),
        };
        let ng = groups.groups.len();
        let mut s = R2d2State {
            psi: vec![2.0; groups.n],
            ln_theta: vec![0.0; groups.n],
            zeta: vec![1.0; ng],
            xi: vec![1.0; ng],
            b: vec![b_grid[b_grid.len() / 2]; ng],
            a_pi: vec![0.0; ng],
            b_grid,
            fixed_a_pi: cfg.a_pi,
            t_obs: ctx.t_obs,
            groups,
        };
        for g in 0..ng {
            let n_g = s.groups.groups[g].len();
            s.a_pi[g] = s.a_pi_for(n_g, s.b[g])?;
            s.xi[g] = s.b[g];
            s.zeta[g] = n_g as f64 * s.a_pi[g] / s.xi[g];
            let lt = -(n_g as f64).ln();
            for &j in &s.groups.groups[g] {
                s.ln_theta[j] = lt;
            }
        }
        Ok(s)
    }

    fn a_pi_for(&self, n_g: usize, b: f64) -> Result<f64> {
        match self.fixed_a_pi {
            Some(a) => Ok(a),
            None => a_pi_rule(n_g, self.t_obs, b),
        }
    }

    pub fn update<R: Rng + ?Sized>(&mut self, beta: &[f64], rng: &mut R) -> Result<()> {
        for g in 0..self.groups.groups.len() {
            self.update_group(g, beta, rng)?;
        }
        Ok(())
    }

    fn update_group<R: Rng + ?Sized>(&mut self, g: usize, beta: &[f64], rng: &mut R) -> Result<()> {
        let idx = self.groups.groups[g].clone();
        let n_g = idx.len();
        let a_pi = self.a_pi[g];
        let a = n_g as f64 * a_pi;

        // psi_j^{-1} ~ IG(sqrt(theta_j zeta / 2) / |beta_j|, 1)
        let ln_zeta = self.zeta[g].ln();
        for &j in &idx {
            let ln_b = clamp_abs(beta[j]).ln();
            let ln_mu = (0.5 * (self.ln_theta[j] + ln_zeta - std::f64::consts::LN_2) - ln_b).clamp(-LN_MU_BOUND, LN_MU_BOUND);
            let ln_inv = dist::ln_gig(GigParams { theta: -0.5, psi: (-2.0 * ln_mu).exp(), chi: 1.0 }, rng)?;
            self.psi[j] = (-ln_inv).exp();
        }

        // zeta ~ GIG(a - n_g/2, 2 xi, sum 2 beta^2 / (psi theta))
        let terms: Vec<f64> = idx
            .iter()
            .map(|&j| std::f64::consts::LN_2 + 2.0 * clamp_abs(beta[j]).ln() - self.psi[j].ln() - self.ln_theta[j])
            .collect();
        let chi = log_sum_exp(&terms).min(LN_CHI_CAP).exp();
        self.zeta[g] = dist::gig(GigParams { theta: a - 0.5 * n_g as f64, psi: 2.0 * self.xi[g], chi }, rng)?;

        // xi ~ G(a + b, 1 + zeta)
        self.xi[g] = dist::gamma(a + self.b[g], 1.0 + self.zeta[g], rng)?.max(f64::MIN_POSITIVE);

        // T_j ~ GIG(a_pi - 1/2, 2 xi, 2 beta_j^2 / psi_j); theta = T / sum T, zeta = sum T
        let mut ln_t = Vec::with_capacity(n_g);
        for &j in &idx {
            let chi = (std::f64::consts::LN_2 + 2.0 * clamp_abs(beta[j]).ln() - self.psi[j].ln()).min(LN_CHI_CAP).exp().max(f64::MIN_POSITIVE);
            ln_t.push(dist::ln_gig(GigParams { theta: a_pi - 0.5, psi: 2.0 * self.xi[g], chi }, rng)?);
        }
        let ln_sum = log_sum_exp(&ln_t);
        for (k, &j) in idx.iter().enumerate() {
            self.ln_theta[j] = ln_t[k] - ln_sum;
        }
        self.zeta[g] = ln_sum.exp().max(f64::MIN_POSITIVE);

        // b on its grid
        if self.b_grid.len() > 1 {
            let ln_th: Vec<f64> = idx.iter().map(|&j| self.ln_theta[j]).collect();
            let (zeta, xi) = (self.zeta[g], self.xi[g]);
            let mut lw = Vec::with_capacity(self.b_grid.len());
            for &bt in &self.b_grid {
                let ap = self.a_pi_for(n_g, bt)?;
                lw.push(
                    dist::ln_dirichlet_sym_pdf(&ln_th, ap)
                        + dist::ln_gamma_pdf(zeta, n_g as f64 * ap, xi)
                        + dist::ln_gamma_pdf(xi, bt, 1.0),
                );
            }
            let k = dist::discrete(&lw, rng)?;
            self.b[g] = self.b_grid[k];
            self.a_pi[g] = self.a_pi_for(n_g, self.b[g])?;
        }
        Ok(())
    }

    pub fn sample_from_prior<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for g in 0..self.groups.groups.len() {
            let idx = &self.groups.groups[g];
            let n_g = idx.len();
            self.b[g] = self.b_grid[rng.random_range(0..self.b_grid.len())];
            self.a_pi[g] = self.a_pi_for(n_g, self.b[g])?;
            // tiny shapes underflow to zero; keep both strictly positive
            self.xi[g] = dist::gamma(self.b[g], 1.0, rng)?.max(f64::MIN_POSITIVE);
            self.zeta[g] = dist::gamma(n_g as f64 * self.a_pi[g], self.xi[g], rng)?.max(f64::MIN_POSITIVE);
            let (_, ln_th) = dist::dirichlet_symmetric(self.a_pi[g], n_g, rng)?;
            for (k, &j) in idx.iter().enumerate() {
                self.ln_theta[j] = ln_th[k];
                self.psi[j] = dist::gamma(1.0, 0.5, rng)?;
            }
        }
        Ok(())
    }

    /// v_j = psi_j theta_j zeta / 2.
    pub fn fill_variances(&self, v: &mut [f64]) {
        for (g, idx) in self.groups.groups.iter().enumerate() {
            let lz = self.zeta[g].ln();
            for &j in idx {
                v[j] = (self.psi[j].ln() + self.ln_theta[j] + lz - std::f64::consts::LN_2).exp();
            }
        }
    }

    pub fn hyper_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for l in &self.groups.labels {
            for h in ["b", "a_pi", "xi", "zeta"] {
                out.push(format!("{h}[{l}]"));
            }
        }
        out
    }

    pub fn hyper_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in 0..self.groups.groups.len() {
            out.extend([self.b[g], self.a_pi[g], self.xi[g], self.zeta[g]]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::Grouping;
    use crate::model::VarSpec;
    use crate::priors::{GridSpec, PriorConfig, PriorState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(spec: &VarSpec, grouping: Grouping, b: Hyper) -> R2d2State {
        let ctx = PriorContext { t_obs: 40, k: spec.k(), scale: None, rtilde: None };
        let cfg = R2d2Config { grouping, b, a_pi: None };
        R2d2State::new(&cfg, GroupIndex::for_phi(spec, grouping), &ctx).unwrap()
    }

    #[test]
    fn a_pi_rule_monotone_in_b() {
        let mut prev = 0.0;
        for b in grid(1.0, 0.01, 100) {
            let a = a_pi_rule(12, 80, b).unwrap();
            assert!(a >= prev);
            prev = a;
        }
        // b = 0 gives 1 / ln T
        assert!((a_pi_rule(5, 100, 0.0).unwrap() - 1.0 / 100f64.ln()).abs() < 1e-15);
        assert!(a_pi_rule(5, 1, 0.5).is_err());
    }

    #[test]
    fn inverse_gaussian_step_matches_ig_1_1() {
        // theta zeta = 2 and |beta| = 1 give psi^{-1} ~ IG(1, 1): mean 1, variance 1
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let ln_mu: f64 = 0.5 * (0.5f64.ln() + 4f64.ln() - std::f64::consts::LN_2) - 0.0;
        assert!(ln_mu.abs() < 1e-15);
        let draws: Vec<f64> = (0..n)
            .map(|_| dist::ln_gig(GigParams { theta: -0.5, psi: (-2.0 * ln_mu).exp(), chi: 1.0 }, &mut rng).unwrap().exp())
            .collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let v = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
        assert!((m - 1.0).abs() < 0.01, "{m}");
        assert!((v - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn variance_product_formula() {
        let spec = VarSpec::new(1, 1, false).unwrap();
        let mut s = state(&spec, Grouping::Global, Hyper::Value(0.5));
        s.psi[0] = 2.0;
        s.ln_theta[0] = 0.5f64.ln();
        s.zeta[0] = 4.0;
        let mut v = vec![0.0];
        s.fill_variances(&mut v);
        assert!((v[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn single_coefficient_group_keeps_theta_one() {
        let spec = VarSpec::new(1, 1, false).unwrap();
        let mut s = state(&spec, Grouping::Global, Hyper::Grid(GridSpec { lo: None, hi: None, points: None }));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..200 {
            s.update(&[0.3 * (i as f64).sin()], &mut rng).unwrap();
            assert_eq!(s.ln_theta[0], 0.0);
        }
    }

    #[test]
    fn fixed_b_is_unchanged() {
        let spec = VarSpec::new(3, 2, false).unwrap();
        let mut s = state(&spec, Grouping::SemiGlobal, Hyper::Value(0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let beta: Vec<f64> = (0..spec.n()).map(|j| 0.1 * j as f64 - 0.5).collect();
        for _ in 0..50 {
            s.update(&beta, &mut rng).unwrap();
            assert!(s.b.iter().all(|&b| b == 0.5));
        }
    }

    #[test]
    fn simplex_and_positivity_hold_with_zero_coefficients() {
        let spec = VarSpec::new(3, 2, true).unwrap();
        let mut s = state(&spec, Grouping::SemiGlobal, Hyper::Grid(GridSpec { lo: None, hi: None, points: None }));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut beta = vec![0.0; spec.n()];
        beta[0] = 5.0;
        for _ in 0..100 {
            s.update(&beta, &mut rng).unwrap();
            for idx in &s.groups.groups {
                let sum: f64 = idx.iter().map(|&j| s.ln_theta[j].exp()).sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
            let mut v = vec![0.0; spec.n()];
            s.fill_variances(&mut v);
            assert!(v.iter().all(|x| x.is_finite() && *x >= 0.0));
            assert!(s.psi.iter().chain(&s.zeta).chain(&s.xi).all(|x| x.is_finite() && *x > 0.0));
        }
    }

    #[test]
    fn semi_global_with_one_group_reproduces_global() {
        // M = 1, p = 1: both groupings have a single group
        let spec = VarSpec::new(1, 1, false).unwrap();
        let run = |grouping| {
            let cfg = PriorConfig::r2d2(grouping, Hyper::Grid(GridSpec { lo: None, hi: None, points: None }));
            let design = crate::model::design_from_matrix(&nalgebra::DMatrix::from_fn(30, 1, |i, _| (i as f64 * 0.7).sin()), &spec).unwrap();
            let mut s = PriorState::for_phi(&cfg, &spec, &design).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut out = Vec::new();
            for i in 0..50 {
                s.update(&[0.2 + 0.01 * i as f64], &mut rng).unwrap();
                out.extend(s.variances());
            }
            out
        };
        assert_eq!(run(Grouping::Global), run(Grouping::SemiGlobal));
    }
}
