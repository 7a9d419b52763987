use super::{clamp_abs, HmConfig, PriorContext};
use crate::dist::{self, GigParams};
use crate::error::{Error, Result};
use crate::groups::GroupIndex;
use crate::model::VarSpec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const AR_ORDER: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct HmState {
    pub groups: GroupIndex,
    /// One shrinkage scale per group (own, cross) or a single one for the covariance factor.
    pub lambda: Vec<f64>,
    /// (c, d) gamma hyperparameters per group.
    pub cd: Vec<(f64, f64)>,
    /// Fixed constants with lambda factored out.
    pub rtilde: Vec<f64>,
}

/// Residual variance SSR / (n - 7) of an OLS AR(6) fit with intercept.
pub fn ar_residual_variance(y: &[f64]) -> Result<f64> {
    let p = AR_ORDER;
    if y.len() <= 2 * p + 1 {
        return Err(Error::EmptyInput(format!("AR({p}) fit needs more than {} observations, got {}", 2 * p + 1, y.len())));
    }
    let n = y.len() - p;
    let x = DMatrix::from_fn(n, p + 1, |t, c| if c == 0 { 1.0 } else { y[p + t - c] });
    let z = DVector::from_fn(n, |t, _| y[p + t]);
    let xtx = x.transpose() * &x;
    let chol = xtx.cholesky().ok_or_else(|| Error::Singular("AR(6) design".into()))?;
    let coef = chol.solve(&(x.transpose() * &z));
    let r = &z - &x * coef;
    let ssr = r.norm_squared();
    let v = ssr / (n - p - 1) as f64;
    // a constant or exactly-determined series leaves no residual scale
    let scale = z.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(v.is_finite() && v > 1e-14 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::Singular("AR(6) residual variance is zero".into()));
    }
    Ok(v)
}

/// sigma-hat per column of `y`.
pub fn hm_scale_constants(y: &DMatrix<f64>) -> Result<Vec<f64>> {
    (0..y.ncols()).map(|i| ar_residual_variance(y.column(i).as_slice())).collect()
}

/// Minnesota constants r-tilde for vec(Phi); intercept entries are 1 (unused).
pub(crate) fn rtilde(spec: &VarSpec, sigma_hat: &[f64], variance_ratio: bool) -> Vec<f64> {
    let mut out = vec![1.0; spec.n()];
    for eq in 0..spec.m {
        for row in 0..spec.k() {
            if let Some((r, var)) = spec.row_lag_var(row) {
                let r2 = (r * r) as f64;
                let ratio = sigma_hat[eq] / sigma_hat[var];
                out[spec.vec_index(row, eq)] = if var == eq {
                    1.0 / r2
                } else if variance_ratio {
                    ratio / r2
                } else {
                    ratio.sqrt() / r2
                };
            }
        }
    }
    out
}

impl HmState {
    pub fn new(cfg: &HmConfig, groups: GroupIndex, ctx: &PriorContext) -> Result<Self> {
        let rtilde = ctx.rtilde.clone().unwrap_or_else(|| vec![1.0; groups.n]);
        if rtilde.len() != groups.n {
            return Err(Error::Dimension(format!("{} scale constants for {} coefficients", rtilde.len(), groups.n)));
        }
        let cd: Vec<(f64, f64)> =
            groups.labels.iter().map(|l| if l == "cross" { (cfg.c2, cfg.d2) } else { (cfg.c1, cfg.d1) }).collect();
        // start at the prior mean
        let lambda = cd.iter().map(|(c, d)| c / d).collect();
        Ok(HmState { groups, lambda, cd, rtilde })
    }

    pub fn update<R: Rng + ?Sized>(&mut self, beta: &[f64], rng: &mut R) -> Result<()> {
        for (g, idx) in self.groups.groups.iter().enumerate() {
            let (c, d) = self.cd[g];
            let chi: f64 = idx.iter().map(|&j| clamp_abs(beta[j]).powi(2) / self.rtilde[j]).sum::<f64>().max(f64::MIN_POSITIVE);
            self.lambda[g] = dist::gig(GigParams { theta: c - 0.5 * idx.len() as f64, psi: 2.0 * d, chi }, rng)?;
        }
        Ok(())
    }

    pub fn sample_from_prior<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for g in 0..self.lambda.len() {
            let (c, d) = self.cd[g];
            self.lambda[g] = dist::gamma(c, d, rng)?;
        }
        Ok(())
    }

    pub fn fill_variances(&self, v: &mut [f64]) {
        for (g, idx) in self.groups.groups.iter().enumerate() {
            for &j in idx {
                v[j] = self.lambda[g] * self.rtilde[j];
            }
        }
    }

    pub fn hyper_names(&self) -> Vec<String> {
        self.groups.labels.iter().map(|l| format!("lambda[{l}]")).collect()
    }

    pub fn hyper_values(&self) -> Vec<f64> {
        self.lambda.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hm_cfg() -> HmConfig {
        HmConfig { c1: 0.01, d1: 0.01, c2: 0.01, d2: 0.01, variance_ratio: true, sigma_hat: None }
    }

    #[test]
    fn minnesota_arithmetic() {
        let spec = VarSpec::new(2, 2, true).unwrap();
        let rt = rtilde(&spec, &[1.0, 1.0], true);
        let groups = GroupIndex::own_cross(&spec);
        let ctx = PriorContext { t_obs: 30, k: spec.k(), scale: None, rtilde: Some(rt) };
        let mut s = HmState::new(&hm_cfg(), groups, &ctx).unwrap();
        s.lambda = vec![0.4, 0.7];
        let mut v = vec![0.0; spec.n()];
        s.fill_variances(&mut v);
        // own lag 2 of equation 0: row 2
        assert!((v[spec.vec_index(2, 0)] - 0.1).abs() < 1e-15);
        // cross lag 1 with equal scales
        assert!((v[spec.vec_index(1, 0)] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn cross_lag_ratio_switch() {
        let spec = VarSpec::new(2, 1, false).unwrap();
        let a = rtilde(&spec, &[4.0, 1.0], true);
        let b = rtilde(&spec, &[4.0, 1.0], false);
        // equation 0, variable 1
        assert_eq!(a[spec.vec_index(1, 0)], 4.0);
        assert_eq!(b[spec.vec_index(1, 0)], 2.0);
        assert_eq!(a[spec.vec_index(0, 1)], 0.25);
    }

    #[test]
    fn lambda_draws_match_gig_quadrature() {
        let spec = VarSpec::new(2, 1, false).unwrap();
        let groups = GroupIndex::own_cross(&spec);
        let ctx = PriorContext { t_obs: 30, k: 2, scale: None, rtilde: Some(vec![1.0; 4]) };
        let mut s = HmState::new(&hm_cfg(), groups, &ctx).unwrap();
        let beta = [0.3, -0.05, 0.02, 0.6];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            s.update(&beta, &mut rng).unwrap();
            acc += s.lambda[0];
        }
        let mean = acc / n as f64;
        // own group holds beta[0], beta[3]
        let chi = 0.3f64.powi(2) + 0.6f64.powi(2);
        let theta = 0.01 - 1.0;
        let dens = |x: f64| x.powf(theta - 1.0) * (-(0.02 * x + chi / x) / 2.0).exp();
        let z = quad::integrate_to_inf(dens, 0.0, 1e-13, 1e-11).unwrap().value;
        let m1 = quad::integrate_to_inf(|x| x * dens(x), 0.0, 1e-13, 1e-11).unwrap().value / z;
        let m2 = quad::integrate_to_inf(|x| x * x * dens(x), 0.0, 1e-13, 1e-11).unwrap().value / z;
        let se = ((m2 - m1 * m1) / n as f64).sqrt();
        assert!((mean - m1).abs() < 4.0 * se, "mean {mean} oracle {m1} se {se}");
    }

    #[test]
    fn ar6_white_noise_and_ar1() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let wn: Vec<f64> = (0..20_000).map(|_| dist::std_normal(&mut rng)).collect();
        assert!((ar_residual_variance(&wn).unwrap() - 1.0).abs() < 0.03);
        let mut x = 0.0;
        let ar: Vec<f64> = (0..20_000)
            .map(|_| {
                x = 0.9 * x + dist::std_normal(&mut rng);
                x
            })
            .collect();
        assert!((ar_residual_variance(&ar).unwrap() - 1.0).abs() < 0.03);
        assert!(ar_residual_variance(&[2.5; 50]).is_err());
        assert!(ar_residual_variance(&[1.0; 10]).is_err());
    }

    #[test]
    fn zero_coefficients_stay_finite() {
        let groups = GroupIndex::for_l(3);
        let ctx = PriorContext { t_obs: 30, k: 2, scale: None, rtilde: None };
        let mut s = HmState::new(&hm_cfg(), groups, &ctx).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            s.update(&[0.0; 3], &mut rng).unwrap();
            assert!(s.lambda[0].is_finite() && s.lambda[0] >= 0.0);
        }
    }
}
