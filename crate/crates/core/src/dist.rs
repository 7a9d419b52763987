//! Random variate generators and log densities used by the full conditionals.

use crate::error::{Error, Result};
use crate::special::{ln_gamma, log_sum_exp};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use std::f64::consts::{LN_2, PI};

const LN_TINY: f64 = -36.841_361_487_904_734; // ln(1e-16)

/// Uniform draw on (0, 1].
#[inline]
pub fn uniform_pos<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

#[inline]
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Log of a Gamma(shape, 1) draw. Shapes below one use the boost
/// ln G(a+1) + ln(U)/a so that tiny shapes never underflow.
pub fn ln_gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma shape {shape}")));
    }
    if shape < 1.0 {
        let g = Gamma::new(shape + 1.0, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let x: f64 = g.sample(rng);
        Ok(x.ln() + uniform_pos(rng).ln() / shape)
    } else {
        let g = Gamma::new(shape, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let x: f64 = g.sample(rng);
        Ok(x.ln())
    }
}

/// Gamma draw with shape and rate.
pub fn gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma rate {rate}")));
    }
    Ok((ln_gamma_draw(shape, rng)? - rate.ln()).exp())
}

/// Inverse-gamma draw: 1/G(shape, rate=scale).
pub fn inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidParameter(format!("inverse gamma scale {scale}")));
    }
    Ok((scale.ln() - ln_gamma_draw(shape, rng)?).exp())
}

pub fn beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    let la = ln_gamma_draw(a, rng)?;
    let lb = ln_gamma_draw(b, rng)?;
    Ok(1.0 / (1.0 + (lb - la).exp()))
}

/// Symmetric Dirichlet draw returned as (values, log values).
pub fn dirichlet_symmetric<R: Rng + ?Sized>(a: f64, k: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("dirichlet concentration {a}")));
    }
    if k == 0 {
        return Err(Error::EmptyInput("dirichlet dimension".into()));
    }
    let mut lg = Vec::with_capacity(k);
    for _ in 0..k {
        lg.push(ln_gamma_draw(a, rng)?);
    }
    Ok(normalize_log(&lg))
}

/// Normalize positive weights given on the log scale onto the simplex.
pub fn normalize_log(lw: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let z = log_sum_exp(lw);
    let ln: Vec<f64> = lw.iter().map(|v| v - z).collect();
    let mut vals: Vec<f64> = ln.iter().map(|v| v.exp()).collect();
    let s: f64 = vals.iter().sum();
    for v in vals.iter_mut() {
        *v /= s;
    }
    (vals, ln)
}

/// Index drawn with probability proportional to exp(log_weights).
pub fn discrete<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<usize> {
    let m = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return Err(Error::InvalidParameter("all discrete weights are zero".into()));
    }
    let w: Vec<f64> = log_weights.iter().map(|v| if v.is_nan() { 0.0 } else { (v - m).exp() }).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return Ok(i);
        }
        u -= wi;
    }
    // rounding left u just above zero: return the last positive weight
    Ok(w.iter().rposition(|v| *v > 0.0).unwrap_or(0))
}

/// Generalized inverse Gaussian parameters; density proportional to
/// x^(theta-1) exp(-(psi x + chi / x) / 2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GigParams {
    pub theta: f64,
    pub psi: f64,
    pub chi: f64,
}

impl GigParams {
    pub fn new(theta: f64, psi: f64, chi: f64) -> Result<Self> {
        let p = GigParams { theta, psi, chi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let GigParams { theta, psi, chi } = *self;
        let finite = theta.is_finite() && psi.is_finite() && chi.is_finite();
        let ok = finite
            && psi >= 0.0
            && chi >= 0.0
            && ((psi > 0.0 && chi >= 0.0 && theta > 0.0) || (psi > 0.0 && chi > 0.0) || (chi > 0.0 && theta < 0.0));
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("GIG(theta={theta}, psi={psi}, chi={chi})")))
        }
    }

    /// E[X] from the Bessel ratio.
    pub fn mean(&self) -> Result<f64> {
        self.moment(1.0)
    }

    /// E[X^r] for the non-degenerate case psi, chi > 0.
    pub fn moment(&self, r: f64) -> Result<f64> {
        use crate::special::ln_bessel_k;
        if self.chi == 0.0 {
            // Gamma(theta, psi/2)
            return Ok((ln_gamma(self.theta + r) - ln_gamma(self.theta) - r * (self.psi / 2.0).ln()).exp());
        }
        if self.psi == 0.0 {
            let a = -self.theta;
            return Ok((ln_gamma(a - r) - ln_gamma(a) + r * (self.chi / 2.0).ln()).exp());
        }
        let omega = (self.psi * self.chi).sqrt();
        let ln_alpha = 0.5 * (self.chi.ln() - self.psi.ln());
        let l = r * ln_alpha + ln_bessel_k(self.theta + r, omega)? - ln_bessel_k(self.theta, omega)?;
        Ok(l.exp())
    }

    /// Log normalizing constant: ln of int x^(theta-1) exp(-(psi x + chi/x)/2) dx.
    pub fn ln_norm(&self) -> Result<f64> {
        use crate::special::ln_bessel_k;
        if self.chi == 0.0 {
            return Ok(ln_gamma(self.theta) - self.theta * (self.psi / 2.0).ln());
        }
        if self.psi == 0.0 {
            return Ok(ln_gamma(-self.theta) + self.theta * (self.chi / 2.0).ln());
        }
        let omega = (self.psi * self.chi).sqrt();
        let ln_alpha = 0.5 * (self.chi.ln() - self.psi.ln());
        Ok(LN_2 + self.theta * ln_alpha + ln_bessel_k(self.theta, omega)?)
    }

    pub fn ln_pdf(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok((self.theta - 1.0) * x.ln() - 0.5 * (self.psi * x + self.chi / x) - self.ln_norm()?)
    }
}

fn gig_mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        (((lambda - 1.0) * (lambda - 1.0) + omega * omega).sqrt() + (lambda - 1.0)) / omega
    } else {
        omega / (((1.0 - lambda) * (1.0 - lambda) + omega * omega).sqrt() + (1.0 - lambda))
    }
}

/// Ratio-of-uniforms without mode shift.
fn rou_noshift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let ym = ((lambda + 1.0) + ((lambda + 1.0) * (lambda + 1.0) + omega * omega).sqrt()) / omega;
    let um = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
    loop {
        let u = um * rng.random::<f64>();
        let v = uniform_pos(rng);
        let x = u / v;
        if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

/// Ratio-of-uniforms with shift by the mode, for large lambda or omega.
fn rou_shift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let a = -(2.0 * (lambda + 1.0) / omega + xm);
    let b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    let c = xm;
    let p = b - a * a / 3.0;
    let q = (2.0 * a * a * a) / 27.0 - (a * b) / 3.0 + c;
    let fi = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt())).clamp(-1.0, 1.0).acos();
    let fak = 2.0 * (-p / 3.0).sqrt();
    let y1 = fak * (fi / 3.0).cos() - a / 3.0;
    let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * PI).cos() - a / 3.0;
    let uplus = (y1 - xm) * (t * y1.ln() - s * (y1 + 1.0 / y1) - nc).exp();
    let uminus = (y2 - xm) * (t * y2.ln() - s * (y2 + 1.0 / y2) - nc).exp();
    loop {
        let u = uminus + rng.random::<f64>() * (uplus - uminus);
        let v = uniform_pos(rng);
        let x = u / v + xm;
        if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

/// Rejection from a three-piece hat for 0 <= lambda < 1 and small omega.
fn new_approach<R: Rng + ?Sized>(lambda: f64, omega: f64, ln_omega: f64, rng: &mut R) -> f64 {
    let xm = gig_mode(lambda, omega);
    let x0 = omega / (1.0 - lambda);
    let k0 = ((lambda - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
    let a0 = k0 * x0;
    let (k1, a1, k2, a2);
    if x0 >= 2.0 / omega {
        k1 = 0.0;
        a1 = 0.0;
        k2 = x0.powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
    } else {
        k1 = (-omega).exp();
        a1 = if lambda == 0.0 {
            k1 * (LN_2 - 2.0 * ln_omega)
        } else {
            k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
        };
        k2 = (2.0 / omega).powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-1.0f64).exp() / omega;
    }
    let atot = a0 + a1 + a2;
    loop {
        let mut v = atot * rng.random::<f64>();
        let (x, hx);
        if v <= a0 {
            x = x0 * v / a0;
            hx = k0;
        } else {
            v -= a0;
            if v <= a1 {
                if lambda == 0.0 {
                    x = omega * (omega.exp() * v).exp();
                    hx = k1 / x;
                } else {
                    x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                    hx = k1 * x.powf(lambda - 1.0);
                }
            } else {
                v -= a1;
                let a = if x0 > 2.0 / omega { x0 } else { 2.0 / omega };
                x = -2.0 / omega * ((-omega / 2.0 * a).exp() - omega / (2.0 * k2) * v).ln();
                hx = k2 * (-omega / 2.0 * x).exp();
            }
        }
        if !(x > 0.0) || !x.is_finite() {
            continue;
        }
        let u = rng.random::<f64>() * hx;
        if u.ln() <= (lambda - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x) {
            return x;
        }
    }
}

/// Draw from GIG(theta, psi, chi).
pub fn gig<R: Rng + ?Sized>(p: GigParams, rng: &mut R) -> Result<f64> {
    Ok(ln_gig(p, rng)?.exp())
}

/// Log of a GIG(theta, psi, chi) draw; stays finite where the draw itself underflows.
pub fn ln_gig<R: Rng + ?Sized>(p: GigParams, rng: &mut R) -> Result<f64> {
    p.validate()?;
    let GigParams { theta, psi, chi } = p;
    if chi == 0.0 {
        return Ok(ln_gamma_draw(theta, rng)? - (psi / 2.0).ln());
    }
    if psi == 0.0 {
        return Ok((chi / 2.0).ln() - ln_gamma_draw(-theta, rng)?);
    }
    let lambda = theta.abs();
    let ln_alpha = 0.5 * (chi.ln() - psi.ln());
    let ln_omega = 0.5 * (chi.ln() + psi.ln());
    let omega = ln_omega.exp();
    if lambda > 0.0 {
        // the 1/x (or x) term is negligible: gamma / inverse-gamma limit
        let c1 = 2.0 * ln_omega - (4.0 * lambda).ln();
        let c2 = lambda * (2.0 * ln_omega - LN_2) - ln_gamma(lambda + 1.0);
        if (c1 < LN_TINY && c2 < LN_TINY) || ln_omega < -690.0 {
            return Ok(if theta > 0.0 {
                ln_gamma_draw(theta, rng)? - (psi / 2.0).ln()
            } else {
                (chi / 2.0).ln() - ln_gamma_draw(-theta, rng)?
            });
        }
    } else if ln_omega < -690.0 {
        // lambda = 0 with vanishing omega: ln X is nearly uniform between the walls
        let c = LN_2 - ln_omega;
        let z = -c + 2.0 * c * rng.random::<f64>();
        return Ok(ln_alpha + z);
    }
    let x = if lambda > 2.0 || omega > 3.0 {
        rou_shift(lambda, omega, rng)
    } else if lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
        rou_noshift(lambda, omega, rng)
    } else {
        new_approach(lambda, omega, ln_omega, rng)
    };
    Ok(if theta < 0.0 { ln_alpha - x.ln() } else { ln_alpha + x.ln() })
}

/// Inverse Gaussian IG(mu, lambda) through its GIG(-1/2, lambda/mu^2, lambda) form.
pub fn inverse_gaussian<R: Rng + ?Sized>(mu: f64, lambda: f64, rng: &mut R) -> Result<f64> {
    if !(mu > 0.0) || !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("inverse gaussian mu={mu} lambda={lambda}")));
    }
    gig(GigParams { theta: -0.5, psi: lambda / (mu * mu), chi: lambda }, rng)
}

pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (x - mean) * (x - mean) / var)
}

pub fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Same as `ln_gamma_pdf` but takes ln x, for arguments that may underflow.
pub fn ln_gamma_pdf_log(ln_x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * ln_x - rate * ln_x.exp()
}

/// Symmetric Dirichlet log density from log components.
pub fn ln_dirichlet_sym_pdf(ln_x: &[f64], a: f64) -> f64 {
    let k = ln_x.len() as f64;
    ln_gamma(k * a) - k * ln_gamma(a) + (a - 1.0) * ln_x.iter().sum::<f64>()
}

pub fn ln_beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn mean_var(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    /// E[X] by quadrature of the unnormalized density on the log scale.
    fn quad_moment(p: GigParams, r: f64) -> f64 {
        let mode = {
            let lam = p.theta - 1.0;
            (lam + (lam * lam + p.psi * p.chi).sqrt()) / p.psi
        };
        let lm = (p.theta - 1.0) * mode.ln() - 0.5 * (p.psi * mode + p.chi / mode);
        let f = |x: f64, k: f64| ((p.theta - 1.0 + k) * x.ln() - 0.5 * (p.psi * x + p.chi / x) - lm).exp();
        let lo = mode * 1e-12;
        let hi = mode * 1e6 + 100.0 / p.psi;
        let z = quad::integrate_log_scale(|x| f(x, 0.0), lo, hi, 0.0, 1e-12).unwrap().value;
        let m = quad::integrate_log_scale(|x| f(x, r), lo, hi, 0.0, 1e-12).unwrap().value;
        m / z
    }

    #[test]
    fn gamma_special_case() {
        let mut r = rng(1);
        let p = GigParams::new(1.0, 4.0, 0.0).unwrap();
        let x: Vec<f64> = (0..200_000).map(|_| gig(p, &mut r).unwrap()).collect();
        let (m, _) = mean_var(&x);
        assert!((m - 0.5).abs() < 0.005, "m={m}");
    }

    #[test]
    fn inverse_gaussian_special_case() {
        let mut r = rng(2);
        let (mu, lam) = (1.5, 2.0);
        let x: Vec<f64> = (0..200_000).map(|_| inverse_gaussian(mu, lam, &mut r).unwrap()).collect();
        let (m, v) = mean_var(&x);
        assert!((m - mu).abs() < 0.01, "m={m}");
        assert!((v - mu.powi(3) / lam).abs() / (mu.powi(3) / lam) < 0.03, "v={v}");
    }

    #[test]
    fn quadrature_mean_matches_sampler() {
        let p = GigParams::new(0.7, 2.0, 3.0).unwrap();
        let want = quad_moment(p, 1.0);
        assert!((want - p.mean().unwrap()).abs() / want < 1e-10);
        let mut r = rng(3);
        let n = 400_000;
        let s: f64 = (0..n).map(|_| gig(p, &mut r).unwrap()).sum::<f64>() / n as f64;
        assert!((s - want).abs() / want < 0.01, "s={s} want={want}");
    }

    #[test]
    fn covers_all_regimes() {
        // (theta, psi, chi) picks: shift ROU, no-shift ROU, three-piece hat, both signs
        let grid = [
            (5.0, 1.0, 2.0),
            (-5.0, 1.0, 2.0),
            (0.5, 0.5, 0.5),
            (-0.5, 0.5, 0.5),
            (0.3, 0.01, 0.01),
            (-0.3, 0.01, 0.01),
            (0.0, 0.05, 0.05),
            (0.1, 1e-3, 2e-3),
        ];
        for (i, &(t, ps, c)) in grid.iter().enumerate() {
            let p = GigParams::new(t, ps, c).unwrap();
            let mut r = rng(10 + i as u64);
            let n = 200_000;
            let x: Vec<f64> = (0..n).map(|_| gig(p, &mut r).unwrap()).collect();
            let (m, _) = mean_var(&x);
            let want = p.mean().unwrap();
            let want_v = p.moment(2.0).unwrap() - want * want;
            let se = (want_v / n as f64).sqrt();
            assert!((m - want).abs() < 5.0 * se, "case {i}: m={m} want={want} se={se}");
        }
    }

    #[test]
    fn reciprocal_symmetry_in_moments() {
        // X ~ GIG(t, psi, chi)  <=>  1/X ~ GIG(-t, chi, psi)
        let p = GigParams::new(0.4, 3.0, 0.7).unwrap();
        let q = GigParams::new(-0.4, 0.7, 3.0).unwrap();
        assert!((p.moment(-1.0).unwrap() - q.mean().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn extreme_regimes_are_finite() {
        let mut r = rng(4);
        let cases = [
            (-600.0, 2.0, 1e-20),
            (0.001 - 0.5, 1e-3, 1e-24),
            (0.0005 - 0.5, 200.0, 1e-30),
            (1e-4, 1e-200, 1e-200),
            (0.0, 1e-300, 1e-300),
            (660.0, 0.02, 1e-12),
            (-1.0, 1e-300, 1.0),
        ];
        for &(t, ps, c) in &cases {
            let p = GigParams::new(t, ps, c).unwrap();
            for _ in 0..1000 {
                let x = gig(p, &mut r).unwrap();
                assert!(x.is_finite() && x >= 0.0, "{p:?} -> {x}");
            }
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(GigParams::new(-1.0, 1.0, 0.0).is_err());
        assert!(GigParams::new(1.0, 0.0, 1.0).is_err());
        assert!(GigParams::new(0.0, 0.0, 1.0).is_err());
        assert!(GigParams::new(0.5, -1.0, 1.0).is_err());
    }

    #[test]
    fn dirichlet_moments_and_tiny_shapes() {
        let mut r = rng(5);
        let (v, _) = dirichlet_symmetric(1.0, 1, &mut r).unwrap();
        assert_eq!(v, vec![1.0]);
        // uniform on the simplex: variance (1/3)(2/3)/4 = 1/18
        let n = 100_000;
        let first: Vec<f64> = (0..n).map(|_| dirichlet_symmetric(1.0, 3, &mut r).unwrap().0[0]).collect();
        let (m, var) = mean_var(&first);
        assert!((m - 1.0 / 3.0).abs() < 0.005);
        assert!((var - 1.0 / 18.0).abs() < 0.002, "var={var}");
        for _ in 0..100 {
            let (v, lv) = dirichlet_symmetric(5e-4, 1000, &mut r).unwrap();
            let s: f64 = v.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(lv.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn discrete_frequencies() {
        let mut r = rng(6);
        let lw = [1f64.ln(), 2f64.ln(), 3f64.ln()];
        let n = 120_000;
        let mut c = [0usize; 3];
        for _ in 0..n {
            c[discrete(&lw, &mut r).unwrap()] += 1;
        }
        for (i, want) in [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0].iter().enumerate() {
            assert!((c[i] as f64 / n as f64 - want).abs() < 0.006);
        }
        for _ in 0..1000 {
            assert_eq!(discrete(&[0.0, -1000.0], &mut r).unwrap(), 0);
        }
        assert!(discrete(&[f64::NEG_INFINITY; 2], &mut r).is_err());
        let mut c0 = 0;
        for _ in 0..20_000 {
            c0 += (discrete(&[0.0, 0.0], &mut r).unwrap() == 0) as usize;
        }
        assert!((c0 as f64 / 20_000.0 - 0.5).abs() < 0.015);
    }

    #[test]
    fn tiny_gamma_shapes_do_not_vanish() {
        let mut r = rng(7);
        for _ in 0..1000 {
            let l = ln_gamma_draw(1e-4, &mut r).unwrap();
            assert!(l.is_finite());
        }
    }

    #[test]
    fn densities_normalize() {
        let z = quad::integrate(|x| ln_gamma_pdf(x, 2.5, 1.5).exp(), 0.0, 60.0, 0.0, 1e-12).unwrap().value;
        assert!((z - 1.0).abs() < 1e-10);
        let z = quad::integrate(|x| ln_beta_pdf(x, 2.0, 3.0).exp(), 0.0, 1.0, 0.0, 1e-12).unwrap().value;
        assert!((z - 1.0).abs() < 1e-10);
        let p = GigParams::new(0.7, 2.0, 3.0).unwrap();
        let z = quad::integrate_to_inf(|x| p.ln_pdf(x).unwrap().exp(), 0.0, 0.0, 1e-11).unwrap().value;
        assert!((z - 1.0).abs() < 1e-9);
    }

    #[test]
    fn seeded_streams_repeat() {
        let p = GigParams::new(0.2, 0.3, 0.4).unwrap();
        let a: Vec<f64> = {
            let mut r = rng(9);
            (0..100).map(|_| gig(p, &mut r).unwrap()).collect()
        };
        let b: Vec<f64> = {
            let mut r = rng(9);
            (0..100).map(|_| gig(p, &mut r).unwrap()).collect()
        };
        assert_eq!(a, b);
    }
}
