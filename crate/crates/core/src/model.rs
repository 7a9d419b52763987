//! VAR dimensions, design matrices, companion-form stability and the
//! unitriangular covariance factor.

use crate::data::Dataset;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, Schur};
use serde::{Deserialize, Serialize};

/// Dimensions of a VAR(p) with M series and optional intercept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarSpec {
    pub m: usize,
    pub p: usize,
    pub intercept: bool,
}

impl VarSpec {
    pub fn new(m: usize, p: usize, intercept: bool) -> Result<Self> {
        if m == 0 || p == 0 {
            return Err(Error::InvalidParameter(format!("VarSpec needs m >= 1 and p >= 1 (got m={m}, p={p})")));
        }
        Ok(VarSpec { m, p, intercept })
    }

    /// Number of regressors per equation.
    pub fn k(&self) -> usize {
        self.m * self.p + usize::from(self.intercept)
    }

    /// Number of coefficients in vec(Phi).
    pub fn n(&self) -> usize {
        self.k() * self.m
    }

    /// Number of free elements in the covariance factor.
    pub fn n_l(&self) -> usize {
        self.m * (self.m - 1) / 2
    }

    /// Position of Phi[(row, eq)] in vec(Phi) (column-major).
    pub fn vec_index(&self, row: usize, eq: usize) -> usize {
        eq * self.k() + row
    }

    /// Lag (1-based) and variable of a non-intercept row of Phi.
    pub fn row_lag_var(&self, row: usize) -> Option<(usize, usize)> {
        if row >= self.m * self.p {
            None
        } else {
            Some((row / self.m + 1, row % self.m))
        }
    }
}

/// Stacked regression Yt = X Phi + E.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

/// Row t of X is (y'_{t-1}, ..., y'_{t-p}[, 1]).
pub fn build_design(ds: &Dataset, spec: &VarSpec) -> Result<Design> {
    design_from_matrix(&ds.y, spec)
}

pub fn design_from_matrix(y: &DMatrix<f64>, spec: &VarSpec) -> Result<Design> {
    let (t, m) = y.shape();
    if m != spec.m {
        return Err(Error::Dimension(format!("data has {m} series, spec expects {}", spec.m)));
    }
    if t <= spec.p {
        return Err(Error::Dimension(format!("T = {t} must exceed p = {}", spec.p)));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design input".into()));
    }
    let rows = t - spec.p;
    let k = spec.k();
    let mut x = DMatrix::zeros(rows, k);
    for r in 0..rows {
        let tt = r + spec.p;
        for lag in 1..=spec.p {
            for j in 0..m {
                x[(r, (lag - 1) * m + j)] = y[(tt - lag, j)];
            }
        }
        if spec.intercept {
            x[(r, k - 1)] = 1.0;
        }
    }
    let yt = y.rows(spec.p, rows).into_owned();
    Ok(Design { x, y: yt })
}

/// Regressor vector for predicting the observation after the last row of `y`.
pub fn next_regressor(y: &DMatrix<f64>, spec: &VarSpec) -> Result<DVector<f64>> {
    let t = y.nrows();
    if t < spec.p {
        return Err(Error::Dimension(format!("need {} observations for the next regressor, have {t}", spec.p)));
    }
    let mut x = DVector::zeros(spec.k());
    for lag in 1..=spec.p {
        for j in 0..spec.m {
            x[(lag - 1) * spec.m + j] = y[(t - lag, j)];
        }
    }
    if spec.intercept {
        x[spec.k() - 1] = 1.0;
    }
    Ok(x)
}

/// Companion matrix (Mp x Mp) of the lag part of Phi.
pub fn companion(phi: &DMatrix<f64>, spec: &VarSpec) -> Result<DMatrix<f64>> {
    check_phi(phi, spec)?;
    let (m, p) = (spec.m, spec.p);
    let mp = m * p;
    let mut c = DMatrix::zeros(mp, mp);
    for lag in 0..p {
        for i in 0..m {
            for j in 0..m {
                // y_{t,i} = sum_j A_lag[j, i] y_{t-lag, j}
                c[(i, lag * m + j)] = phi[(lag * m + j, i)];
            }
        }
    }
    for r in m..mp {
        c[(r, r - m)] = 1.0;
    }
    Ok(c)
}

fn check_phi(phi: &DMatrix<f64>, spec: &VarSpec) -> Result<()> {
    if phi.nrows() != spec.k() || phi.ncols() != spec.m {
        return Err(Error::Dimension(format!(
            "Phi is {}x{}, expected {}x{}",
            phi.nrows(),
            phi.ncols(),
            spec.k(),
            spec.m
        )));
    }
    Ok(())
}

/// Largest eigenvalue modulus of the companion matrix.
pub fn spectral_radius(phi: &DMatrix<f64>, spec: &VarSpec) -> Result<f64> {
    let c = companion(phi, spec)?;
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("companion matrix".into()));
    }
    let schur = Schur::try_new(c, 1e-14, 10_000).ok_or(Error::EigenNonConvergence)?;
    let ev = schur.complex_eigenvalues();
    Ok(ev.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// True iff no companion eigenvalue has modulus greater than one. With `strict`,
/// the modulus must be below 1 - 1e-8.
pub fn companion_stable(phi: &DMatrix<f64>, spec: &VarSpec, strict: bool) -> Result<bool> {
    let r = spectral_radius(phi, spec)?;
    Ok(if strict { r < 1.0 - 1e-8 } else { r <= 1.0 })
}

/// Index of the free element L[(i, j)], i < j, in the packed vector.
pub fn l_index(i: usize, j: usize) -> usize {
    debug_assert!(i < j);
    j * (j - 1) / 2 + i
}

/// Upper unitriangular factor from its packed free elements.
pub fn l_matrix(l: &[f64], m: usize) -> Result<DMatrix<f64>> {
    if l.len() != m * (m - 1) / 2 {
        return Err(Error::Dimension(format!("{} factor elements for M = {m}", l.len())));
    }
    let mut mat = DMatrix::identity(m, m);
    for j in 1..m {
        for i in 0..j {
            mat[(i, j)] = l[l_index(i, j)];
        }
    }
    Ok(mat)
}

/// Phi = B L^{-1}.
pub fn reduced_from_structural(b: &DMatrix<f64>, l: &[f64]) -> Result<DMatrix<f64>> {
    let m = b.ncols();
    let lm = l_matrix(l, m)?;
    // Phi L = B  <=>  L' Phi' = B'
    let phit = lm
        .transpose()
        .solve_lower_triangular(&b.transpose())
        .ok_or_else(|| Error::Singular("unitriangular factor".into()))?;
    Ok(phit.transpose())
}

/// Lower-triangular Cholesky factor of Sigma = L'^{-1} diag(exp(h)) L^{-1},
/// which is L'^{-1} diag(exp(h/2)).
pub fn sigma_chol(l: &[f64], h: &[f64]) -> Result<DMatrix<f64>> {
    let m = h.len();
    let lm = l_matrix(l, m)?;
    let inv = lm
        .transpose()
        .solve_lower_triangular(&DMatrix::identity(m, m))
        .ok_or_else(|| Error::Singular("unitriangular factor".into()))?;
    let mut c = inv;
    for j in 0..m {
        let s = (0.5 * h[j]).exp();
        for i in 0..m {
            c[(i, j)] *= s;
        }
    }
    Ok(c)
}

/// Sigma = L'^{-1} diag(exp(h)) L^{-1}.
pub fn sigma(l: &[f64], h: &[f64]) -> Result<DMatrix<f64>> {
    let c = sigma_chol(l, h)?;
    Ok(&c * c.transpose())
}
