//! Normal-Inverse-Wishart priors and their Minnesota construction from
//! dummy observations.

use nalgebra::{DMatrix, DVector};

use crate::distributions::NiwParams;
use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;

/// `Σ ~ IW(ν₀, V₀)` and `vec Π | Σ ~ N(vec Π₀, Λ₀ ⊗ Σ)`.
#[derive(Debug, Clone)]
pub struct NiwPrior {
    pi0: DMatrix<f64>,
    lambda0: SpdMatrix,
    lambda0_inv: SpdMatrix,
    nu0: f64,
    v0: SpdMatrix,
    // Π₀ Λ₀⁻¹ and Π₀ Λ₀⁻¹ Π₀'
    pi0_lambda_inv: DMatrix<f64>,
    pi0_lambda_inv_pi0: DMatrix<f64>,
}

impl NiwPrior {
    pub fn new(
        pi0: DMatrix<f64>,
        lambda0: DMatrix<f64>,
        nu0: f64,
        v0: DMatrix<f64>,
    ) -> Result<Self> {
        let lambda0 = SpdMatrix::new(lambda0)?;
        let v0 = SpdMatrix::new(v0)?;
        let (n, d) = (v0.dim(), lambda0.dim());
        if pi0.nrows() != n || pi0.ncols() != d {
            return Err(Error::Dimension(format!(
                "prior mean is {}x{}, expected {n}x{d}",
                pi0.nrows(),
                pi0.ncols()
            )));
        }
        if !(nu0 > n as f64 - 1.0) {
            return Err(Error::DegreesOfFreedom {
                dof: nu0,
                bound: n as f64 - 1.0,
            });
        }
        let lambda0_inv = SpdMatrix::from_nearly_symmetric(lambda0.inverse())?;
        let pi0_lambda_inv = &pi0 * lambda0_inv.matrix();
        let mut pi0_lambda_inv_pi0 = &pi0_lambda_inv * pi0.transpose();
        crate::linalg::symmetrize(&mut pi0_lambda_inv_pi0);
        Ok(Self {
            pi0,
            lambda0,
            lambda0_inv,
            nu0,
            v0,
            pi0_lambda_inv,
            pi0_lambda_inv_pi0,
        })
    }

    pub fn n(&self) -> usize {
        self.v0.dim()
    }

    pub fn d(&self) -> usize {
        self.lambda0.dim()
    }

    /// Prior mean as an `n x d` matrix.
    pub fn pi0(&self) -> &DMatrix<f64> {
        &self.pi0
    }

    /// Prior mean of `vec Π` (column-major).
    pub fn pi0_vec(&self) -> DVector<f64> {
        crate::linalg::vec_of(&self.pi0)
    }

    pub fn lambda0(&self) -> &SpdMatrix {
        &self.lambda0
    }

    pub fn lambda0_inv(&self) -> &SpdMatrix {
        &self.lambda0_inv
    }

    pub fn nu0(&self) -> f64 {
        self.nu0
    }

    pub fn v0(&self) -> &SpdMatrix {
        &self.v0
    }

    pub(crate) fn pi0_lambda_inv(&self) -> &DMatrix<f64> {
        &self.pi0_lambda_inv
    }

    pub(crate) fn pi0_lambda_inv_pi0(&self) -> &DMatrix<f64> {
        &self.pi0_lambda_inv_pi0
    }

    pub fn niw(&self) -> NiwParams {
        NiwParams {
            mean: self.pi0.clone(),
            col_cov: self.lambda0.clone(),
            dof: self.nu0,
            scale: self.v0.clone(),
        }
    }
}

/// Minnesota hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MinnesotaConfig {
    /// Prior mean of the own first lag, one entry per variable.
    pub phi: Vec<f64>,
    /// Tightness on the exogenous block.
    pub eps: f64,
    /// Overall tightness on the lag coefficients.
    pub lambda1: f64,
    /// Lag decay.
    pub lambda2: f64,
    /// Per-variable scale.
    pub tau: Vec<f64>,
    pub p: usize,
    pub l: usize,
    /// Prior mean of the intercept (first exogenous column); zero if absent.
    pub intercept_mean: Option<Vec<f64>>,
}

impl MinnesotaConfig {
    pub fn n(&self) -> usize {
        self.phi.len()
    }

    pub fn d(&self) -> usize {
        self.l + self.n() * self.p
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::InvalidInput(
                "phi must have one entry per variable".into(),
            ));
        }
        if self.tau.len() != n {
            return Err(Error::Dimension(format!(
                "tau has {} entries, expected {n}",
                self.tau.len()
            )));
        }
        if let Some(c) = &self.intercept_mean {
            if c.len() != n {
                return Err(Error::Dimension(format!(
                    "intercept mean has {} entries, expected {n}",
                    c.len()
                )));
            }
            if self.l == 0 {
                return Err(Error::InvalidInput(
                    "intercept mean given without exogenous block".into(),
                ));
            }
        }
        if self.l + self.p == 0 {
            return Err(Error::Domain("design must contain a regressor".into()));
        }
        for (name, v) in [("eps", self.eps), ("lambda1", self.lambda1)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.lambda2.is_finite() {
            return Err(Error::Domain("lambda2 must be finite".into()));
        }
        if self.tau.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(Error::Domain("tau entries must be positive".into()));
        }
        Ok(())
    }

    fn lag_scale(&self, lag: usize, var: usize) -> f64 {
        self.lambda1 * (lag as f64).powf(self.lambda2) * self.tau[var]
    }
}

/// Dummy observations `ŷ` (`n x d`) and `Ŷ` (`d x d`).
#[derive(Debug, Clone)]
pub struct DummyObservations {
    pub yhat: DMatrix<f64>,
    pub design: DMatrix<f64>,
}

pub fn build_dummies(cfg: &MinnesotaConfig) -> Result<DummyObservations> {
    cfg.validate()?;
    let (n, l, p, d) = (cfg.n(), cfg.l, cfg.p, cfg.d());
    let mut yhat = DMatrix::zeros(n, d);
    if let Some(c) = &cfg.intercept_mean {
        for i in 0..n {
            yhat[(i, 0)] = cfg.eps * c[i];
        }
    }
    if p > 0 {
        for i in 0..n {
            yhat[(i, l + i)] = cfg.lambda1 * cfg.phi[i] * cfg.tau[i];
        }
    }
    let mut design = DMatrix::zeros(d, d);
    for k in 0..l {
        design[(k, k)] = cfg.eps;
    }
    for lag in 1..=p {
        for j in 0..n {
            let idx = l + (lag - 1) * n + j;
            design[(idx, idx)] = cfg.lag_scale(lag, j);
        }
    }
    Ok(DummyObservations { yhat, design })
}

/// `Λ₀ = (Ŷ Ŷ')⁻¹` and `Π₀ = ŷ Ŷ' Λ₀`.
pub fn dummies_to_niw(dummies: &DummyObservations, nu0: f64, v0: DMatrix<f64>) -> Result<NiwPrior> {
    let yy = &dummies.design * dummies.design.transpose();
    let gram = SpdMatrix::new(yy)
        .map_err(|_| Error::RankDeficient("dummy design has deficient row rank".into()))?;
    let lambda0 = gram.inverse();
    let pi0 = &dummies.yhat * dummies.design.transpose() * &lambda0;
    NiwPrior::new(pi0, lambda0, nu0, v0)
}

pub fn minnesota_prior(cfg: &MinnesotaConfig, nu0: f64, v0: DMatrix<f64>) -> Result<NiwPrior> {
    dummies_to_niw(&build_dummies(cfg)?, nu0, v0)
}

/// Largest deviation between the implied prior moments of `Π` and the
/// Minnesota targets, given residual standard deviations `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub max_violation: f64,
    /// `(row, column, kind)` of the largest deviation.
    pub worst: (usize, usize, MomentKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    Mean,
    Variance,
    Covariance,
}

pub fn validate_moments(
    prior: &NiwPrior,
    cfg: &MinnesotaConfig,
    sigma: &[f64],
) -> Result<MomentReport> {
    cfg.validate()?;
    let (n, l, d) = (cfg.n(), cfg.l, cfg.d());
    if prior.n() != n || prior.d() != d || sigma.len() != n {
        return Err(Error::Dimension("prior, config and sigma disagree".into()));
    }
    let lam = prior.lambda0().matrix();
    let mut report = MomentReport {
        max_violation: 0.0,
        worst: (0, 0, MomentKind::Mean),
    };
    let mut note = |v: f64, at: (usize, usize, MomentKind)| {
        if v > report.max_violation || v.is_nan() {
            report.max_violation = v;
            report.worst = at;
        }
    };
    for i in 0..n {
        let s2 = sigma[i] * sigma[i];
        for j in 0..d {
            let (mean, var) = if j < l {
                let c = match (&cfg.intercept_mean, j) {
                    (Some(c), 0) => c[i],
                    _ => 0.0,
                };
                (c, s2 / (cfg.eps * cfg.eps))
            } else {
                let lag = (j - l) / n + 1;
                let var_idx = (j - l) % n;
                let mean = if lag == 1 && var_idx == i {
                    cfg.phi[i]
                } else {
                    0.0
                };
                (mean, s2 / cfg.lag_scale(lag, var_idx).powi(2))
            };
            note((prior.pi0()[(i, j)] - mean).abs(), (i, j, MomentKind::Mean));
            note((lam[(j, j)] * s2 - var).abs(), (i, j, MomentKind::Variance));
            for k in 0..d {
                if k != j {
                    note((lam[(j, k)] * s2).abs(), (i, j, MomentKind::Covariance));
                }
            }
        }
    }
    Ok(report)
}
