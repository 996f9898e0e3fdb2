//! Model dimensions, observation containers and design vectors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::priors::NiwPrior;
use crate::regimes::DirichletPriorSet;

/// `n` endogenous variables, `l` exogenous regressors and `p` lags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub n: usize,
    pub l: usize,
    pub p: usize,
}

impl ModelDims {
    pub fn new(n: usize, l: usize, p: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain(
                "at least one endogenous variable is required".into(),
            ));
        }
        if l + p == 0 {
            return Err(Error::Domain("design must contain a regressor".into()));
        }
        Ok(Self { n, l, p })
    }

    /// Length of the design vector, `l + n p`.
    pub fn d(&self) -> usize {
        self.l + self.n * self.p
    }
}

/// Stacks `(ψ', y_{t-1}', ..., y_{t-p}')'`; `lags[0]` is the most recent.
pub fn build_design(psi: &DVector<f64>, lags: &[&DVector<f64>]) -> DVector<f64> {
    let n = lags.first().map_or(0, |v| v.len());
    let mut out = DVector::zeros(psi.len() + n * lags.len());
    out.rows_mut(0, psi.len()).copy_from(psi);
    for (k, lag) in lags.iter().enumerate() {
        out.rows_mut(psi.len() + k * n, n).copy_from(lag);
    }
    out
}

/// Observations `y_u` paired with their design vectors.
#[derive(Debug, Clone, Default)]
pub struct Observations {
    pub y: Vec<DVector<f64>>,
    pub design: Vec<DVector<f64>>,
}

impl Observations {
    pub fn new(y: Vec<DVector<f64>>, design: Vec<DVector<f64>>) -> Result<Self> {
        if y.len() != design.len() {
            return Err(Error::Dimension(format!(
                "{} observations but {} design rows",
                y.len(),
                design.len()
            )));
        }
        if let Some(n) = y.first().map(|v| v.len()) {
            if y.iter().any(|v| v.len() != n) {
                return Err(Error::Dimension("observations of unequal length".into()));
            }
        }
        if let Some(d) = design.first().map(|v| v.len()) {
            if design.iter().any(|v| v.len() != d) {
                return Err(Error::Dimension("design rows of unequal length".into()));
            }
        }
        Ok(Self { y, design })
    }

    /// Builds observations from a series whose first `p` entries are
    /// pre-sample values. `exog[u]` accompanies `series[u]`.
    pub fn from_series(series: &[DVector<f64>], exog: &[DVector<f64>], p: usize) -> Result<Self> {
        if series.len() <= p {
            return Err(Error::InvalidInput(format!(
                "series of length {} leaves no observations after {p} lags",
                series.len()
            )));
        }
        if exog.len() != series.len() {
            return Err(Error::Dimension(
                "exogenous rows must match the series length".into(),
            ));
        }
        let mut y = Vec::with_capacity(series.len() - p);
        let mut design = Vec::with_capacity(series.len() - p);
        for u in p..series.len() {
            let lags: Vec<&DVector<f64>> = (1..=p).map(|k| &series[u - k]).collect();
            design.push(build_design(&exog[u], &lags));
            y.push(series[u].clone());
        }
        Self::new(y, design)
    }

    /// Intercept-only exogenous block.
    pub fn from_series_with_intercept(series: &[DVector<f64>], p: usize) -> Result<Self> {
        let exog = vec![DVector::from_element(1, 1.0); series.len()];
        Self::from_series(series, &exog, p)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn prefix(&self, t: usize) -> Self {
        Self {
            y: self.y[..t].to_vec(),
            design: self.design[..t].to_vec(),
        }
    }

    pub fn suffix(&self, t: usize) -> Self {
        Self {
            y: self.y[t..].to_vec(),
            design: self.design[t..].to_vec(),
        }
    }

    /// Observations as columns: `(n x q, d x q)` for the chosen times.
    pub fn columns(&self, times: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.y.first().map_or(0, |v| v.len());
        let d = self.design.first().map_or(0, |v| v.len());
        let mut ys = DMatrix::zeros(n, times.len());
        let mut xs = DMatrix::zeros(d, times.len());
        for (k, &u) in times.iter().enumerate() {
            ys.set_column(k, &self.y[u]);
            xs.set_column(k, &self.design[u]);
        }
        (ys, xs)
    }
}

/// A Markov-switching VAR with one Normal-Inverse-Wishart prior per regime
/// and Dirichlet rows on the transition matrix.
#[derive(Debug, Clone)]
pub struct MsVarModel {
    pub dims: ModelDims,
    pub priors: Vec<NiwPrior>,
    pub dirichlet: DirichletPriorSet,
}

impl MsVarModel {
    pub fn new(
        dims: ModelDims,
        priors: Vec<NiwPrior>,
        dirichlet: DirichletPriorSet,
    ) -> Result<Self> {
        if priors.len() != dirichlet.n_regimes() {
            return Err(Error::Dimension(format!(
                "{} regime priors for {} regimes",
                priors.len(),
                dirichlet.n_regimes()
            )));
        }
        for prior in &priors {
            if prior.n() != dims.n || prior.d() != dims.d() {
                return Err(Error::Dimension(format!(
                    "prior is {}x{}, model expects {}x{}",
                    prior.n(),
                    prior.d(),
                    dims.n,
                    dims.d()
                )));
            }
        }
        Ok(Self {
            dims,
            priors,
            dirichlet,
        })
    }

    pub fn n_regimes(&self) -> usize {
        self.dirichlet.n_regimes()
    }
}
