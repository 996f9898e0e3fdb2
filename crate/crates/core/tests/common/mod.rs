#![allow(dead_code)]

use msvar::distributions::RngStream;
use msvar::model::{ModelDims, MsVarModel, Observations};
use msvar::posterior::exact_mixture_logdensity;
use msvar::priors::NiwPrior;
use msvar::regimes::DirichletPriorSet;
use nalgebra::{DMatrix, DVector};

/// Two-regime univariate AR(1) with intercept and distinct prior means.
pub fn tiny_model() -> MsVarModel {
    let lam = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.25]);
    let p1 = NiwPrior::new(
        DMatrix::from_row_slice(1, 2, &[1.0, 0.3]),
        lam.clone(),
        4.0,
        DMatrix::from_element(1, 1, 0.5),
    )
    .unwrap();
    let p2 = NiwPrior::new(
        DMatrix::from_row_slice(1, 2, &[-1.0, 0.5]),
        lam,
        5.0,
        DMatrix::from_element(1, 1, 1.5),
    )
    .unwrap();
    MsVarModel::new(
        ModelDims::new(1, 1, 1).unwrap(),
        vec![p1, p2],
        DirichletPriorSet::sticky(2, 3.0, 1.0).unwrap(),
    )
    .unwrap()
}

pub fn scalar_series(values: &[f64]) -> Vec<DVector<f64>> {
    values
        .iter()
        .map(|&v| DVector::from_element(1, v))
        .collect()
}

/// Exact one-step predictive density of a univariate intercept-AR(1) model.
pub fn exact_predictive(model: &MsVarModel, series: &[DVector<f64>], y_next: f64) -> f64 {
    let obs = Observations::from_series_with_intercept(series, 1).unwrap();
    let mut extended = series.to_vec();
    extended.push(DVector::from_element(1, y_next));
    let obs_ext = Observations::from_series_with_intercept(&extended, 1).unwrap();
    let a = exact_mixture_logdensity(&obs_ext, &model.priors, &model.dirichlet).unwrap();
    let b = exact_mixture_logdensity(&obs, &model.priors, &model.dirichlet).unwrap();
    (a - b).exp()
}

/// Gaussian kernel density estimate with Silverman's bandwidth.
pub fn kde(samples: &[f64], grid: &[f64]) -> Vec<f64> {
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = sorted[(0.75 * m) as usize] - sorted[(0.25 * m) as usize];
    let h = 0.9 * sd.min(iqr / 1.34) * m.powf(-0.2);
    let norm = 1.0 / (m * h * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|&g| {
            samples
                .iter()
                .map(|&s| (-0.5 * ((g - s) / h).powi(2)).exp())
                .sum::<f64>()
                * norm
        })
        .collect()
}

pub fn random_spd(n: usize, rng: &mut RngStream, ridge: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.standard_normal());
    &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * ridge
}
