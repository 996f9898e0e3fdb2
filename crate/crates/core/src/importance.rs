//! Tail probabilities `Pr(z' y_{t+u} > x)` of the posterior predictive by
//! exponentially tilted importance sampling.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::distributions::{sample_matrix_normal, sample_mvn, RngStream};
use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::model::{build_design, MsVarModel, Observations};
use crate::posterior::PosteriorStats;
use crate::regimes::{dedup_partition, RegimeClass};
use crate::sampler::{gibbs_sp, ForecastContext, GibbsSettings, ModelDraw};

const TILT_STREAM_OFFSET: u64 = 1 << 40;

/// Event `z' y_{t+u} > x`, with `u` counted from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltSpec {
    pub u: usize,
    pub z: DVector<f64>,
    pub x: f64,
}

/// Conditional law of the coefficients used for tilting: mean `M`, column
/// covariance (`Λ_{0|t}⁻¹` for observed regimes, `Λ₀` for new ones) and the
/// drawn `Σ`.
#[derive(Debug, Clone)]
pub struct TiltCoefficients {
    pub class: RegimeClass,
    pub mean: DMatrix<f64>,
    pub col_cov: SpdMatrix,
    pub sigma: SpdMatrix,
}

impl TiltCoefficients {
    /// `(z' M 𝖸, (1 + 𝖸' col_cov 𝖸) z' Σ z)`.
    fn moments(&self, z: &DVector<f64>, design: &DVector<f64>) -> (f64, f64) {
        let m = z.dot(&(&self.mean * design));
        let v = (1.0 + self.col_cov.quad_form(design)) * self.sigma.quad_form(z);
        (m, v)
    }
}

/// Tilt that centres `z' y` at `x`, floored at zero.
pub fn optimal_tilt(
    x: f64,
    z: &DVector<f64>,
    design: &DVector<f64>,
    coefs: &TiltCoefficients,
) -> Result<f64> {
    let (m, v) = coefs.moments(z, design);
    if !(v > 0.0) {
        return Err(Error::Domain(
            "tilted direction has zero predictive variance".into(),
        ));
    }
    Ok(((x - m) / v).max(0.0))
}

/// Log moment generating function `θ z'M𝖸 + θ² (1 + 𝖸' col_cov 𝖸) z'Σz / 2`.
pub fn psi(theta: f64, z: &DVector<f64>, design: &DVector<f64>, coefs: &TiltCoefficients) -> f64 {
    let (m, v) = coefs.moments(z, design);
    theta * m + 0.5 * theta * theta * v
}

/// One tilted draw of `X = z' y`; returns `(X, L)` with `L = exp(ψ - θ X)`.
pub fn tilted_draw(
    theta: f64,
    z: &DVector<f64>,
    design: &DVector<f64>,
    coefs: &TiltCoefficients,
    rng: &mut RngStream,
) -> (f64, f64) {
    let sz = coefs.sigma.matrix() * z;
    let shift = &sz * (coefs.col_cov.matrix() * design).transpose() * theta;
    let l_sigma = coefs.sigma.chol_l();
    let coef = sample_matrix_normal(
        &(&coefs.mean + shift),
        &l_sigma,
        &coefs.col_cov.chol_l(),
        rng,
    );
    let y = sample_mvn(&(&coef * design + &sz * theta), &l_sigma, rng);
    let big_x = z.dot(&y);
    (big_x, (psi(theta, z, design, coefs) - theta * big_x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsEstimate {
    pub u: usize,
    pub x: f64,
    pub p_hat: f64,
    pub std_error: f64,
    pub ess: f64,
    /// `p̂(1 - p̂)` over the sample variance of the weighted indicators.
    pub variance_reduction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveEstimate {
    pub u: usize,
    pub x: f64,
    pub p_hat: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsSettings {
    pub gibbs: GibbsSettings,
    /// Forces `θ = 0`, which reproduces plain Monte Carlo.
    pub zero_tilt: bool,
}

fn validate_specs(specs: &[TiltSpec], horizon: usize, n: usize) -> Result<()> {
    for s in specs {
        if s.u == 0 || s.u > horizon {
            return Err(Error::InvalidInput(format!(
                "tilt step {} outside 1..={horizon}",
                s.u
            )));
        }
        if s.z.len() != n {
            return Err(Error::Dimension(format!(
                "tilt direction has {} entries, expected {n}",
                s.z.len()
            )));
        }
        if s.z.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidInput("tilt direction is zero".into()));
        }
    }
    Ok(())
}

fn design_at(ctx: &ForecastContext<'_>, y: &[DVector<f64>], u: usize) -> DVector<f64> {
    let p = ctx.model.dims.p;
    let mut series: Vec<&DVector<f64>> = ctx.history[ctx.history.len() - p..].iter().collect();
    series.extend(y[..u - 1].iter());
    let m = series.len();
    let lags: Vec<&DVector<f64>> = (1..=p).map(|k| series[m - k]).collect();
    build_design(&ctx.exog_future[u - 1], &lags)
}

fn coefficients_at(
    ctx: &ForecastContext<'_>,
    draw: &ModelDraw,
    stats: &PosteriorStats,
    u: usize,
) -> Result<TiltCoefficients> {
    let t = ctx.obs.len();
    let s = draw.path.states()[t + u - 1];
    let partition = dedup_partition(&draw.path, t)?;
    let sigma = draw.coefficients[&s].sigma.clone();
    match partition.class_of(s) {
        Some(RegimeClass::Gamma) => Ok(TiltCoefficients {
            class: RegimeClass::Gamma,
            mean: stats.regime(s).coef_mean().clone(),
            col_cov: SpdMatrix::from_nearly_symmetric(stats.regime(s).lambda_post().inverse())?,
            sigma,
        }),
        _ => Ok(TiltCoefficients {
            class: RegimeClass::Delta,
            mean: ctx.model.priors[s].pi0().clone(),
            col_cov: ctx.model.priors[s].lambda0().clone(),
            sigma,
        }),
    }
}

/// Per tilt spec, the `(X, L)` pairs of every posterior draw.
#[allow(clippy::too_many_arguments)]
pub fn is_samples(
    model: &MsVarModel,
    obs: &Observations,
    history: &[DVector<f64>],
    exog_future: &[DVector<f64>],
    specs: &[TiltSpec],
    settings: &IsSettings,
    seed: u64,
) -> Result<Vec<Vec<(f64, f64)>>> {
    let horizon = specs.iter().map(|s| s.u).max().unwrap_or(0);
    let ctx = ForecastContext {
        model,
        obs,
        history,
        exog_future,
        horizon,
    };
    ctx.validate()?;
    validate_specs(specs, horizon, model.dims.n)?;
    let gibbs = gibbs_sp(model, obs, &settings.gibbs, &mut RngStream::new(seed, 0))?;
    let per_draw = gibbs
        .draws
        .par_iter()
        .enumerate()
        .map(|(l, gd)| {
            let mut rng = RngStream::new(seed, l as u64 + 1);
            let (draw, stats, y) = ctx.forecast_one(gd, &mut rng)?;
            let mut tilt_rng = RngStream::new(seed, TILT_STREAM_OFFSET + l as u64);
            specs
                .iter()
                .map(|spec| {
                    let design = design_at(&ctx, &y, spec.u);
                    let coefs = coefficients_at(&ctx, &draw, &stats, spec.u)?;
                    let theta = if settings.zero_tilt {
                        0.0
                    } else {
                        optimal_tilt(spec.x, &spec.z, &design, &coefs)?
                    };
                    Ok(tilted_draw(theta, &spec.z, &design, &coefs, &mut tilt_rng))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..specs.len())
        .map(|k| per_draw.iter().map(|row| row[k]).collect())
        .collect())
}

fn summarize(spec: &TiltSpec, samples: &[(f64, f64)]) -> IsEstimate {
    let m = samples.len() as f64;
    let w: Vec<f64> = samples
        .iter()
        .map(|&(x, l)| if x > spec.x { l } else { 0.0 })
        .collect();
    let p_hat = w.iter().sum::<f64>() / m;
    let var = w.iter().map(|v| (v - p_hat).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    let sum_l: f64 = samples.iter().map(|s| s.1).sum();
    let sum_l2: f64 = samples.iter().map(|s| s.1 * s.1).sum();
    IsEstimate {
        u: spec.u,
        x: spec.x,
        p_hat,
        std_error: (var / m).sqrt(),
        ess: sum_l * sum_l / sum_l2,
        variance_reduction: p_hat * (1.0 - p_hat) / var,
    }
}

/// Importance sampling estimates of `Pr(z' y_{t+u} > x)` for each spec.
pub fn is_tail_probability(
    model: &MsVarModel,
    obs: &Observations,
    history: &[DVector<f64>],
    exog_future: &[DVector<f64>],
    specs: &[TiltSpec],
    settings: &IsSettings,
    seed: u64,
) -> Result<Vec<IsEstimate>> {
    let samples = is_samples(model, obs, history, exog_future, specs, settings, seed)?;
    Ok(specs
        .iter()
        .zip(&samples)
        .map(|(s, x)| summarize(s, x))
        .collect())
}

/// Untilted draws of `X = z' y_{t+u}` on the same random streams as
/// [`is_samples`].
pub fn naive_samples(
    model: &MsVarModel,
    obs: &Observations,
    history: &[DVector<f64>],
    exog_future: &[DVector<f64>],
    specs: &[TiltSpec],
    gibbs_settings: &GibbsSettings,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let horizon = specs.iter().map(|s| s.u).max().unwrap_or(0);
    let ctx = ForecastContext {
        model,
        obs,
        history,
        exog_future,
        horizon,
    };
    ctx.validate()?;
    validate_specs(specs, horizon, model.dims.n)?;
    let gibbs = gibbs_sp(model, obs, gibbs_settings, &mut RngStream::new(seed, 0))?;
    let per_draw = gibbs
        .draws
        .par_iter()
        .enumerate()
        .map(|(l, gd)| {
            let mut rng = RngStream::new(seed, l as u64 + 1);
            let (draw, stats, y) = ctx.forecast_one(gd, &mut rng)?;
            let mut stage_rng = RngStream::new(seed, TILT_STREAM_OFFSET + l as u64);
            specs
                .iter()
                .map(|spec| {
                    let design = design_at(&ctx, &y, spec.u);
                    let c = coefficients_at(&ctx, &draw, &stats, spec.u)?;
                    let l_sigma = c.sigma.chol_l();
                    let coef = sample_matrix_normal(
                        &c.mean,
                        &l_sigma,
                        &c.col_cov.chol_l(),
                        &mut stage_rng,
                    );
                    let y_u = sample_mvn(&(&coef * &design), &l_sigma, &mut stage_rng);
                    Ok(spec.z.dot(&y_u))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..specs.len())
        .map(|k| per_draw.iter().map(|row| row[k]).collect())
        .collect())
}

/// Plain Monte Carlo frequencies of the same events.
pub fn naive_tail_probability(
    model: &MsVarModel,
    obs: &Observations,
    history: &[DVector<f64>],
    exog_future: &[DVector<f64>],
    specs: &[TiltSpec],
    gibbs_settings: &GibbsSettings,
    seed: u64,
) -> Result<Vec<NaiveEstimate>> {
    let samples = naive_samples(
        model,
        obs,
        history,
        exog_future,
        specs,
        gibbs_settings,
        seed,
    )?;
    Ok(specs
        .iter()
        .zip(&samples)
        .map(|(s, xs)| {
            let m = xs.len() as f64;
            let p_hat = xs.iter().filter(|&&v| v > s.x).count() as f64 / m;
            NaiveEstimate {
                u: s.u,
                x: s.x,
                p_hat,
                std_error: (p_hat * (1.0 - p_hat) / m).sqrt(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coefs() -> TiltCoefficients {
        TiltCoefficients {
            class: RegimeClass::Gamma,
            mean: DMatrix::from_row_slice(2, 2, &[0.1, 0.5, -0.2, 0.3]),
            col_cov: SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.1, 0.2])).unwrap(),
            sigma: SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5])).unwrap(),
        }
    }

    #[test]
    fn tilt_centres_the_event_threshold() {
        // under the tilted law E[X] = m + θ v, which the optimal θ sets to x
        let c = coefs();
        let z = DVector::from_vec(vec![1.0, 1.0]);
        let design = DVector::from_vec(vec![1.0, 0.7]);
        let (m, v) = c.moments(&z, &design);
        let x = m + 3.0 * v.sqrt();
        let theta = optimal_tilt(x, &z, &design, &c).unwrap();
        assert!((m + theta * v - x).abs() < 1e-12);
        assert_eq!(optimal_tilt(m - 1.0, &z, &design, &c).unwrap(), 0.0);
        let mut rng = RngStream::new(4, 0);
        let k = 20_000;
        let mean: f64 = (0..k)
            .map(|_| tilted_draw(theta, &z, &design, &c, &mut rng).0)
            .sum::<f64>()
            / k as f64;
        assert!((mean - x).abs() < 0.05 * v.sqrt());
    }

    #[test]
    fn weights_integrate_to_one() {
        // E_tilted[L] = 1
        let c = coefs();
        let z = DVector::from_vec(vec![0.5, -1.0]);
        let design = DVector::from_vec(vec![1.0, -0.4]);
        let mut rng = RngStream::new(5, 0);
        let k = 50_000;
        let mean: f64 = (0..k)
            .map(|_| tilted_draw(0.8, &z, &design, &c, &mut rng).1)
            .sum::<f64>()
            / k as f64;
        assert!((mean - 1.0).abs() < 0.03, "{mean}");
    }

    #[test]
    fn zero_tilt_gives_unit_weights() {
        let c = coefs();
        let z = DVector::from_vec(vec![1.0, 0.0]);
        let design = DVector::from_vec(vec![1.0, 0.2]);
        let mut rng = RngStream::new(6, 0);
        assert_eq!(tilted_draw(0.0, &z, &design, &c, &mut rng).1, 1.0);
    }
}
