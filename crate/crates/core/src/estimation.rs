//! Maximum likelihood for the Markov-switching mean/variance model
//! `y_u = c_{s_u} + σ_{s_u} ε_u` by expectation-maximization, and summaries
//! of the fitted chain.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::distributions::RngStream;
use crate::error::{Error, Result};
use crate::filter::{hamilton_filter_log, kim_smoother, smoothed_pairs};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
}

impl Default for EmSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 2000,
            restarts: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsArFit {
    /// Regime means, in descending order.
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// `N x N`, rows sum to one.
    pub transition: DMatrix<f64>,
    pub initial: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood at the start of each iteration.
    pub trace: Vec<f64>,
}

fn gaussian_log_eta(y: &[f64], means: &[f64], vars: &[f64]) -> DMatrix<f64> {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    DMatrix::from_fn(y.len(), means.len(), |u, j| {
        -0.5 * (ln2pi + vars[j].ln() + (y[u] - means[j]).powi(2) / vars[j])
    })
}

struct Start {
    means: Vec<f64>,
    vars: Vec<f64>,
    transition: DMatrix<f64>,
    initial: Vec<f64>,
}

fn random_start(y: &[f64], nr: usize, rng: &mut RngStream) -> Start {
    let t = y.len();
    let mean = y.iter().sum::<f64>() / t as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
    let mut means: Vec<f64> = (0..nr)
        .map(|_| y[(rng.uniform() * t as f64) as usize % t])
        .collect();
    for m in means.iter_mut() {
        *m += 0.1 * var.sqrt() * rng.standard_normal();
    }
    let vars = (0..nr).map(|_| var * (0.25 + rng.uniform())).collect();
    let mut transition = DMatrix::from_fn(nr, nr, |_, _| 0.05 + rng.uniform());
    for i in 0..nr {
        transition[(i, i)] += nr as f64;
        let s: f64 = transition.row(i).sum();
        transition.row_mut(i).scale_mut(1.0 / s);
    }
    Start {
        means,
        vars,
        transition,
        initial: vec![1.0 / nr as f64; nr],
    }
}

/// One EM run; `None` if a regime collapses to weight below `1/T`.
fn em_run(
    y: &[f64],
    start: Start,
    settings: &EmSettings,
    var_floor: f64,
) -> Result<Option<MsArFit>> {
    let nr = start.means.len();
    let Start {
        mut means,
        mut vars,
        mut transition,
        mut initial,
    } = start;
    let mut prev = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = Vec::new();
    for it in 0..settings.max_iter {
        iterations = it + 1;
        let out = hamilton_filter_log(&gaussian_log_eta(y, &means, &vars), &transition, &initial)?;
        let loglik = out.loglik;
        trace.push(loglik);
        let sm = kim_smoother(&out, &transition)?;
        let pairs = smoothed_pairs(&out, &sm, &transition);
        for j in 0..nr {
            let w: f64 = sm.smoothed.column(j).sum();
            // average weight below 1/T
            if w < 1.0 {
                return Ok(None);
            }
            let c = sm
                .smoothed
                .column(j)
                .iter()
                .zip(y)
                .map(|(p, v)| p * v)
                .sum::<f64>()
                / w;
            let s2 = sm
                .smoothed
                .column(j)
                .iter()
                .zip(y)
                .map(|(p, v)| p * (v - c).powi(2))
                .sum::<f64>()
                / w;
            means[j] = c;
            vars[j] = s2.max(var_floor);
        }
        let mut counts = DMatrix::<f64>::zeros(nr, nr);
        for pair in &pairs {
            counts += pair;
        }
        for i in 0..nr {
            let s: f64 = counts.row(i).sum();
            if s > 0.0 {
                transition.set_row(i, &(counts.row(i) / s));
            }
        }
        initial = sm.smoothed.row(0).iter().copied().collect();
        if (loglik - prev).abs() <= settings.tol * (1.0 + loglik.abs()) {
            converged = true;
            break;
        }
        prev = loglik;
    }
    let out = hamilton_filter_log(&gaussian_log_eta(y, &means, &vars), &transition, &initial)?;
    Ok(Some(order_regimes(MsArFit {
        means,
        variances: vars,
        transition,
        initial,
        loglik: out.loglik,
        iterations,
        converged,
        trace,
    })))
}

fn order_regimes(fit: MsArFit) -> MsArFit {
    let nr = fit.means.len();
    let mut order: Vec<usize> = (0..nr).collect();
    order.sort_by(|&a, &b| fit.means[b].total_cmp(&fit.means[a]));
    MsArFit {
        means: order.iter().map(|&k| fit.means[k]).collect(),
        variances: order.iter().map(|&k| fit.variances[k]).collect(),
        transition: DMatrix::from_fn(nr, nr, |i, j| fit.transition[(order[i], order[j])]),
        initial: order.iter().map(|&k| fit.initial[k]).collect(),
        ..fit
    }
}

/// Best of `settings.restarts` randomly started EM runs.
pub fn em_fit_msar0(
    y: &[f64],
    n_regimes: usize,
    settings: &EmSettings,
    rng: &mut RngStream,
) -> Result<MsArFit> {
    if n_regimes == 0 {
        return Err(Error::Domain("at least one regime is required".into()));
    }
    if y.len() < 2 * n_regimes {
        return Err(Error::InvalidInput(format!(
            "{} observations are too few for {n_regimes} regimes",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "series contains non-finite values".into(),
        ));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
    if !(var > 0.0) {
        return Err(Error::InvalidInput("series is constant".into()));
    }
    let var_floor = 1e-8 * var;
    // starts are drawn in order so the result does not depend on thread count
    let starts: Vec<Start> = (0..settings.restarts.max(1))
        .map(|_| random_start(y, n_regimes, rng))
        .collect();
    let fits = starts
        .into_par_iter()
        .map(|s| em_run(y, s, settings, var_floor))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<MsArFit> = None;
    for fit in fits.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| fit.loglik > b.loglik) {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| Error::InvalidInput("every EM restart collapsed a regime".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    /// Stationary law `π` with `π' P = π'`.
    pub ergodic: Vec<f64>,
    /// Expected durations `1 / (1 - p_jj)`.
    pub persistence: Vec<f64>,
    /// `Σ_j π_j c_j`.
    pub long_run_mean: f64,
}

/// Stationary law, expected durations and long-run mean. Rows within
/// `row_tol` of summing to one are renormalized first.
pub fn summarize_chain(
    transition: &DMatrix<f64>,
    means: &[f64],
    row_tol: f64,
) -> Result<ChainSummary> {
    let nr = transition.nrows();
    if transition.ncols() != nr || means.len() != nr || nr == 0 {
        return Err(Error::Dimension(
            "transition matrix and means disagree".into(),
        ));
    }
    let mut p = transition.clone();
    for i in 0..nr {
        let s: f64 = p.row(i).sum();
        if (s - 1.0).abs() > row_tol || p.row(i).iter().any(|&v| v < 0.0) {
            return Err(Error::Domain(format!(
                "transition row {} sums to {s}",
                i + 1
            )));
        }
        p.row_mut(i).scale_mut(1.0 / s);
    }
    let mut persistence = Vec::with_capacity(nr);
    for j in 0..nr {
        if p[(j, j)] >= 1.0 {
            return Err(Error::AbsorbingRegime(j + 1));
        }
        persistence.push(1.0 / (1.0 - p[(j, j)]));
    }
    let mut a = DMatrix::<f64>::zeros(nr + 1, nr);
    a.rows_mut(0, nr)
        .copy_from(&(p.transpose() - DMatrix::identity(nr, nr)));
    a.row_mut(nr).fill(1.0);
    let svd = a.clone().svd(true, true);
    let smin = svd.singular_values.min();
    if smin < 1e-10 {
        return Err(Error::NonErgodic(format!(
            "smallest singular value {smin:e}"
        )));
    }
    let mut b = DVector::zeros(nr + 1);
    b[nr] = 1.0;
    let ergodic = svd
        .solve(&b, 1e-14)
        .map_err(|e| Error::NonErgodic(e.to_string()))?;
    let ergodic: Vec<f64> = ergodic.iter().copied().collect();
    let long_run_mean = ergodic.iter().zip(means).map(|(a, b)| a * b).sum();
    Ok(ChainSummary {
        ergodic,
        persistence,
        long_run_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_stationary_law() {
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.3, 0.7]);
        let s = summarize_chain(&p, &[1.0, -1.0], 1e-9).unwrap();
        assert!((s.ergodic[0] - 0.75).abs() < 1e-12);
        assert!((s.persistence[1] - 1.0 / 0.3).abs() < 1e-12);
        assert!((s.long_run_mean - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reducible_and_absorbing_chains_rejected() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            summarize_chain(&p, &[0.0, 0.0], 1e-9),
            Err(Error::AbsorbingRegime(1))
        ));
        let p = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0, 0.5, 0.5]);
        // regime 3 transient, {1,2} closed: still a unique stationary law
        assert!(summarize_chain(&p, &[0.0; 3], 1e-9).is_ok());
        let p = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.5, 0.5,
            ],
        );
        assert!(matches!(
            summarize_chain(&p, &[0.0; 4], 1e-9),
            Err(Error::NonErgodic(_))
        ));
    }

    #[test]
    fn em_recovers_separated_regimes() {
        let mut rng = RngStream::new(8, 0);
        let p = [[0.95, 0.05], [0.1, 0.9]];
        let (c, s) = ([2.0, -1.0], [0.5, 0.7]);
        let mut state = 0;
        let y: Vec<f64> = (0..600)
            .map(|_| {
                state = if rng.uniform() < p[state][0] { 0 } else { 1 };
                c[state] + s[state] * rng.standard_normal()
            })
            .collect();
        let fit = em_fit_msar0(
            &y,
            2,
            &EmSettings {
                restarts: 5,
                ..Default::default()
            },
            &mut RngStream::new(9, 0),
        )
        .unwrap();
        assert!(fit.converged);
        assert!((fit.means[0] - 2.0).abs() < 0.15 && (fit.means[1] + 1.0).abs() < 0.15);
        assert!((fit.transition[(0, 0)] - 0.95).abs() < 0.05);
    }

    fn simulated(seed: u64, t: usize) -> Vec<f64> {
        let mut rng = RngStream::new(seed, 0);
        let mut state = 0;
        (0..t)
            .map(|_| {
                state = if rng.uniform() < [0.9, 0.2][state] {
                    0
                } else {
                    1
                };
                [1.0, -0.5][state] + [0.6, 0.9][state] * rng.standard_normal()
            })
            .collect()
    }

    #[test]
    fn em_loglik_nondecreasing() {
        let y = simulated(3, 400);
        let mut rng = RngStream::new(4, 0);
        for _ in 0..5 {
            let start = random_start(&y, 2, &mut rng);
            let fit = em_run(&y, start, &EmSettings::default(), 1e-12)
                .unwrap()
                .unwrap();
            for w in fit.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn em_invariant_to_start_labelling() {
        let y = simulated(5, 400);
        let start = random_start(&y, 2, &mut RngStream::new(6, 0));
        let swapped = Start {
            means: vec![start.means[1], start.means[0]],
            vars: vec![start.vars[1], start.vars[0]],
            transition: DMatrix::from_fn(2, 2, |i, j| start.transition[(1 - i, 1 - j)]),
            initial: vec![start.initial[1], start.initial[0]],
        };
        let s = EmSettings::default();
        let a = em_run(&y, start, &s, 1e-12).unwrap().unwrap();
        let b = em_run(&y, swapped, &s, 1e-12).unwrap().unwrap();
        assert!((a.loglik - b.loglik).abs() < 1e-6);
        for j in 0..2 {
            assert!((a.means[j] - b.means[j]).abs() < 1e-6);
            assert!((a.variances[j] - b.variances[j]).abs() < 1e-6);
            for i in 0..2 {
                assert!((a.transition[(j, i)] - b.transition[(j, i)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn stationary_law_is_left_fixed_point() {
        let mut rng = RngStream::new(11, 0);
        for nr in 2..6 {
            let p = DMatrix::from_fn(nr, nr, |_, _| 0.05 + rng.uniform());
            let p = DMatrix::from_fn(nr, nr, |i, j| p[(i, j)] / p.row(i).sum());
            let s = summarize_chain(&p, &vec![0.0; nr], 1e-9).unwrap();
            let pi = DVector::from_vec(s.ergodic.clone());
            let resid = (p.transpose() * &pi - &pi).amax();
            assert!(resid < 1e-12, "{resid}");
            assert!((pi.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn restarts_independent_of_thread_count() {
        let y = simulated(12, 300);
        let s = EmSettings {
            restarts: 6,
            ..Default::default()
        };
        let a = em_fit_msar0(&y, 2, &s, &mut RngStream::new(1, 0)).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| em_fit_msar0(&y, 2, &s, &mut RngStream::new(1, 0)).unwrap());
        assert_eq!(a, b);
    }
}
