//! Regime-wise sufficient statistics, closed-form marginal likelihoods and
//! predictive densities under conjugate Normal-Inverse-Wishart priors.

use nalgebra::{DMatrix, DVector};

use crate::distributions::{ln_pi, log_mv_gamma, log_sum_exp, NiwParams};
use crate::error::{Error, Result};
use crate::linalg::{ln_det_positive, symmetrize, SpdMatrix};
use crate::model::Observations;
use crate::priors::NiwPrior;
use crate::regimes::{dedup_partition, DirichletPriorSet, RegimeVector, TransitionCounts};

pub use crate::model::{build_design, ModelDims};

const FORM_TOL: f64 = 1e-8;
const ENUMERATION_LIMIT: usize = 1_000_000;

/// Running sums `Σ y y'`, `Σ y 𝖸'`, `Σ 𝖸 𝖸'` and the count for one regime.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulator {
    q: usize,
    syy: DMatrix<f64>,
    sy_design: DMatrix<f64>,
    s_design: DMatrix<f64>,
}

impl Accumulator {
    pub fn new(n: usize, d: usize) -> Self {
        Self {
            q: 0,
            syy: DMatrix::zeros(n, n),
            sy_design: DMatrix::zeros(n, d),
            s_design: DMatrix::zeros(d, d),
        }
    }

    pub fn push(&mut self, y: &DVector<f64>, design: &DVector<f64>) {
        self.q += 1;
        self.syy.ger(1.0, y, y, 1.0);
        self.sy_design.ger(1.0, y, design, 1.0);
        self.s_design.ger(1.0, design, design, 1.0);
    }

    pub fn count(&self) -> usize {
        self.q
    }
}

/// Posterior of one regime: `Λ_{0|t}` (a precision over the design
/// columns), the coefficient mean `C`, `B̄` and the Inverse-Wishart scale
/// `B̄ + V₀` with `ν₀ + q` degrees of freedom.
#[derive(Debug, Clone)]
pub struct RegimePosterior {
    q: usize,
    n: usize,
    lambda_post: SpdMatrix,
    coef_mean: DMatrix<f64>,
    bbar: DMatrix<f64>,
    scale: SpdMatrix,
    dof: f64,
    // ln Γ_n((ν+1)/2) - ln Γ_n(ν/2)
    predictive_gamma: f64,
}

impl RegimePosterior {
    pub fn from_accumulator(acc: &Accumulator, prior: &NiwPrior) -> Result<Self> {
        let n = prior.n();
        let lambda_post =
            SpdMatrix::from_nearly_symmetric(&acc.s_design + prior.lambda0_inv().matrix())?;
        let g = &acc.sy_design + prior.pi0_lambda_inv();
        let coef_mean = lambda_post.solve(&g.transpose()).transpose();
        let w = lambda_post
            .chol_l()
            .solve_lower_triangular(&g.transpose())
            .ok_or_else(|| Error::NotPositiveDefinite("posterior precision".into()))?;
        let mut bbar = &acc.syy + prior.pi0_lambda_inv_pi0() - w.transpose() * w;
        symmetrize(&mut bbar);
        let scale = SpdMatrix::from_nearly_symmetric(&bbar + prior.v0().matrix())?;
        let dof = prior.nu0() + acc.q as f64;
        let predictive_gamma = log_mv_gamma(n, (dof + 1.0) / 2.0)? - log_mv_gamma(n, dof / 2.0)?;
        Ok(Self {
            q: acc.q,
            n,
            lambda_post,
            coef_mean,
            bbar,
            scale,
            dof,
            predictive_gamma,
        })
    }

    pub fn count(&self) -> usize {
        self.q
    }

    /// `Λ_{0|t} = Σ 𝖸 𝖸' + Λ₀⁻¹`.
    pub fn lambda_post(&self) -> &SpdMatrix {
        &self.lambda_post
    }

    pub fn coef_mean(&self) -> &DMatrix<f64> {
        &self.coef_mean
    }

    pub fn bbar(&self) -> &DMatrix<f64> {
        &self.bbar
    }

    pub fn scale(&self) -> &SpdMatrix {
        &self.scale
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    /// Posterior law of `(Π, Σ)`.
    pub fn niw(&self) -> Result<NiwParams> {
        Ok(NiwParams {
            mean: self.coef_mean.clone(),
            col_cov: SpdMatrix::from_nearly_symmetric(self.lambda_post.inverse())?,
            dof: self.dof,
            scale: self.scale.clone(),
        })
    }

    /// This regime's factor of the marginal likelihood, in logs.
    pub fn log_marginal_term(&self, prior: &NiwPrior) -> Result<f64> {
        let (n, q) = (self.n as f64, self.q as f64);
        let nu0 = prior.nu0();
        Ok(-n * q / 2.0 * ln_pi()
            - n / 2.0 * prior.lambda0().ln_det()
            - n / 2.0 * self.lambda_post.ln_det()
            + log_mv_gamma(self.n, (nu0 + q) / 2.0)?
            - log_mv_gamma(self.n, nu0 / 2.0)?
            + nu0 / 2.0 * prior.v0().ln_det()
            - (nu0 + q) / 2.0 * self.scale.ln_det())
    }

    /// Log density of the next observation `y` with design `design`: a
    /// multivariate t with `ν` degrees of freedom, location `C 𝖸` and scale
    /// `h (B̄ + V₀) / ν`, `h = 1 + 𝖸' Λ_{0|t}⁻¹ 𝖸`.
    pub fn predictive_logpdf(&self, y: &DVector<f64>, design: &DVector<f64>) -> f64 {
        let n = self.n as f64;
        let h = 1.0 + self.lambda_post.inv_quad_form(design);
        let r = y - &self.coef_mean * design;
        let m = self.scale.inv_quad_form(&r);
        -n / 2.0 * ln_pi() + self.predictive_gamma
            - n / 2.0 * h.ln()
            - 0.5 * self.scale.ln_det()
            - (self.dof + 1.0) / 2.0 * (m / h).ln_1p()
    }

    /// `𝖸' Λ_{0|t}⁻¹ 𝖸`.
    pub fn col_cov_quad(&self, design: &DVector<f64>) -> f64 {
        self.lambda_post.inv_quad_form(design)
    }
}

/// Statistics of every regime for one path, plus the raw columns when they
/// were retained.
#[derive(Debug, Clone)]
pub struct PosteriorStats {
    accumulators: Vec<Accumulator>,
    regimes: Vec<RegimePosterior>,
    times: Vec<Vec<usize>>,
    observed: Option<Observations>,
}

impl PosteriorStats {
    /// Accumulates without retaining raw data or cross-checking.
    pub fn accumulate(
        obs: &Observations,
        path: &RegimeVector,
        priors: &[NiwPrior],
    ) -> Result<Self> {
        check_inputs(obs, path.len(), priors)?;
        let (n, d) = (priors[0].n(), priors[0].d());
        let nr = priors.len();
        if path.n_regimes() != nr {
            return Err(Error::Dimension("path and priors disagree on N".into()));
        }
        let mut accumulators = vec![Accumulator::new(n, d); nr];
        let mut times = vec![Vec::new(); nr];
        for (u, &s) in path.states().iter().enumerate() {
            accumulators[s].push(&obs.y[u], &obs.design[u]);
            times[s].push(u);
        }
        let regimes = accumulators
            .iter()
            .zip(priors)
            .map(|(a, p)| RegimePosterior::from_accumulator(a, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            accumulators,
            regimes,
            times,
            observed: None,
        })
    }

    pub fn regime(&self, k: usize) -> &RegimePosterior {
        &self.regimes[k]
    }

    pub fn accumulator(&self, k: usize) -> &Accumulator {
        &self.accumulators[k]
    }

    pub fn n_regimes(&self) -> usize {
        self.regimes.len()
    }

    pub fn times(&self, k: usize) -> &[usize] {
        &self.times[k]
    }

    pub fn observed(&self) -> Option<&Observations> {
        self.observed.as_ref()
    }

    /// `ln f(ȳ | s̄)`: sum of the per-regime marginal terms.
    pub fn log_marginal(&self, priors: &[NiwPrior]) -> Result<f64> {
        let mut acc = 0.0;
        for (k, r) in self.regimes.iter().enumerate() {
            if r.count() > 0 {
                acc += r.log_marginal_term(&priors[k])?;
            }
        }
        Ok(acc)
    }
}

fn check_inputs(obs: &Observations, t: usize, priors: &[NiwPrior]) -> Result<()> {
    if priors.is_empty() {
        return Err(Error::InvalidInput("no regime priors".into()));
    }
    if obs.len() < t {
        return Err(Error::Dimension(format!(
            "path of length {t} for {} observations",
            obs.len()
        )));
    }
    let (n, d) = (priors[0].n(), priors[0].d());
    if priors.iter().any(|p| p.n() != n || p.d() != d) {
        return Err(Error::Dimension(
            "regime priors have different shapes".into(),
        ));
    }
    if obs.y.iter().any(|y| y.len() != n) || obs.design.iter().any(|x| x.len() != d) {
        return Err(Error::Dimension(format!(
            "observations must be {n}-vectors with {d}-vector designs"
        )));
    }
    Ok(())
}

/// `B̄` from raw columns: `E (I + 𝖸' Λ₀ 𝖸)⁻¹ E'` with `E = y - Π₀ 𝖸`.
pub fn bbar_from_columns(
    ys: &DMatrix<f64>,
    xs: &DMatrix<f64>,
    prior: &NiwPrior,
) -> Result<DMatrix<f64>> {
    let q = ys.ncols();
    let e = ys - prior.pi0() * xs;
    let m = SpdMatrix::from_nearly_symmetric(
        DMatrix::identity(q, q) + xs.transpose() * prior.lambda0().matrix() * xs,
    )?;
    let mut b = &e * m.solve(&e.transpose());
    symmetrize(&mut b);
    Ok(b)
}

fn relative_gap(a: &DMatrix<f64>, b: &DMatrix<f64>, magnitude: f64) -> f64 {
    (a - b).amax() / (1.0 + magnitude)
}

/// Sufficient statistics for `path` over the first `path.len()`
/// observations. `B̄` is computed from running sums and cross-checked
/// against the raw-column form; raw data are retained.
pub fn sufficient_stats(
    obs: &Observations,
    path: &RegimeVector,
    priors: &[NiwPrior],
) -> Result<PosteriorStats> {
    let mut stats = PosteriorStats::accumulate(obs, path, priors)?;
    for k in 0..stats.n_regimes() {
        if stats.times[k].is_empty() {
            continue;
        }
        let (ys, xs) = obs.columns(&stats.times[k]);
        let direct = bbar_from_columns(&ys, &xs, &priors[k])?;
        let acc = &stats.accumulators[k];
        let magnitude = acc
            .syy
            .amax()
            .max(priors[k].pi0_lambda_inv_pi0().amax())
            .max(direct.amax());
        let gap = relative_gap(stats.regimes[k].bbar(), &direct, magnitude);
        if gap > FORM_TOL {
            return Err(Error::Consistency(format!(
                "regime {}: running-sum and raw-column B̄ differ by {gap:e}",
                k + 1
            )));
        }
    }
    stats.observed = Some(obs.prefix(path.len()));
    Ok(stats)
}

/// `ln f(ȳ_t | s̄_t)`.
pub fn log_marginal_y(obs: &Observations, path: &RegimeVector, priors: &[NiwPrior]) -> Result<f64> {
    PosteriorStats::accumulate(obs, path, priors)?.log_marginal(priors)
}

/// `ln f(y_u | ȳ_{u-1}, s̄_{u-1}, s_u = j)` given the statistics of the past.
pub fn predictive_logdensity_onestep(
    y: &DVector<f64>,
    design: &DVector<f64>,
    regime: usize,
    stats: &PosteriorStats,
) -> f64 {
    stats.regime(regime).predictive_logpdf(y, design)
}

/// `ln f(y_{t+1..T} | ȳ_t, s̄_T)` for the future block `future`, where
/// `stats` summarize the first `t` observations under `path[..t]`.
///
/// When `stats` retain raw data, the updated `B̄` of every future regime is
/// also obtained by the rank update through `Φ = I - 𝖸°' Λ_{0|t}⁻¹ 𝖸°` and
/// both forms must agree.
pub fn log_predictive_future(
    stats: &PosteriorStats,
    future: &Observations,
    path: &RegimeVector,
    priors: &[NiwPrior],
) -> Result<f64> {
    let t = path
        .len()
        .checked_sub(future.len())
        .ok_or_else(|| Error::Dimension("future block longer than the path".into()))?;
    if stats
        .accumulators
        .iter()
        .map(Accumulator::count)
        .sum::<usize>()
        != t
    {
        return Err(Error::Dimension(
            "statistics do not cover the first t observations".into(),
        ));
    }
    check_inputs(future, future.len(), priors)?;
    let partition = dedup_partition(path, t)?;
    let mut total = 0.0;
    for &k in &partition.beta {
        let future_times: Vec<usize> = (0..future.len())
            .filter(|&h| path.states()[t + h] == k)
            .collect();
        let mut acc = stats.accumulators[k].clone();
        for &h in &future_times {
            acc.push(&future.y[h], &future.design[h]);
        }
        let updated = RegimePosterior::from_accumulator(&acc, &priors[k])?;
        if let Some(observed) = &stats.observed {
            let (ys_star, xs_star) = future.columns(&future_times);
            let (ys, xs) = observed.columns(&stats.times[k]);
            let recursive =
                recursive_bbar(&ys, &xs, &ys_star, &xs_star, &priors[k], stats.regime(k))?;
            let gap = relative_gap(
                updated.bbar(),
                &recursive,
                updated.bbar().amax().max(recursive.amax()),
            );
            if gap > FORM_TOL {
                return Err(Error::Consistency(format!(
                    "regime {}: recursive and direct B̄ differ by {gap:e}",
                    k + 1
                )));
            }
        }
        total += updated.log_marginal_term(&priors[k])?;
        if stats.regime(k).count() > 0 {
            total -= stats.regime(k).log_marginal_term(&priors[k])?;
        }
    }
    Ok(total)
}

/// `B̄_T = B̄_t + R (I + 𝖸*' Λ_{0|t}⁻¹ 𝖸*)⁻¹ R'` with
/// `R = y* - Π₀ 𝖸* - (y° - Π₀ 𝖸°) Φ 𝖸°' Λ₀ 𝖸*`.
pub fn recursive_bbar(
    ys: &DMatrix<f64>,
    xs: &DMatrix<f64>,
    ys_star: &DMatrix<f64>,
    xs_star: &DMatrix<f64>,
    prior: &NiwPrior,
    past: &RegimePosterior,
) -> Result<DMatrix<f64>> {
    let q = xs.ncols();
    let h = xs_star.ncols();
    let phi = DMatrix::identity(q, q) - xs.transpose() * past.lambda_post().solve(xs);
    let e = ys - prior.pi0() * xs;
    let r = ys_star
        - prior.pi0() * xs_star
        - e * phi * xs.transpose() * prior.lambda0().matrix() * xs_star;
    let m = SpdMatrix::from_nearly_symmetric(
        DMatrix::identity(h, h) + xs_star.transpose() * past.lambda_post().solve(xs_star),
    )?;
    let mut out = past.bbar() + &r * m.solve(&r.transpose());
    symmetrize(&mut out);
    Ok(out)
}

/// Posterior mean of `Π` for a future regime: `C` if the regime has been
/// observed, the prior mean otherwise.
pub fn coef_posterior_mean(
    stats: &PosteriorStats,
    regime: usize,
    priors: &[NiwPrior],
) -> DMatrix<f64> {
    if stats.regime(regime).count() > 0 {
        stats.regime(regime).coef_mean().clone()
    } else {
        priors[regime].pi0().clone()
    }
}

/// Iterated plug-in forecast: `y_u = M_{s_u} 𝖸_u` with each forecast fed
/// into later designs. `history` holds the last `p` observations, most
/// recent last.
pub fn approx_forecast_mean(
    means: &[DMatrix<f64>],
    future_regimes: &[usize],
    history: &[DVector<f64>],
    exog_future: &[DVector<f64>],
    p: usize,
) -> Result<Vec<DVector<f64>>> {
    if history.len() < p || exog_future.len() < future_regimes.len() {
        return Err(Error::Dimension(
            "history or exogenous path too short".into(),
        ));
    }
    let mut series: Vec<DVector<f64>> = history[history.len() - p..].to_vec();
    let mut out = Vec::with_capacity(future_regimes.len());
    for (h, &s) in future_regimes.iter().enumerate() {
        let m = series.len();
        let lags: Vec<&DVector<f64>> = (1..=p).map(|k| &series[m - k]).collect();
        let x = build_design(&exog_future[h], &lags);
        let y = &means[s] * x;
        series.push(y.clone());
        out.push(y);
    }
    Ok(out)
}

/// `ln f(ȳ_t)` by summing over every regime path, each weighted by its
/// Dirichlet-multinomial probability. Limited to `N^t ≤ 10⁶` paths.
pub fn exact_mixture_logdensity(
    obs: &Observations,
    priors: &[NiwPrior],
    dirichlet: &DirichletPriorSet,
) -> Result<f64> {
    let nr = dirichlet.n_regimes();
    if priors.len() != nr {
        return Err(Error::Dimension(
            "priors and Dirichlet rows disagree on N".into(),
        ));
    }
    let t = obs.len();
    check_inputs(obs, t, priors)?;
    let paths = (nr as f64).powi(t as i32);
    if paths > ENUMERATION_LIMIT as f64 {
        return Err(Error::EnumerationBound {
            paths,
            limit: ENUMERATION_LIMIT,
        });
    }
    let (n, d) = (priors[0].n(), priors[0].d());
    let mut state = Enumeration {
        obs,
        priors,
        dirichlet,
        accs: vec![Accumulator::new(n, d); nr],
        posts: priors
            .iter()
            .map(|p| RegimePosterior::from_accumulator(&Accumulator::new(n, d), p))
            .collect::<Result<Vec<_>>>()?,
        counts: TransitionCounts::zeros(nr),
        leaves: Vec::with_capacity(paths as usize),
    };
    state.descend(0, None, 0.0)?;
    Ok(log_sum_exp(&state.leaves))
}

struct Enumeration<'a> {
    obs: &'a Observations,
    priors: &'a [NiwPrior],
    dirichlet: &'a DirichletPriorSet,
    accs: Vec<Accumulator>,
    posts: Vec<RegimePosterior>,
    counts: TransitionCounts,
    leaves: Vec<f64>,
}

impl Enumeration<'_> {
    fn descend(&mut self, u: usize, prev: Option<usize>, acc: f64) -> Result<()> {
        if u == self.obs.len() {
            self.leaves.push(acc);
            return Ok(());
        }
        let row = prev.map_or(0, |s| s + 1);
        let weights = self.dirichlet.posterior_row(row, &self.counts);
        let total: f64 = weights.iter().sum();
        for j in 0..weights.len() {
            let lp = (weights[j] / total).ln()
                + self.posts[j].predictive_logpdf(&self.obs.y[u], &self.obs.design[u]);
            let saved_acc = self.accs[j].clone();
            let saved_post = self.posts[j].clone();
            self.accs[j].push(&self.obs.y[u], &self.obs.design[u]);
            self.posts[j] = RegimePosterior::from_accumulator(&self.accs[j], &self.priors[j])?;
            let saved_counts = self.counts.clone();
            self.counts.push(prev, j);
            self.descend(u + 1, Some(j), acc + lp)?;
            self.counts = saved_counts;
            self.accs[j] = saved_acc;
            self.posts[j] = saved_post;
        }
        Ok(())
    }
}

/// Residuals of the matrix identities behind the closed forms, all relative
/// to the size of the quantities compared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResiduals {
    /// `Φ (I + 𝖸' Λ₀ 𝖸) = I`.
    pub phi_inverse: f64,
    /// `Λ₀ - Λ₀ 𝖸 Φ 𝖸' Λ₀ = Λ_{0|t}⁻¹`.
    pub theta: f64,
    /// `Λ₀⁻¹ Λ_{0|t}⁻¹ 𝖸 Φ⁻¹ = 𝖸`.
    pub design_recovery: f64,
    /// `|I_q + 𝖸' Λ₀ 𝖸| = |I_d + Λ₀ 𝖸 𝖸'| = |Λ₀| |Λ_{0|t}|`.
    pub determinant: f64,
    /// Running-sum and raw-column forms of `B̄`.
    pub bbar_forms: f64,
    /// Recursive and direct forms of the updated `B̄`.
    pub bbar_recursive: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        [
            self.phi_inverse,
            self.theta,
            self.design_recovery,
            self.determinant,
            self.bbar_forms,
            self.bbar_recursive,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Evaluates every identity for one regime with past columns `(ys, xs)` and
/// future columns `(ys_star, xs_star)`.
pub fn check_identities(
    ys: &DMatrix<f64>,
    xs: &DMatrix<f64>,
    ys_star: &DMatrix<f64>,
    xs_star: &DMatrix<f64>,
    prior: &NiwPrior,
) -> Result<IdentityResiduals> {
    let (n, d, q) = (ys.nrows(), xs.nrows(), xs.ncols());
    let lam0 = prior.lambda0().matrix();
    let mut acc = Accumulator::new(n, d);
    for u in 0..q {
        acc.push(&ys.column(u).into_owned(), &xs.column(u).into_owned());
    }
    let post = RegimePosterior::from_accumulator(&acc, prior)?;
    let lam_post_inv = post.lambda_post().inverse();
    let phi = DMatrix::identity(q, q) - xs.transpose() * &lam_post_inv * xs;
    let phi_inv = DMatrix::identity(q, q) + xs.transpose() * lam0 * xs;

    let phi_inverse = (&phi * &phi_inv - DMatrix::identity(q, q)).amax();

    let theta_m = lam0 - lam0 * xs * &phi * xs.transpose() * lam0;
    let theta = (&theta_m - &lam_post_inv).amax() / lam_post_inv.amax();

    let recovered = prior.lambda0_inv().matrix() * &lam_post_inv * xs * &phi_inv;
    let design_recovery = (&recovered - xs).amax() / xs.amax().max(f64::MIN_POSITIVE);

    let ld_q = ln_det_positive(&phi_inv).ok_or_else(|| Error::Domain("|I + 𝖸'Λ₀𝖸| ≤ 0".into()))?;
    let ld_d = ln_det_positive(&(DMatrix::identity(d, d) + lam0 * xs * xs.transpose()))
        .ok_or_else(|| Error::Domain("|I + Λ₀𝖸𝖸'| ≤ 0".into()))?;
    let ld_post = prior.lambda0().ln_det() + post.lambda_post().ln_det();
    let determinant = ((ld_q - ld_d).abs().max((ld_q - ld_post).abs())) / (1.0 + ld_q.abs());

    let direct = bbar_from_columns(ys, xs, prior)?;
    let bbar_forms = relative_gap(post.bbar(), &direct, direct.amax());

    let recursive = recursive_bbar(ys, xs, ys_star, xs_star, prior, &post)?;
    let mut acc_t = acc;
    for u in 0..xs_star.ncols() {
        acc_t.push(
            &ys_star.column(u).into_owned(),
            &xs_star.column(u).into_owned(),
        );
    }
    let updated = RegimePosterior::from_accumulator(&acc_t, prior)?;
    let bbar_recursive = relative_gap(updated.bbar(), &recursive, recursive.amax());

    Ok(IdentityResiduals {
        phi_inverse,
        theta,
        design_recovery,
        determinant,
        bbar_forms,
        bbar_recursive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{matrix_t_logpdf, RngStream};
    use crate::regimes::regime_path_logdensity;

    fn prior(n: usize, d: usize, seed: u64) -> NiwPrior {
        let mut rng = RngStream::new(seed, 0);
        let pi0 = DMatrix::from_fn(n, d, |_, _| 0.3 * rng.standard_normal());
        let a = DMatrix::from_fn(d, d, |_, _| rng.standard_normal());
        let lam = &a * a.transpose() * 0.2 + DMatrix::identity(d, d) * 0.5;
        let b = DMatrix::from_fn(n, n, |_, _| rng.standard_normal());
        let v0 = &b * b.transpose() * 0.1 + DMatrix::identity(n, n) * 0.3;
        NiwPrior::new(pi0, lam, n as f64 + 2.5, v0).unwrap()
    }

    fn data(n: usize, d: usize, t: usize, seed: u64) -> Observations {
        let mut rng = RngStream::new(seed, 1);
        let y = (0..t)
            .map(|_| DVector::from_fn(n, |_, _| rng.standard_normal()))
            .collect();
        let x = (0..t)
            .map(|_| {
                let mut v = DVector::from_fn(d, |_, _| rng.standard_normal());
                v[0] = 1.0;
                v
            })
            .collect();
        Observations::new(y, x).unwrap()
    }

    #[test]
    fn single_observation_marginal_is_matrix_t_of_prior_predictive() {
        // one observation: y ~ t with location Π₀𝖸, row scale V₀ and column
        // precision (1 + 𝖸'Λ₀𝖸)⁻¹
        let (n, d) = (2, 3);
        let pr = prior(n, d, 3);
        let obs = data(n, d, 1, 4);
        let path = RegimeVector::new(vec![0], 1).unwrap();
        let lm = log_marginal_y(&obs, &path, std::slice::from_ref(&pr)).unwrap();
        let x = &obs.design[0];
        let h = 1.0 + pr.lambda0().quad_form(x);
        let oracle = matrix_t_logpdf(
            &DMatrix::from_column_slice(n, 1, obs.y[0].as_slice()),
            &DMatrix::from_column_slice(n, 1, (pr.pi0() * x).as_slice()),
            pr.v0(),
            &SpdMatrix::from_diagonal(&[1.0 / h]).unwrap(),
            pr.nu0(),
        )
        .unwrap();
        assert!((lm - oracle).abs() < 1e-10, "{lm} vs {oracle}");
    }

    #[test]
    fn chain_rule_of_predictives_gives_marginal() {
        let (n, d) = (2, 3);
        let priors = vec![prior(n, d, 1), prior(n, d, 2)];
        let obs = data(n, d, 7, 5);
        let path = RegimeVector::new(vec![0, 1, 1, 0, 1, 0, 0], 2).unwrap();
        let mut chain = 0.0;
        for u in 0..obs.len() {
            let stats =
                PosteriorStats::accumulate(&obs.prefix(u), &path.prefix(u), &priors).unwrap();
            chain +=
                predictive_logdensity_onestep(&obs.y[u], &obs.design[u], path.states()[u], &stats);
        }
        let lm = log_marginal_y(&obs, &path, &priors).unwrap();
        assert!((lm - chain).abs() < 1e-9 * (1.0 + lm.abs()));
    }

    #[test]
    fn future_predictive_is_ratio_of_marginals() {
        let (n, d) = (2, 2);
        let priors = vec![prior(n, d, 7), prior(n, d, 8), prior(n, d, 9)];
        let obs = data(n, d, 9, 6);
        let path = RegimeVector::new(vec![0, 1, 0, 0, 1, 0, 2, 1, 2], 3).unwrap();
        let t = 5;
        let stats = sufficient_stats(&obs.prefix(t), &path.prefix(t), &priors).unwrap();
        let f = log_predictive_future(&stats, &obs.suffix(t), &path, &priors).unwrap();
        let oracle = log_marginal_y(&obs, &path, &priors).unwrap()
            - log_marginal_y(&obs.prefix(t), &path.prefix(t), &priors).unwrap();
        assert!((f - oracle).abs() < 1e-9 * (1.0 + oracle.abs()));
    }

    #[test]
    fn exact_mixture_matches_brute_force() {
        let (n, d) = (1, 2);
        let priors = vec![prior(n, d, 11), prior(n, d, 12)];
        let dir = DirichletPriorSet::sticky(2, 3.0, 1.0).unwrap();
        let obs = data(n, d, 5, 13);
        let mut terms = Vec::new();
        for code in 0..32usize {
            let states = (0..5).map(|u| (code >> u) & 1).collect();
            let p = RegimeVector::new(states, 2).unwrap();
            terms.push(
                log_marginal_y(&obs, &p, &priors).unwrap()
                    + regime_path_logdensity(&p, &dir).unwrap(),
            );
        }
        let oracle = log_sum_exp(&terms);
        let got = exact_mixture_logdensity(&obs, &priors, &dir).unwrap();
        assert!((got - oracle).abs() < 1e-10);
    }

    #[test]
    fn enumeration_limit_enforced() {
        let priors = vec![prior(1, 1, 1), prior(1, 1, 2)];
        let dir = DirichletPriorSet::uniform(2, 1.0).unwrap();
        let obs = data(1, 1, 21, 3);
        assert!(matches!(
            exact_mixture_logdensity(&obs, &priors, &dir),
            Err(Error::EnumerationBound { .. })
        ));
    }

    #[test]
    fn identities_hold() {
        let (n, d) = (3, 4);
        let pr = prior(n, d, 21);
        let obs = data(n, d, 10, 22);
        let (ys, xs) = obs.columns(&[0, 1, 2, 3, 4, 5]);
        let (ys2, xs2) = obs.columns(&[6, 7, 8, 9]);
        let r = check_identities(&ys, &xs, &ys2, &xs2, &pr).unwrap();
        assert!(r.max() < 1e-10, "{r:?}");
    }

    #[test]
    fn empty_regime_posterior_is_prior() {
        let pr = prior(2, 3, 4);
        let post = RegimePosterior::from_accumulator(&Accumulator::new(2, 3), &pr).unwrap();
        assert!((post.coef_mean() - pr.pi0()).amax() < 1e-12);
        assert!(post.bbar().amax() < 1e-12);
        assert!(post.log_marginal_term(&pr).unwrap().abs() < 1e-12);
    }

    #[test]
    fn plug_in_forecast_iterates() {
        let means = vec![DMatrix::from_row_slice(1, 2, &[1.0, 0.5])];
        let hist = vec![DVector::from_element(1, 2.0)];
        let exog = vec![DVector::from_element(1, 1.0); 3];
        let f = approx_forecast_mean(&means, &[0, 0, 0], &hist, &exog, 1).unwrap();
        assert_eq!(f[0][0], 2.0);
        assert_eq!(f[1][0], 2.0);
        let f =
            approx_forecast_mean(&means, &[0], &[DVector::from_element(1, 0.0)], &exog, 1).unwrap();
        assert_eq!(f[0][0], 1.0);
    }
}
