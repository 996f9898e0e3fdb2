//! Gibbs sampling of regime paths and transition matrices, and joint
//! simulation of future regimes, coefficients and observations.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rayon::prelude::*;

use crate::distributions::{sample_dirichlet, sample_mvn, sample_niw, RngStream};
use crate::error::{Error, Result};
use crate::filter::{hamilton_filter_log, kim_smoother, FilterOutput};
use crate::linalg::SpdMatrix;
use crate::model::{MsVarModel, Observations};
use crate::posterior::{Accumulator, PosteriorStats, RegimePosterior};
use crate::priors::NiwPrior;
use crate::regimes::{
    dedup_partition, DirichletPriorSet, RegimeClass, RegimeVector, TransitionCounts,
};

/// Transition probabilities, `(N+1) x N`: row 0 is the initial law and row
/// `i + 1` the law of the next regime after regime `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    full: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn new(full: DMatrix<f64>) -> Result<Self> {
        if full.nrows() != full.ncols() + 1 {
            return Err(Error::Dimension("transition matrix must be (N+1)xN".into()));
        }
        for i in 0..full.nrows() {
            let s: f64 = full.row(i).sum();
            if (s - 1.0).abs() > 1e-10 || full.row(i).iter().any(|&v| v < 0.0) {
                return Err(Error::Domain(format!(
                    "transition row {i} is not a probability vector"
                )));
            }
        }
        Ok(Self { full })
    }

    /// Row means of the Dirichlet prior.
    pub fn dirichlet_mean(priors: &DirichletPriorSet) -> Self {
        let mut full = priors.alpha().clone();
        for mut row in full.row_iter_mut() {
            let s: f64 = row.sum();
            row /= s;
        }
        Self { full }
    }

    /// Independent Dirichlet draws of every row given transition counts.
    pub fn draw<R: RngCore + ?Sized>(
        priors: &DirichletPriorSet,
        counts: &TransitionCounts,
        rng: &mut R,
    ) -> Result<Self> {
        let nr = priors.n_regimes();
        let mut full = DMatrix::zeros(nr + 1, nr);
        for i in 0..=nr {
            let row = sample_dirichlet(&priors.posterior_row(i, counts), rng)?;
            for j in 0..nr {
                full[(i, j)] = row[j];
            }
        }
        Ok(Self { full })
    }

    pub fn n_regimes(&self) -> usize {
        self.full.ncols()
    }

    pub fn full(&self) -> &DMatrix<f64> {
        &self.full
    }

    pub fn initial(&self) -> Vec<f64> {
        self.full.row(0).iter().copied().collect()
    }

    /// The `N x N` block of regime-to-regime probabilities.
    pub fn block(&self) -> DMatrix<f64> {
        self.full.rows(1, self.n_regimes()).into_owned()
    }

    /// `ln Pr(s | P)`.
    pub fn path_logprob(&self, path: &[usize]) -> f64 {
        let mut prev_row = 0;
        let mut acc = 0.0;
        for &s in path {
            acc += self.full[(prev_row, s)].ln();
            prev_row = s + 1;
        }
        acc
    }
}

/// How the regime path is refreshed within each sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeUpdate {
    /// Each `s_u` drawn independently from its smoothed probability.
    Marginal,
    /// Forward-filter backward-sample proposal with a Metropolis-Hastings
    /// correction against the collapsed path posterior.
    Joint,
    /// Path kept at its initial value.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsSettings {
    pub burn_in: usize,
    pub thin: usize,
    /// Number of retained draws.
    pub draws: usize,
    pub update: RegimeUpdate,
}

impl Default for GibbsSettings {
    fn default() -> Self {
        Self {
            burn_in: 500,
            thin: 1,
            draws: 1000,
            update: RegimeUpdate::Marginal,
        }
    }
}

impl GibbsSettings {
    /// Total sweeps including burn-in.
    pub fn iterations(&self) -> usize {
        self.burn_in + self.draws * self.thin
    }

    fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.draws == 0 {
            return Err(Error::InvalidInput(
                "thin and draws must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GibbsDraw {
    pub path: RegimeVector,
    pub transition: TransitionMatrix,
}

#[derive(Debug, Clone)]
pub struct GibbsOutput {
    pub draws: Vec<GibbsDraw>,
    /// Smoothed regime probabilities averaged over retained sweeps.
    pub mean_smoothed: DMatrix<f64>,
    /// Metropolis-Hastings acceptance rate in joint mode.
    pub acceptance_rate: Option<f64>,
}

/// Log predictive densities `ln η_{u,j}` where regime `j`'s statistics use
/// the observations before `u` that `path` assigns to `j`. Also returns
/// `ln f(ȳ | path) = Σ_u ln η_{u, s_u}`.
pub fn sequential_log_eta(
    obs: &Observations,
    path: &RegimeVector,
    priors: &[NiwPrior],
) -> Result<(DMatrix<f64>, f64)> {
    let (t, nr) = (path.len(), priors.len());
    if obs.len() < t || path.n_regimes() != nr {
        return Err(Error::Dimension(
            "path, observations and priors disagree".into(),
        ));
    }
    let (n, d) = (priors[0].n(), priors[0].d());
    let mut accs = vec![Accumulator::new(n, d); nr];
    let mut posts = accs
        .iter()
        .zip(priors)
        .map(|(a, p)| RegimePosterior::from_accumulator(a, p))
        .collect::<Result<Vec<_>>>()?;
    let mut log_eta = DMatrix::zeros(t, nr);
    let mut log_f = 0.0;
    for (u, &s) in path.states().iter().enumerate() {
        for j in 0..nr {
            log_eta[(u, j)] = posts[j].predictive_logpdf(&obs.y[u], &obs.design[u]);
        }
        log_f += log_eta[(u, s)];
        accs[s].push(&obs.y[u], &obs.design[u]);
        posts[s] = RegimePosterior::from_accumulator(&accs[s], &priors[s])?;
    }
    Ok((log_eta, log_f))
}

fn prior_log_eta(obs: &Observations, priors: &[NiwPrior]) -> Result<DMatrix<f64>> {
    let (n, d) = (priors[0].n(), priors[0].d());
    let posts = priors
        .iter()
        .map(|p| RegimePosterior::from_accumulator(&Accumulator::new(n, d), p))
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(obs.len(), priors.len(), |u, j| {
        posts[j].predictive_logpdf(&obs.y[u], &obs.design[u])
    }))
}

fn categorical<R: RngCore + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rand::Rng::random::<f64>(rng) * total;
    let mut acc = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Backward sampling from filter output; returns the path and its proposal
/// log probability.
fn ffbs<R: RngCore + ?Sized>(
    out: &FilterOutput,
    p: &DMatrix<f64>,
    rng: &mut R,
) -> (Vec<usize>, f64) {
    let t = out.filtered.nrows();
    let mut path = vec![0; t];
    if t == 0 {
        return (path, 0.0);
    }
    let last: Vec<f64> = out.filtered.row(t - 1).iter().copied().collect();
    path[t - 1] = categorical(&last, rng);
    for u in (0..t - 1).rev() {
        let next = path[u + 1];
        let w: Vec<f64> = (0..p.nrows())
            .map(|i| out.filtered[(u, i)] * p[(i, next)])
            .collect();
        path[u] = categorical(&w, rng);
    }
    let lq = ffbs_logprob(out, p, &path);
    (path, lq)
}

fn ffbs_logprob(out: &FilterOutput, p: &DMatrix<f64>, path: &[usize]) -> f64 {
    let t = path.len();
    if t == 0 {
        return 0.0;
    }
    let mut lq = out.filtered[(t - 1, path[t - 1])].ln();
    for u in 0..t - 1 {
        let (i, j) = (path[u], path[u + 1]);
        lq += out.filtered[(u, i)].ln() + p[(i, j)].ln() - out.predicted[(u, j)].ln();
    }
    lq
}

fn initial_path(obs: &Observations, model: &MsVarModel) -> Result<RegimeVector> {
    let p0 = TransitionMatrix::dirichlet_mean(&model.dirichlet);
    let out = hamilton_filter_log(
        &prior_log_eta(obs, &model.priors)?,
        &p0.block(),
        &p0.initial(),
    )?;
    let sm = kim_smoother(&out, &p0.block())?;
    let states = sm
        .smoothed
        .row_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |b, (k, &v)| if v > b.1 { (k, v) } else { b },
                )
                .0
        })
        .collect();
    RegimeVector::new(states, model.n_regimes())
}

/// Gibbs sampler over `(s̄_t, P)` with `Π` and `Σ` integrated out.
pub fn gibbs_sp(
    model: &MsVarModel,
    obs: &Observations,
    settings: &GibbsSettings,
    rng: &mut RngStream,
) -> Result<GibbsOutput> {
    settings.validate()?;
    let (t, nr) = (obs.len(), model.n_regimes());
    if t == 0 {
        return Err(Error::InvalidInput("no observations".into()));
    }
    if nr == 1 {
        let path = RegimeVector::new(vec![0; t], 1)?;
        let transition = TransitionMatrix::new(DMatrix::from_element(2, 1, 1.0))?;
        return Ok(GibbsOutput {
            draws: vec![GibbsDraw { path, transition }; settings.draws],
            mean_smoothed: DMatrix::from_element(t, 1, 1.0),
            acceptance_rate: None,
        });
    }
    let mut path = initial_path(obs, model)?;
    let mut draws = Vec::with_capacity(settings.draws);
    let mut mean_smoothed = DMatrix::zeros(t, nr);
    let (mut proposals, mut accepted) = (0usize, 0usize);
    for it in 0..settings.iterations() {
        let counts = TransitionCounts::from_path(&path);
        let transition = TransitionMatrix::draw(&model.dirichlet, &counts, rng)?;
        let block = transition.block();
        let keep = it >= settings.burn_in && (it - settings.burn_in).is_multiple_of(settings.thin);
        match settings.update {
            RegimeUpdate::Fixed => {
                if keep {
                    for (u, &s) in path.states().iter().enumerate() {
                        mean_smoothed[(u, s)] += 1.0;
                    }
                }
            }
            RegimeUpdate::Marginal => {
                let (log_eta, _) = sequential_log_eta(obs, &path, &model.priors)?;
                let out = hamilton_filter_log(&log_eta, &block, &transition.initial())?;
                let sm = kim_smoother(&out, &block)?;
                let states = sm
                    .smoothed
                    .row_iter()
                    .map(|r| {
                        let w: Vec<f64> = r.iter().copied().collect();
                        categorical(&w, rng)
                    })
                    .collect();
                path = RegimeVector::new(states, nr)?;
                if keep {
                    mean_smoothed += &sm.smoothed;
                }
            }
            RegimeUpdate::Joint => {
                let (log_eta, log_f) = sequential_log_eta(obs, &path, &model.priors)?;
                let out = hamilton_filter_log(&log_eta, &block, &transition.initial())?;
                if keep {
                    mean_smoothed += &kim_smoother(&out, &block)?.smoothed;
                }
                let (proposal, lq_fwd) = ffbs(&out, &block, rng);
                let proposal = RegimeVector::new(proposal, nr)?;
                let (log_eta_new, log_f_new) = sequential_log_eta(obs, &proposal, &model.priors)?;
                let out_new = hamilton_filter_log(&log_eta_new, &block, &transition.initial())?;
                let lq_rev = ffbs_logprob(&out_new, &block, path.states());
                let log_ratio = log_f_new + transition.path_logprob(proposal.states())
                    - log_f
                    - transition.path_logprob(path.states())
                    + lq_rev
                    - lq_fwd;
                proposals += 1;
                if log_ratio >= 0.0 || rng.uniform().ln() < log_ratio {
                    path = proposal;
                    accepted += 1;
                }
            }
        }
        if keep {
            draws.push(GibbsDraw {
                path: path.clone(),
                transition,
            });
        }
    }
    mean_smoothed /= draws.len() as f64;
    let acceptance_rate = (proposals > 0).then(|| accepted as f64 / proposals as f64);
    Ok(GibbsOutput {
        draws,
        mean_smoothed,
        acceptance_rate,
    })
}

/// Future regimes `s_{t+1..t+h}` from the chain started at `last`.
pub fn sample_future_regimes<R: RngCore + ?Sized>(
    last: usize,
    transition: &TransitionMatrix,
    horizon: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut out = Vec::with_capacity(horizon);
    let mut prev = last;
    for _ in 0..horizon {
        let w: Vec<f64> = transition.full.row(prev + 1).iter().copied().collect();
        prev = categorical(&w, rng);
        out.push(prev);
    }
    out
}

/// One draw of `(Π, Σ)` for a regime.
#[derive(Debug, Clone)]
pub struct RegimeDraw {
    pub coef: DMatrix<f64>,
    pub sigma: SpdMatrix,
}

/// Coefficients for the regimes visited after the split: posterior draws
/// for regimes already seen, prior draws for new ones.
pub fn sample_coefficients<R: RngCore + ?Sized>(
    path: &RegimeVector,
    split: usize,
    stats: &PosteriorStats,
    priors: &[NiwPrior],
    rng: &mut R,
) -> Result<BTreeMap<usize, RegimeDraw>> {
    let partition = dedup_partition(path, split)?;
    let mut out = BTreeMap::new();
    for &k in &partition.beta {
        let params = match partition.class_of(k) {
            Some(RegimeClass::Gamma) => stats.regime(k).niw()?,
            _ => priors[k].niw(),
        };
        let (coef, sigma) = sample_niw(&params, rng)?;
        out.insert(k, RegimeDraw { coef, sigma });
    }
    Ok(out)
}

/// Unit lower block-triangular system with bandwidth `p`: row `h` reads
/// `y_h - Σ_{k=1}^{min(p,h)} A_{h,k} y_{h-k} = b_h`.
#[derive(Debug, Clone)]
pub struct BlockLowerSystem {
    bands: Vec<Vec<DMatrix<f64>>>,
}

impl BlockLowerSystem {
    /// `lag_blocks[h][k-1]` is `A_{h,k}`; only the first `min(p, h)` are used.
    pub fn new(lag_blocks: Vec<Vec<DMatrix<f64>>>) -> Self {
        let bands = lag_blocks
            .into_iter()
            .enumerate()
            .map(|(h, mut blocks)| {
                blocks.truncate(h);
                blocks
            })
            .collect();
        Self { bands }
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    pub fn forward_substitute(&self, rhs: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let mut out: Vec<DVector<f64>> = Vec::with_capacity(rhs.len());
        for (h, b) in rhs.iter().enumerate() {
            let mut y = b.clone();
            for (k, a) in self.bands[h].iter().enumerate() {
                y += a * &out[h - k - 1];
            }
            out.push(y);
        }
        out
    }
}

/// Future observations given coefficients, regimes, the last `p` observed
/// values (most recent last), future exogenous rows and shocks.
pub fn future_path_from_shocks(
    coefficients: &BTreeMap<usize, RegimeDraw>,
    future_regimes: &[usize],
    history: &[DVector<f64>],
    exog_future: &[DVector<f64>],
    shocks: &[DVector<f64>],
    p: usize,
) -> Result<Vec<DVector<f64>>> {
    let horizon = future_regimes.len();
    if history.len() < p || exog_future.len() < horizon || shocks.len() < horizon {
        return Err(Error::Dimension(
            "history, exogenous rows or shocks too short".into(),
        ));
    }
    let hist = &history[history.len() - p..];
    let mut lag_blocks = Vec::with_capacity(horizon);
    let mut rhs = Vec::with_capacity(horizon);
    for (h, &s) in future_regimes.iter().enumerate() {
        let coef = &coefficients
            .get(&s)
            .ok_or_else(|| Error::InvalidInput(format!("no coefficients for regime {}", s + 1)))?
            .coef;
        let l = exog_future[h].len();
        let n = shocks[h].len();
        if coef.ncols() != l + n * p {
            return Err(Error::Dimension(
                "coefficient matrix does not match the design".into(),
            ));
        }
        let a = |k: usize| coef.columns(l + (k - 1) * n, n).into_owned();
        lag_blocks.push((1..=p.min(h)).map(a).collect());
        let mut b = coef.columns(0, l) * &exog_future[h] + &shocks[h];
        for k in (h + 1)..=p {
            b += a(k) * &hist[p + h - k];
        }
        rhs.push(b);
    }
    Ok(BlockLowerSystem::new(lag_blocks).forward_substitute(&rhs))
}

/// A joint draw of the regime path through the horizon, the transition
/// matrix and the coefficients of every regime visited after the split.
#[derive(Debug, Clone)]
pub struct ModelDraw {
    pub path: RegimeVector,
    pub transition: TransitionMatrix,
    pub coefficients: BTreeMap<usize, RegimeDraw>,
}

/// Simulates future observations for one model draw.
pub fn sample_future_endogenous<R: RngCore + ?Sized>(
    draw: &ModelDraw,
    split: usize,
    history: &[DVector<f64>],
    exog_future: &[DVector<f64>],
    p: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let future = &draw.path.states()[split..];
    let mut shocks = Vec::with_capacity(future.len());
    for &s in future {
        let sigma = &draw.coefficients[&s].sigma;
        shocks.push(sample_mvn(
            &DVector::zeros(sigma.dim()),
            &sigma.chol_l(),
            rng,
        ));
    }
    future_path_from_shocks(&draw.coefficients, future, history, exog_future, &shocks, p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastSettings {
    pub horizon: usize,
    pub gibbs: GibbsSettings,
}

#[derive(Debug, Clone)]
pub struct ForecastEnsemble {
    pub draws: Vec<ModelDraw>,
    /// `paths[ℓ][h]` is the simulated `y_{t+1+h}` of draw `ℓ`.
    pub paths: Vec<Vec<DVector<f64>>>,
    /// `(seed, stream)` used for each draw's forecast stage.
    pub seeds: Vec<(u64, u64)>,
    pub gibbs: GibbsOutput,
}

pub(crate) struct ForecastContext<'a> {
    pub model: &'a MsVarModel,
    pub obs: &'a Observations,
    pub history: &'a [DVector<f64>],
    pub exog_future: &'a [DVector<f64>],
    pub horizon: usize,
}

impl ForecastContext<'_> {
    pub fn validate(&self) -> Result<()> {
        let dims = self.model.dims;
        if self.history.len() < dims.p {
            return Err(Error::InvalidInput(format!(
                "need {} pre-forecast observations",
                dims.p
            )));
        }
        if self.exog_future.len() < self.horizon {
            return Err(Error::InvalidInput(
                "exogenous path shorter than the horizon".into(),
            ));
        }
        if self.exog_future.iter().any(|x| x.len() != dims.l)
            || self.history.iter().any(|y| y.len() != dims.n)
        {
            return Err(Error::Dimension(
                "history or exogenous rows have the wrong length".into(),
            ));
        }
        Ok(())
    }

    /// Future regimes, coefficients and observations for one Gibbs draw.
    pub fn forecast_one(
        &self,
        draw: &GibbsDraw,
        rng: &mut RngStream,
    ) -> Result<(ModelDraw, PosteriorStats, Vec<DVector<f64>>)> {
        let t = self.obs.len();
        let last = draw
            .path
            .last()
            .ok_or_else(|| Error::InvalidInput("empty path".into()))?;
        let future = sample_future_regimes(last, &draw.transition, self.horizon, rng);
        let full = draw.path.extended(&future)?;
        let stats = PosteriorStats::accumulate(self.obs, &draw.path, &self.model.priors)?;
        let coefficients = sample_coefficients(&full, t, &stats, &self.model.priors, rng)?;
        let model_draw = ModelDraw {
            path: full,
            transition: draw.transition.clone(),
            coefficients,
        };
        let y = sample_future_endogenous(
            &model_draw,
            t,
            self.history,
            self.exog_future,
            self.model.dims.p,
            rng,
        )?;
        Ok((model_draw, stats, y))
    }
}

/// Joint posterior predictive simulation. The Gibbs chain runs on stream 0
/// of `seed`; draw `ℓ` uses stream `ℓ + 1`, so results do not depend on the
/// number of threads.
pub fn simulate_joint(
    model: &MsVarModel,
    obs: &Observations,
    history: &[DVector<f64>],
    exog_future: &[DVector<f64>],
    settings: &ForecastSettings,
    seed: u64,
) -> Result<ForecastEnsemble> {
    let ctx = ForecastContext {
        model,
        obs,
        history,
        exog_future,
        horizon: settings.horizon,
    };
    ctx.validate()?;
    let gibbs = gibbs_sp(model, obs, &settings.gibbs, &mut RngStream::new(seed, 0))?;
    let results = gibbs
        .draws
        .par_iter()
        .enumerate()
        .map(|(l, draw)| {
            let mut rng = RngStream::new(seed, l as u64 + 1);
            ctx.forecast_one(draw, &mut rng)
                .map(|(d, _, y)| (d, y, (seed, l as u64 + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut draws = Vec::with_capacity(results.len());
    let mut paths = Vec::with_capacity(results.len());
    let mut seeds = Vec::with_capacity(results.len());
    for (d, y, s) in results {
        draws.push(d);
        paths.push(y);
        seeds.push(s);
    }
    Ok(ForecastEnsemble {
        draws,
        paths,
        seeds,
        gibbs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_design, ModelDims};
    use crate::posterior::log_marginal_y;

    fn kron_step(coef: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
        // (𝖸' ⊗ I_n) vec Π
        let n = coef.nrows();
        let k = x.transpose().kronecker(&DMatrix::<f64>::identity(n, n));
        k * crate::linalg::vec_of(coef)
    }

    #[test]
    fn block_solve_matches_direct_iteration() {
        let mut rng = RngStream::new(17, 0);
        let (n, p, l, h) = (2, 3, 1, 6);
        let mut coefs = BTreeMap::new();
        for k in 0..2 {
            let coef = DMatrix::from_fn(n, l + n * p, |_, _| 0.3 * rng.standard_normal());
            coefs.insert(
                k,
                RegimeDraw {
                    coef,
                    sigma: SpdMatrix::identity(n),
                },
            );
        }
        let regimes = [0, 1, 1, 0, 1, 0];
        let history: Vec<DVector<f64>> = (0..p)
            .map(|_| DVector::from_fn(n, |_, _| rng.standard_normal()))
            .collect();
        let exog = vec![DVector::from_element(1, 1.0); h];
        let shocks: Vec<DVector<f64>> = (0..h)
            .map(|_| DVector::from_fn(n, |_, _| rng.standard_normal()))
            .collect();
        let got = future_path_from_shocks(&coefs, &regimes, &history, &exog, &shocks, p).unwrap();
        let mut series = history.clone();
        for u in 0..h {
            let m = series.len();
            let lags: Vec<&DVector<f64>> = (1..=p).map(|k| &series[m - k]).collect();
            let x = build_design(&exog[u], &lags);
            let y = kron_step(&coefs[&regimes[u]].coef, &x) + &shocks[u];
            series.push(y);
        }
        for u in 0..h {
            assert!((&got[u] - &series[p + u]).amax() < 1e-12);
        }
    }

    #[test]
    fn sequential_eta_sums_to_marginal() {
        let pr = NiwPrior::new(
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            3.0,
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let priors = vec![pr.clone(), pr];
        let y: Vec<DVector<f64>> = [0.3, -0.2, 1.5, 0.9]
            .iter()
            .map(|&v| DVector::from_element(1, v))
            .collect();
        let obs = Observations::new(y, vec![DVector::from_element(1, 1.0); 4]).unwrap();
        let path = RegimeVector::new(vec![0, 1, 1, 0], 2).unwrap();
        let (_, lf) = sequential_log_eta(&obs, &path, &priors).unwrap();
        assert!((lf - log_marginal_y(&obs, &path, &priors).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ffbs_probabilities_normalize() {
        let log_eta = DMatrix::from_row_slice(3, 2, &[0.0, -1.0, -0.5, 0.2, 0.1, -0.3]);
        let p = DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.4, 0.6]);
        let out = hamilton_filter_log(&log_eta, &p, &[0.5, 0.5]).unwrap();
        let mut total = 0.0;
        for code in 0..8 {
            let path = [code & 1, (code >> 1) & 1, (code >> 2) & 1];
            total += ffbs_logprob(&out, &p, &path).exp();
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_regime_chain_is_trivial() {
        let pr = NiwPrior::new(
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            3.0,
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let model = MsVarModel::new(
            ModelDims::new(1, 1, 0).unwrap(),
            vec![pr],
            DirichletPriorSet::uniform(1, 1.0).unwrap(),
        )
        .unwrap();
        let obs = Observations::new(
            vec![DVector::from_element(1, 0.1); 3],
            vec![DVector::from_element(1, 1.0); 3],
        )
        .unwrap();
        let settings = GibbsSettings {
            burn_in: 10,
            thin: 1,
            draws: 5,
            update: RegimeUpdate::Marginal,
        };
        let out = gibbs_sp(&model, &obs, &settings, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(out.draws.len(), 5);
        assert!(out
            .draws
            .iter()
            .all(|d| d.path.states().iter().all(|&s| s == 0)));
    }

    #[test]
    fn fixed_path_transition_draws_match_dirichlet_posterior() {
        let pr = NiwPrior::new(
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            3.0,
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let dir = DirichletPriorSet::uniform(2, 1.0).unwrap();
        let model =
            MsVarModel::new(ModelDims::new(1, 1, 0).unwrap(), vec![pr.clone(), pr], dir).unwrap();
        // well separated data pins the initial path to 1,1,1,2,2,2,1
        let vals = [-5.0, -5.0, -5.0, 5.0, 5.0, 5.0, -5.0];
        let obs = Observations::new(
            vals.iter().map(|&v| DVector::from_element(1, v)).collect(),
            vec![DVector::from_element(1, 1.0); vals.len()],
        )
        .unwrap();
        let settings = GibbsSettings {
            burn_in: 0,
            thin: 1,
            draws: 20_000,
            update: RegimeUpdate::Fixed,
        };
        let out = gibbs_sp(&model, &obs, &settings, &mut RngStream::new(2, 0)).unwrap();
        let path = out.draws[0].path.clone();
        let counts = TransitionCounts::from_path(&path);
        let alpha = model.dirichlet.posterior_row(1, &counts);
        let expected = alpha[0] / (alpha[0] + alpha[1]);
        let mean: f64 = out
            .draws
            .iter()
            .map(|d| d.transition.full()[(1, 0)])
            .sum::<f64>()
            / 20_000.0;
        assert!((mean - expected).abs() < 0.01, "{mean} vs {expected}");
    }
}
