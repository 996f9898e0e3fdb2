//! Subcommand implementations.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use msvar::ddm::{
    forecast_bands, panel_to_returns, project_prices, read_panel_csv, PricePanel, ReturnPanel,
    ZeroDividendPolicy,
};
use msvar::distributions::RngStream;
use msvar::estimation::{em_fit_msar0, summarize_chain, EmSettings};
use msvar::importance::{is_tail_probability, naive_tail_probability, IsSettings, TiltSpec};
use msvar::model::{ModelDims, MsVarModel, Observations};
use msvar::priors::{minnesota_prior, MinnesotaConfig};
use msvar::regimes::DirichletPriorSet;
use msvar::sampler::{
    gibbs_sp, simulate_joint, ForecastEnsemble, ForecastSettings, GibbsSettings, RegimeUpdate,
};

use crate::config::{LoadedConfig, RunConfig, UpdateMode, ZeroDividend};
use crate::error::{CliError, CliResult, CoreContext};
use crate::output::{fmt_f64, level_label, strings, Provenance, Report};

/// Row tolerance when summarizing fitted transition matrices.
const ROW_SUM_TOL: f64 = 2e-3;

pub struct RunContext {
    pub loaded: LoadedConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl RunContext {
    pub fn config(&self) -> &RunConfig {
        &self.loaded.config
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.loaded.hash.clone(),
            seed: self.seed,
        }
    }
}

/// Series, dates and (for panel input) the underlying panels.
pub struct Prepared {
    pub names: Vec<String>,
    pub dates: Vec<String>,
    pub series: Vec<DVector<f64>>,
    pub panel: Option<(PricePanel, ReturnPanel)>,
}

fn policy(z: ZeroDividend) -> ZeroDividendPolicy {
    match z {
        ZeroDividend::Drop => ZeroDividendPolicy::Drop,
        ZeroDividend::Floor(f) => ZeroDividendPolicy::Floor(f),
    }
}

fn return_names(tickers: &[String]) -> Vec<String> {
    tickers
        .iter()
        .map(|t| format!("k_{t}"))
        .chain(tickers.iter().map(|t| format!("alpha_{t}")))
        .collect()
}

pub fn read_series_csv(path: &Path) -> CliResult<(Vec<String>, Vec<String>, Vec<DVector<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("date") || headers.len() < 2 {
        return Err(CliError::Config(format!(
            "{}: header must be `date,<variable>...`",
            path.display()
        )));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut dates = Vec::new();
    let mut series = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        dates.push(rec.get(0).unwrap_or("").to_string());
        let mut v = DVector::zeros(names.len());
        for i in 0..names.len() {
            let raw = rec.get(i + 1).unwrap_or("");
            v[i] = raw
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "{} line {line}: `{raw}` is not a finite number",
                        path.display()
                    ))
                })?;
        }
        series.push(v);
    }
    Ok((names, dates, series))
}

pub fn prepare(ctx: &RunContext) -> CliResult<Prepared> {
    let cfg = ctx.config();
    if let Some(p) = &cfg.data.panel {
        let panel = read_panel_csv(&ctx.loaded.resolve(p)).in_module("ddm")?;
        let returns = panel_to_returns(&panel, policy(cfg.data.zero_dividend)).in_module("ddm")?;
        Ok(Prepared {
            names: return_names(&returns.tickers),
            dates: returns.dates.clone(),
            series: returns.series(),
            panel: Some((panel, returns)),
        })
    } else {
        let p = cfg.data.series.as_ref().expect("validated");
        let (names, dates, series) = read_series_csv(&ctx.loaded.resolve(p))?;
        Ok(Prepared {
            names,
            dates,
            series,
            panel: None,
        })
    }
}

pub fn build_model(cfg: &RunConfig) -> CliResult<MsVarModel> {
    let m = &cfg.model;
    let dims = ModelDims::new(m.variables, m.exogenous, m.lags).in_module("priors")?;
    let mn = &cfg.prior.minnesota;
    let priors = cfg
        .prior
        .regimes
        .iter()
        .map(|r| {
            let mc = MinnesotaConfig {
                phi: mn.phi.clone(),
                eps: mn.eps,
                lambda1: mn.lambda1,
                lambda2: mn.lambda2,
                tau: mn.tau.clone(),
                p: m.lags,
                l: m.exogenous,
                intercept_mean: r.intercept_mean.clone(),
            };
            let v0 = DMatrix::from_diagonal(&DVector::from_column_slice(&r.v0_diag));
            minnesota_prior(&mc, r.nu0.unwrap_or(m.variables as f64 + 2.0), v0)
        })
        .collect::<msvar::Result<Vec<_>>>()
        .map_err(|e| CliError::Config(format!("priors: {e}")))?;
    let rows: Vec<f64> = cfg.prior.dirichlet.iter().flatten().copied().collect();
    let dirichlet =
        DirichletPriorSet::new(DMatrix::from_row_slice(m.regimes + 1, m.regimes, &rows))
            .map_err(|e| CliError::Config(format!("prior.dirichlet: {e}")))?;
    MsVarModel::new(dims, priors, dirichlet).map_err(|e| CliError::Config(format!("model: {e}")))
}

/// Observations after the `p` pre-sample rows, the last `p` rows as
/// forecast history and the matching dates.
pub fn observations(
    prep: &Prepared,
    model: &MsVarModel,
) -> CliResult<(Observations, Vec<DVector<f64>>, Vec<String>)> {
    let p = model.dims.p;
    if prep.names.len() != model.dims.n {
        return Err(CliError::Config(format!(
            "data has {} variables, model.variables is {}",
            prep.names.len(),
            model.dims.n
        )));
    }
    let obs = Observations::from_series_with_intercept(&prep.series, p).in_module("data")?;
    let history = prep.series[prep.series.len() - p..].to_vec();
    Ok((obs, history, prep.dates[p..].to_vec()))
}

fn gibbs_settings(cfg: &RunConfig) -> GibbsSettings {
    GibbsSettings {
        burn_in: cfg.sampler.burn_in,
        thin: cfg.sampler.thin,
        draws: cfg.sampler.draws,
        update: match cfg.sampler.update {
            UpdateMode::Marginal => RegimeUpdate::Marginal,
            UpdateMode::Joint => RegimeUpdate::Joint,
        },
    }
}

fn need_forecast(cfg: &RunConfig) -> CliResult<&crate::config::ForecastConfig> {
    cfg.forecast
        .as_ref()
        .ok_or_else(|| CliError::Config("config is missing key `forecast`".into()))
}

/// Writes the return panel of a price/dividend CSV.
pub fn cmd_ingest(
    input: &Path,
    input_hash: String,
    seed: u64,
    zero: ZeroDividend,
    out_dir: &Path,
) -> CliResult<PathBuf> {
    let panel = read_panel_csv(input).in_module("ddm")?;
    let returns = panel_to_returns(&panel, policy(zero)).in_module("ddm")?;
    let prov = Provenance {
        config_hash: input_hash,
        seed,
    };
    let mut header = vec!["date".to_string()];
    header.extend(return_names(&returns.tickers));
    let mut rep = Report::create(out_dir, "returns.csv", &prov, &header)?;
    for r in 0..returns.len() {
        let mut row = vec![returns.dates[r].clone()];
        row.extend(returns.observation(r).iter().map(|&v| fmt_f64(v)));
        rep.row(&row)?;
    }
    let path = rep.finish()?;
    println!("periods read: {}", panel.dates.len());
    println!("return rows written: {}", returns.len());
    println!(
        "periods dropped for zero dividends: {}",
        returns.dropped.len()
    );
    for (i, t) in returns.tickers.iter().enumerate() {
        let k = returns.k.column(i);
        let a = returns.alpha.column(i);
        println!(
            "{t}: mean k {:.6}, mean log dividend yield {:.6}",
            k.mean(),
            a.mean()
        );
    }
    Ok(path)
}

pub fn cmd_mle(ctx: &RunContext) -> CliResult<PathBuf> {
    let cfg = ctx.config();
    let mle = cfg
        .mle
        .as_ref()
        .ok_or_else(|| CliError::Config("config is missing key `mle`".into()))?;
    let prep = prepare(ctx)?;
    let (names, columns): (Vec<String>, Vec<Vec<f64>>) = match &prep.panel {
        Some((_, r)) => (
            r.tickers.clone(),
            (0..r.tickers.len())
                .map(|i| r.k.column(i).iter().map(|v| v * mle.scale).collect())
                .collect(),
        ),
        None => (
            prep.names.clone(),
            (0..prep.names.len())
                .map(|i| prep.series.iter().map(|y| y[i] * mle.scale).collect())
                .collect(),
        ),
    };
    let nr = mle.regimes;
    let mut header = strings(&["series", "regime", "mean", "sd"]);
    header.extend((1..=nr).map(|j| format!("p_to_{j}")));
    header.extend(strings(&[
        "persistence",
        "ergodic",
        "long_run_mean",
        "loglik",
    ]));
    let mut rep = Report::create(&ctx.out_dir, "mle.csv", &ctx.provenance(), &header)?;
    let settings = EmSettings {
        tol: mle.tol,
        max_iter: mle.max_iter,
        restarts: mle.restarts,
    };
    for (k, (name, y)) in names.iter().zip(&columns).enumerate() {
        let mut rng = RngStream::new(ctx.seed, k as u64);
        let fit = em_fit_msar0(y, nr, &settings, &mut rng).in_module("estimation")?;
        let summary =
            summarize_chain(&fit.transition, &fit.means, ROW_SUM_TOL).in_module("estimation")?;
        for j in 0..nr {
            let mut row = vec![
                name.clone(),
                (j + 1).to_string(),
                fmt_f64(fit.means[j]),
                fmt_f64(fit.variances[j].sqrt()),
            ];
            row.extend((0..nr).map(|i| fmt_f64(fit.transition[(j, i)])));
            row.extend([
                fmt_f64(summary.persistence[j]),
                fmt_f64(summary.ergodic[j]),
                fmt_f64(summary.long_run_mean),
                fmt_f64(fit.loglik),
            ]);
            rep.row(&row)?;
        }
        let m = y.len() as f64;
        let mean = y.iter().sum::<f64>() / m;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        let mut row = vec![name.clone(), "pooled".into(), fmt_f64(mean), fmt_f64(sd)];
        row.extend(std::iter::repeat_n(String::new(), nr + 4));
        rep.row(&row)?;
    }
    rep.finish()
}

pub fn cmd_gibbs(ctx: &RunContext) -> CliResult<Vec<PathBuf>> {
    let cfg = ctx.config();
    let model = build_model(cfg)?;
    let prep = prepare(ctx)?;
    let (obs, _, dates) = observations(&prep, &model)?;
    let out = gibbs_sp(
        &model,
        &obs,
        &gibbs_settings(cfg),
        &mut RngStream::new(ctx.seed, 0),
    )
    .in_module("sampler")?;
    let nr = model.n_regimes();
    let mut header = vec!["date".to_string()];
    header.extend((1..=nr).map(|j| format!("prob_regime_{j}")));
    header.extend(prep.names.iter().cloned());
    let mut sm = Report::create(
        &ctx.out_dir,
        "gibbs_smoothed.csv",
        &ctx.provenance(),
        &header,
    )?;
    for u in 0..obs.len() {
        let mut row = vec![dates[u].clone()];
        row.extend(out.mean_smoothed.row(u).iter().map(|&v| fmt_f64(v)));
        row.extend(obs.y[u].iter().map(|&v| fmt_f64(v)));
        sm.row(&row)?;
    }
    let mut header = strings(&["draw", "final_regime"]);
    header.extend((1..=nr).map(|j| format!("visits_{j}")));
    header.extend((1..=nr).map(|j| format!("p_0_{j}")));
    for i in 1..=nr {
        header.extend((1..=nr).map(|j| format!("p_{i}_{j}")));
    }
    let mut dr = Report::create(&ctx.out_dir, "gibbs_draws.csv", &ctx.provenance(), &header)?;
    for (l, d) in out.draws.iter().enumerate() {
        let mut row = vec![
            (l + 1).to_string(),
            (d.path.last().unwrap_or(0) + 1).to_string(),
        ];
        row.extend((0..nr).map(|j| {
            d.path
                .states()
                .iter()
                .filter(|&&s| s == j)
                .count()
                .to_string()
        }));
        let full = d.transition.full();
        for i in 0..=nr {
            row.extend((0..nr).map(|j| fmt_f64(full[(i, j)])));
        }
        dr.row(&row)?;
    }
    if let Some(rate) = out.acceptance_rate {
        println!("joint update acceptance rate: {rate:.4}");
    }
    Ok(vec![sm.finish()?, dr.finish()?])
}

fn run_forecast(
    ctx: &RunContext,
    model: &MsVarModel,
    prep: &Prepared,
    horizon: usize,
) -> CliResult<ForecastEnsemble> {
    let (obs, history, _) = observations(prep, model)?;
    let exog = vec![DVector::from_element(1, 1.0); horizon];
    let settings = ForecastSettings {
        horizon,
        gibbs: gibbs_settings(ctx.config()),
    };
    simulate_joint(model, &obs, &history, &exog, &settings, ctx.seed).in_module("sampler")
}

fn quantile_sorted(v: &mut [f64], level: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    msvar::ddm::quantile(v, level)
}

pub fn cmd_forecast(ctx: &RunContext) -> CliResult<Vec<PathBuf>> {
    let cfg = ctx.config();
    let fc = need_forecast(cfg)?;
    let model = build_model(cfg)?;
    let prep = prepare(ctx)?;
    let ens = run_forecast(ctx, &model, &prep, fc.horizon)?;
    let mut header = strings(&["horizon", "variable", "mean"]);
    header.extend(fc.levels.iter().map(|&q| level_label(q)));
    let mut bands = Report::create(
        &ctx.out_dir,
        "forecast_bands.csv",
        &ctx.provenance(),
        &header,
    )?;
    for h in 0..fc.horizon {
        for (i, name) in prep.names.iter().enumerate() {
            let mut v: Vec<f64> = ens.paths.iter().map(|p| p[h][i]).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let mut row = vec![(h + 1).to_string(), name.clone(), fmt_f64(mean)];
            for &q in &fc.levels {
                row.push(fmt_f64(quantile_sorted(&mut v, q)));
            }
            bands.row(&row)?;
        }
    }
    let mut header = strings(&["draw", "seed", "stream", "horizon", "regime"]);
    header.extend(prep.names.iter().cloned());
    let mut draws = Report::create(
        &ctx.out_dir,
        "forecast_ensemble.csv",
        &ctx.provenance(),
        &header,
    )?;
    let t = ens.gibbs.draws.first().map_or(0, |d| d.path.len());
    for (l, path) in ens.paths.iter().enumerate() {
        let (seed, stream) = ens.seeds[l];
        for (h, y) in path.iter().enumerate() {
            let mut row = vec![
                (l + 1).to_string(),
                seed.to_string(),
                stream.to_string(),
                (h + 1).to_string(),
                (ens.draws[l].path.states()[t + h] + 1).to_string(),
            ];
            row.extend(y.iter().map(|&v| fmt_f64(v)));
            draws.row(&row)?;
        }
    }
    Ok(vec![bands.finish()?, draws.finish()?])
}

pub fn cmd_tailprob(ctx: &RunContext) -> CliResult<PathBuf> {
    let cfg = ctx.config();
    let specs_cfg = cfg
        .tailprob
        .as_ref()
        .ok_or_else(|| CliError::Config("config is missing key `tailprob`".into()))?;
    let model = build_model(cfg)?;
    let prep = prepare(ctx)?;
    let (obs, history, _) = observations(&prep, &model)?;
    let specs: Vec<TiltSpec> = specs_cfg
        .iter()
        .map(|s| TiltSpec {
            u: s.u,
            z: DVector::from_column_slice(&s.z),
            x: s.x,
        })
        .collect();
    let horizon = specs.iter().map(|s| s.u).max().unwrap_or(1);
    let exog = vec![DVector::from_element(1, 1.0); horizon];
    let gs = gibbs_settings(cfg);
    let est = is_tail_probability(
        &model,
        &obs,
        &history,
        &exog,
        &specs,
        &IsSettings {
            gibbs: gs,
            zero_tilt: false,
        },
        ctx.seed,
    )
    .in_module("importance")?;
    let naive = naive_tail_probability(&model, &obs, &history, &exog, &specs, &gs, ctx.seed)
        .in_module("importance")?;
    let header = strings(&[
        "u",
        "x",
        "p_hat",
        "se",
        "ess",
        "vrf",
        "naive_p_hat",
        "naive_se",
    ]);
    let mut rep = Report::create(&ctx.out_dir, "tailprob.csv", &ctx.provenance(), &header)?;
    for (e, n) in est.iter().zip(&naive) {
        rep.row(&[
            e.u.to_string(),
            fmt_f64(e.x),
            fmt_f64(e.p_hat),
            fmt_f64(e.std_error),
            fmt_f64(e.ess),
            fmt_f64(e.variance_reduction),
            fmt_f64(n.p_hat),
            fmt_f64(n.std_error),
        ])?;
    }
    rep.finish()
}

pub fn cmd_ddm(ctx: &RunContext) -> CliResult<PathBuf> {
    let cfg = ctx.config();
    let fc = need_forecast(cfg)?;
    let model = build_model(cfg)?;
    let prep = prepare(ctx)?;
    let (panel, returns) = prep
        .panel
        .as_ref()
        .ok_or_else(|| CliError::Config("ddm needs `data.panel` input".into()))?;
    if model.dims.n != 2 * returns.tickers.len() {
        return Err(CliError::Config(
            "ddm needs model.variables = 2 x number of tickers".into(),
        ));
    }
    let ens = run_forecast(ctx, &model, &prep, fc.horizon)?;
    let last = panel.prices.nrows() - 1;
    let p_now: Vec<f64> = panel.prices.row(last).iter().copied().collect();
    let proj = project_prices(&returns.tickers, &p_now, &ens.paths).in_module("ddm")?;
    let rows = forecast_bands(&proj, &fc.levels).in_module("ddm")?;
    let mut header = strings(&["horizon", "ticker", "mean"]);
    header.extend(fc.levels.iter().map(|&q| level_label(q)));
    header.push("excluded_paths".into());
    let mut rep = Report::create(&ctx.out_dir, "ddm.csv", &ctx.provenance(), &header)?;
    for r in rows {
        let mut row = vec![r.horizon.to_string(), r.ticker.clone(), fmt_f64(r.mean)];
        row.extend(r.quantiles.iter().map(|&(_, v)| fmt_f64(v)));
        row.push(r.excluded.to_string());
        rep.row(&row)?;
    }
    rep.finish()
}
