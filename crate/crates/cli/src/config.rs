//! Run configuration: a single JSON document. Unknown keys are rejected and
//! missing required keys are reported by name.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub prior: PriorConfig,
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub forecast: Option<ForecastConfig>,
    #[serde(default)]
    pub tailprob: Option<Vec<TiltConfig>>,
    #[serde(default)]
    pub mle: Option<MleConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Price/dividend panel: `date, price_<ticker>, dividend_<ticker>`.
    #[serde(default)]
    pub panel: Option<PathBuf>,
    /// Ready-made series: `date, <variable>...`.
    #[serde(default)]
    pub series: Option<PathBuf>,
    #[serde(default)]
    pub zero_dividend: ZeroDividend,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum ZeroDividend {
    #[default]
    Drop,
    Floor(f64),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variables: usize,
    pub lags: usize,
    pub exogenous: usize,
    pub regimes: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub minnesota: MinnesotaSection,
    pub regimes: Vec<RegimePriorSection>,
    /// `(N+1) x N` concentrations; row 0 is the initial state.
    pub dirichlet: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinnesotaSection {
    pub phi: Vec<f64>,
    pub eps: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub tau: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimePriorSection {
    #[serde(default)]
    pub intercept_mean: Option<Vec<f64>>,
    pub v0_diag: Vec<f64>,
    #[serde(default)]
    pub nu0: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum UpdateMode {
    #[default]
    Marginal,
    Joint,
}

fn default_burn_in() -> usize {
    500
}

fn default_thin() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub draws: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default)]
    pub update: UpdateMode,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_levels() -> Vec<f64> {
    vec![0.025, 0.5, 0.975]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    pub horizon: usize,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TiltConfig {
    pub u: usize,
    pub z: Vec<f64>,
    pub x: f64,
}

fn default_restarts() -> usize {
    20
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    2000
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MleConfig {
    pub regimes: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Multiplier applied to the series before fitting (100 for percent).
    #[serde(default = "default_scale")]
    pub scale: f64,
}

/// Parsed configuration with the path it came from and its SHA-256.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub hash: String,
    pub base_dir: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(Self {
            config,
            hash: sha256_hex(&bytes),
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    /// Resolves a data path relative to the config file.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

fn need(cond: bool, msg: impl Into<String>) -> CliResult<()> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(msg.into()))
    }
}

impl RunConfig {
    /// Checks every dimension against `model` before any data is read.
    pub fn validate(&self) -> CliResult<()> {
        let m = &self.model;
        let (n, nr) = (m.variables, m.regimes);
        need(
            self.data.panel.is_some() != self.data.series.is_some(),
            "data needs exactly one of `panel` or `series`",
        )?;
        if let ZeroDividend::Floor(f) = self.data.zero_dividend {
            need(
                f > 0.0 && f.is_finite(),
                "data.zero_dividend.floor must be positive",
            )?;
        }
        need(n > 0, "model.variables must be positive")?;
        need(nr > 0, "model.regimes must be positive")?;
        need(
            m.exogenous == 1,
            "model.exogenous must be 1 (intercept only)",
        )?;
        let mn = &self.prior.minnesota;
        need(
            mn.phi.len() == n,
            format!("prior.minnesota.phi needs {n} entries"),
        )?;
        need(
            mn.tau.len() == n,
            format!("prior.minnesota.tau needs {n} entries"),
        )?;
        need(
            self.prior.regimes.len() == nr,
            format!("prior.regimes needs {nr} entries"),
        )?;
        for (k, r) in self.prior.regimes.iter().enumerate() {
            need(
                r.v0_diag.len() == n,
                format!("prior.regimes[{k}].v0_diag needs {n} entries"),
            )?;
            if let Some(c) = &r.intercept_mean {
                need(
                    c.len() == n,
                    format!("prior.regimes[{k}].intercept_mean needs {n} entries"),
                )?;
            }
        }
        need(
            self.prior.dirichlet.len() == nr + 1
                && self.prior.dirichlet.iter().all(|r| r.len() == nr),
            format!("prior.dirichlet must be {}x{nr}", nr + 1),
        )?;
        need(
            self.sampler.draws > 0 && self.sampler.thin > 0,
            "sampler.draws and sampler.thin must be positive",
        )?;
        if let Some(f) = &self.forecast {
            need(f.horizon > 0, "forecast.horizon must be positive")?;
            need(
                f.levels.iter().all(|q| (0.0..=1.0).contains(q)),
                "forecast.levels must lie in [0, 1]",
            )?;
        }
        if let Some(specs) = &self.tailprob {
            for (k, s) in specs.iter().enumerate() {
                need(s.z.len() == n, format!("tailprob[{k}].z needs {n} entries"))?;
                need(s.u > 0, format!("tailprob[{k}].u must be at least 1"))?;
            }
        }
        Ok(())
    }
}
