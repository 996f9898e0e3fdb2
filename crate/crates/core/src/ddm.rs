//! Dividend discount pipeline: price/dividend panels, the return and
//! dividend-yield transform, and price projection from simulated paths.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Prices and dividends, one column per ticker.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub dates: Vec<String>,
    pub tickers: Vec<String>,
    pub prices: DMatrix<f64>,
    pub dividends: DMatrix<f64>,
}

impl PricePanel {
    /// Reads `date, price_<ticker>..., dividend_<ticker>...` in any column
    /// order. Every ticker needs both a price and a dividend column.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Csv {
                context: "reading header".into(),
                source: e,
            })?
            .clone();
        let date_col = headers
            .iter()
            .position(|h| h == "date")
            .ok_or_else(|| Error::InvalidInput("header has no `date` column".into()))?;
        let mut tickers = Vec::new();
        let mut price_cols = Vec::new();
        for (k, h) in headers.iter().enumerate() {
            if let Some(t) = h.strip_prefix("price_") {
                tickers.push(t.to_string());
                price_cols.push(k);
            }
        }
        if tickers.is_empty() {
            return Err(Error::InvalidInput(
                "header has no `price_<ticker>` columns".into(),
            ));
        }
        let mut div_cols = Vec::with_capacity(tickers.len());
        for t in &tickers {
            let name = format!("dividend_{t}");
            div_cols.push(
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::InvalidInput(format!("missing column `{name}`")))?,
            );
        }
        for h in headers.iter() {
            if let Some(t) = h.strip_prefix("dividend_") {
                if !tickers.iter().any(|x| x == t) {
                    return Err(Error::InvalidInput(format!(
                        "column `{h}` has no matching price column"
                    )));
                }
            }
        }
        let m = tickers.len();
        let mut dates = Vec::new();
        let mut prices = Vec::new();
        let mut dividends = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Csv {
                context: "reading panel".into(),
                source: e,
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let field = |k: usize, what: &str| -> Result<f64> {
                let raw = rec.get(k).unwrap_or("");
                raw.parse::<f64>().map_err(|_| {
                    Error::InvalidInput(format!("line {line}: {what} `{raw}` is not a number"))
                })
            };
            dates.push(rec.get(date_col).unwrap_or("").to_string());
            for i in 0..m {
                let p = field(price_cols[i], &format!("price_{}", tickers[i]))?;
                let d = field(div_cols[i], &format!("dividend_{}", tickers[i]))?;
                if !(p > 0.0) || !p.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "line {line}: price of {} must be positive",
                        tickers[i]
                    )));
                }
                if !(d >= 0.0) || !d.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "line {line}: dividend of {} must be non-negative",
                        tickers[i]
                    )));
                }
                prices.push(p);
                dividends.push(d);
            }
        }
        let rows = dates.len();
        if rows < 2 {
            return Err(Error::InvalidInput("panel needs at least two dates".into()));
        }
        Ok(Self {
            dates,
            tickers,
            prices: DMatrix::from_row_slice(rows, m, &prices),
            dividends: DMatrix::from_row_slice(rows, m, &dividends),
        })
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }
}

pub fn read_panel_csv(path: &Path) -> Result<PricePanel> {
    PricePanel::from_reader(std::fs::File::open(path)?)
}

/// Treatment of periods where some ticker pays no dividend, which leaves
/// the log dividend yield undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZeroDividendPolicy {
    /// Skip the period.
    Drop,
    /// Replace the dividend by `floor · P_{t-1}` in both transforms.
    Floor(f64),
}

/// Total returns `k_t = (P_t + d_t) / P_{t-1} - 1` and log dividend yields
/// `α̃_t = ln(d_t / P_{t-1})`, one row per retained period.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    pub dates: Vec<String>,
    pub tickers: Vec<String>,
    pub k: DMatrix<f64>,
    pub alpha: DMatrix<f64>,
    /// `P_{t-1}` and `P_t` of each retained row.
    pub prev_prices: DMatrix<f64>,
    pub prices: DMatrix<f64>,
    /// Dates of dropped periods.
    pub dropped: Vec<String>,
}

impl ReturnPanel {
    /// Stacked observation `(k_1..k_m, α̃_1..α̃_m)` for row `r`.
    pub fn observation(&self, r: usize) -> DVector<f64> {
        let m = self.tickers.len();
        DVector::from_fn(2 * m, |i, _| {
            if i < m {
                self.k[(r, i)]
            } else {
                self.alpha[(r, i - m)]
            }
        })
    }

    pub fn series(&self) -> Vec<DVector<f64>> {
        (0..self.k.nrows()).map(|r| self.observation(r)).collect()
    }

    pub fn len(&self) -> usize {
        self.k.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.k.nrows() == 0
    }
}

pub fn panel_to_returns(panel: &PricePanel, policy: ZeroDividendPolicy) -> Result<ReturnPanel> {
    let (rows, m) = panel.prices.shape();
    let mut kept: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut dropped = Vec::new();
    for t in 1..rows {
        let mut k = Vec::with_capacity(m);
        let mut a = Vec::with_capacity(m);
        let mut skip = false;
        for i in 0..m {
            let prev = panel.prices[(t - 1, i)];
            let mut d = panel.dividends[(t, i)];
            if d == 0.0 {
                match policy {
                    ZeroDividendPolicy::Drop => {
                        skip = true;
                        break;
                    }
                    ZeroDividendPolicy::Floor(f) => {
                        if !(f > 0.0) {
                            return Err(Error::Domain("dividend floor must be positive".into()));
                        }
                        d = f * prev;
                    }
                }
            }
            k.push((panel.prices[(t, i)] + d) / prev - 1.0);
            a.push((d / prev).ln());
        }
        if skip {
            dropped.push(panel.dates[t].clone());
        } else {
            kept.push((t, k, a));
        }
    }
    if kept.is_empty() {
        return Err(Error::InvalidInput(
            "every period was dropped for zero dividends".into(),
        ));
    }
    let n = kept.len();
    Ok(ReturnPanel {
        dates: kept
            .iter()
            .map(|(t, _, _)| panel.dates[*t].clone())
            .collect(),
        tickers: panel.tickers.clone(),
        k: DMatrix::from_fn(n, m, |r, i| kept[r].1[i]),
        alpha: DMatrix::from_fn(n, m, |r, i| kept[r].2[i]),
        prev_prices: DMatrix::from_fn(n, m, |r, i| panel.prices[(kept[r].0 - 1, i)]),
        prices: DMatrix::from_fn(n, m, |r, i| panel.prices[(kept[r].0, i)]),
        dropped,
    })
}

/// One-period price factor `1 + k - exp(α̃)`.
pub fn price_factor(k: f64, alpha: f64) -> f64 {
    1.0 + k - alpha.exp()
}

/// `P_t` recovered from `P_{t-1}`, `k_t` and `α̃_t`.
pub fn reconstruct_price(prev: f64, k: f64, alpha: f64) -> f64 {
    price_factor(k, alpha) * prev
}

/// Projected prices `prices[ℓ][h][i]` and, per draw and ticker, whether any
/// factor along the horizon was non-positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceProjection {
    pub tickers: Vec<String>,
    pub prices: Vec<Vec<Vec<f64>>>,
    pub excluded: Vec<Vec<bool>>,
}

/// Compounds simulated `(k, α̃)` paths from the current prices.
pub fn project_prices(
    tickers: &[String],
    p_now: &[f64],
    paths: &[Vec<DVector<f64>>],
) -> Result<PriceProjection> {
    let m = p_now.len();
    if tickers.len() != m {
        return Err(Error::Dimension("tickers and prices disagree".into()));
    }
    let mut prices = Vec::with_capacity(paths.len());
    let mut excluded = Vec::with_capacity(paths.len());
    for path in paths {
        let mut current = p_now.to_vec();
        let mut flags = vec![false; m];
        let mut rows = Vec::with_capacity(path.len());
        for y in path {
            if y.len() != 2 * m {
                return Err(Error::Dimension(format!(
                    "simulated vector has {} entries, expected {}",
                    y.len(),
                    2 * m
                )));
            }
            for i in 0..m {
                let f = price_factor(y[i], y[m + i]);
                if !(f > 0.0) {
                    flags[i] = true;
                }
                current[i] *= f;
            }
            rows.push(current.clone());
        }
        prices.push(rows);
        excluded.push(flags);
    }
    Ok(PriceProjection {
        tickers: tickers.to_vec(),
        prices,
        excluded,
    })
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = level * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandRow {
    /// Steps ahead, from 1.
    pub horizon: usize,
    pub ticker: String,
    /// Ensemble mean, reported as the theoretical price.
    pub mean: f64,
    /// `(level, value)` pairs in the order requested.
    pub quantiles: Vec<(f64, f64)>,
    pub excluded: usize,
}

pub const MIN_BAND_DRAWS: usize = 100;

/// Mean and quantile bands per horizon and ticker over non-excluded draws.
pub fn forecast_bands(projection: &PriceProjection, levels: &[f64]) -> Result<Vec<BandRow>> {
    if levels.iter().any(|&q| !(0.0..=1.0).contains(&q)) {
        return Err(Error::Domain("quantile levels must lie in [0, 1]".into()));
    }
    let horizon = projection.prices.first().map_or(0, Vec::len);
    let mut rows = Vec::new();
    for h in 0..horizon {
        for (i, ticker) in projection.tickers.iter().enumerate() {
            let mut vals: Vec<f64> = projection
                .prices
                .iter()
                .zip(&projection.excluded)
                .filter(|(_, ex)| !ex[i])
                .map(|(p, _)| p[h][i])
                .collect();
            let excluded = projection.prices.len() - vals.len();
            if vals.len() < MIN_BAND_DRAWS {
                return Err(Error::InvalidInput(format!(
                    "{ticker}: only {} usable draws, need {MIN_BAND_DRAWS}",
                    vals.len()
                )));
            }
            vals.sort_by(f64::total_cmp);
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            rows.push(BandRow {
                horizon: h + 1,
                ticker: ticker.clone(),
                mean,
                quantiles: levels.iter().map(|&q| (q, quantile(&vals, q))).collect(),
                excluded,
            });
        }
    }
    Ok(rows)
}
