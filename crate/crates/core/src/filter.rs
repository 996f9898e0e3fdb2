//! Hamilton filter and Kim smoother for a discrete hidden Markov chain.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Filtered and one-step predicted regime probabilities.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    /// Row `u` is `z_{u|u}`.
    pub filtered: DMatrix<f64>,
    /// Row `u` is `z_{u+1|u}`.
    pub predicted: DMatrix<f64>,
    /// `z_{1|0}`.
    pub initial: DVector<f64>,
    /// Log predictive densities `ln η_{u,j}`.
    pub log_eta: DMatrix<f64>,
    pub loglik: f64,
}

impl FilterOutput {
    /// `z_{u|u-1}`, with `z_{1|0}` for `u = 0`.
    pub fn prior_at(&self, u: usize) -> DVector<f64> {
        if u == 0 {
            self.initial.clone()
        } else {
            self.predicted.row(u - 1).transpose()
        }
    }
}

/// Smoothed probabilities; row `u` is `z_{u|t}`.
#[derive(Debug, Clone)]
pub struct SmoothedOutput {
    pub smoothed: DMatrix<f64>,
}

fn check_transition(p: &DMatrix<f64>, z10: &[f64]) -> Result<()> {
    let nr = p.ncols();
    if p.nrows() != nr || z10.len() != nr {
        return Err(Error::Dimension(
            "transition matrix and initial law disagree".into(),
        ));
    }
    for i in 0..nr {
        let s: f64 = p.row(i).sum();
        if (s - 1.0).abs() > 1e-10 || p.row(i).iter().any(|&v| v < 0.0) {
            return Err(Error::Domain(format!(
                "transition row {} is not a probability vector",
                i + 1
            )));
        }
    }
    let s: f64 = z10.iter().sum();
    if (s - 1.0).abs() > 1e-10 || z10.iter().any(|&v| v < 0.0) {
        return Err(Error::Domain(
            "initial regime law is not a probability vector".into(),
        ));
    }
    Ok(())
}

/// Filter on densities `eta` (`t x N`), transition `p` (rows sum to one)
/// and initial law `z10`.
pub fn hamilton_filter(eta: &DMatrix<f64>, p: &DMatrix<f64>, z10: &[f64]) -> Result<FilterOutput> {
    hamilton_filter_log(&eta.map(f64::ln), p, z10)
}

/// Same as [`hamilton_filter`] but on log densities; each row is shifted by
/// its maximum before exponentiating.
pub fn hamilton_filter_log(
    log_eta: &DMatrix<f64>,
    p: &DMatrix<f64>,
    z10: &[f64],
) -> Result<FilterOutput> {
    check_transition(p, z10)?;
    let (t, nr) = (log_eta.nrows(), p.ncols());
    if log_eta.ncols() != nr {
        return Err(Error::Dimension(
            "density matrix has the wrong number of regimes".into(),
        ));
    }
    let mut filtered = DMatrix::zeros(t, nr);
    let mut predicted = DMatrix::zeros(t, nr);
    let mut prior = DVector::from_column_slice(z10);
    let mut loglik = 0.0;
    let pt = p.transpose();
    for u in 0..t {
        let row = log_eta.row(u);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            if m == f64::NEG_INFINITY {
                return Err(Error::FilterFailure { step: u + 1 });
            }
            return Err(Error::Domain(format!(
                "non-finite predictive density at step {}",
                u + 1
            )));
        }
        let joint = DVector::from_fn(nr, |j, _| prior[j] * (row[j] - m).exp());
        let total = joint.sum();
        if !(total > 0.0) {
            return Err(Error::FilterFailure { step: u + 1 });
        }
        let post = joint / total;
        loglik += total.ln() + m;
        prior = &pt * &post;
        filtered.set_row(u, &post.transpose());
        predicted.set_row(u, &prior.transpose());
    }
    Ok(FilterOutput {
        filtered,
        predicted,
        initial: DVector::from_column_slice(z10),
        log_eta: log_eta.clone(),
        loglik,
    })
}

/// Backward pass `z_{u|t} = z_{u|u} ⊙ P (z_{u+1|t} ⊘ z_{u+1|u})` with `P`
/// row-stochastic; a zero predicted probability contributes a zero ratio.
pub fn kim_smoother(out: &FilterOutput, p: &DMatrix<f64>) -> Result<SmoothedOutput> {
    let (t, nr) = out.filtered.shape();
    if p.nrows() != nr || p.ncols() != nr {
        return Err(Error::Dimension(
            "transition matrix has the wrong size".into(),
        ));
    }
    let mut smoothed = DMatrix::zeros(t, nr);
    if t == 0 {
        return Ok(SmoothedOutput { smoothed });
    }
    smoothed.set_row(t - 1, &out.filtered.row(t - 1));
    for u in (0..t - 1).rev() {
        let ratio = DVector::from_fn(nr, |j, _| {
            let den = out.predicted[(u, j)];
            if den > 0.0 {
                smoothed[(u + 1, j)] / den
            } else {
                0.0
            }
        });
        let back = p * ratio;
        for i in 0..nr {
            smoothed[(u, i)] = out.filtered[(u, i)] * back[i];
        }
    }
    Ok(SmoothedOutput { smoothed })
}

/// Pairwise smoothed probabilities `Pr(s_u = i, s_{u+1} = j | data)` for
/// `u = 0..t-1`.
pub fn smoothed_pairs(
    out: &FilterOutput,
    smoothed: &SmoothedOutput,
    p: &DMatrix<f64>,
) -> Vec<DMatrix<f64>> {
    let (t, nr) = out.filtered.shape();
    (0..t.saturating_sub(1))
        .map(|u| {
            DMatrix::from_fn(nr, nr, |i, j| {
                let den = out.predicted[(u, j)];
                if den > 0.0 {
                    out.filtered[(u, i)] * p[(i, j)] * smoothed.smoothed[(u + 1, j)] / den
                } else {
                    0.0
                }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::RngStream;

    fn brute_force(eta: &DMatrix<f64>, p: &DMatrix<f64>, z10: &[f64]) -> (DMatrix<f64>, f64) {
        let (t, nr) = eta.shape();
        let mut marg = DMatrix::zeros(t, nr);
        let mut total = 0.0;
        for code in 0..nr.pow(t as u32) {
            let mut c = code;
            let states: Vec<usize> = (0..t)
                .map(|_| {
                    let s = c % nr;
                    c /= nr;
                    s
                })
                .collect();
            let mut w = z10[states[0]] * eta[(0, states[0])];
            for u in 1..t {
                w *= p[(states[u - 1], states[u])] * eta[(u, states[u])];
            }
            total += w;
            for u in 0..t {
                marg[(u, states[u])] += w;
            }
        }
        (marg / total, total.ln())
    }

    #[test]
    fn matches_enumeration() {
        let mut rng = RngStream::new(9, 0);
        let eta = DMatrix::from_fn(5, 3, |_, _| 0.05 + rng.uniform());
        let p = DMatrix::from_row_slice(3, 3, &[0.7, 0.2, 0.1, 0.3, 0.5, 0.2, 0.05, 0.15, 0.8]);
        let z10 = [0.2, 0.5, 0.3];
        let out = hamilton_filter(&eta, &p, &z10).unwrap();
        let sm = kim_smoother(&out, &p).unwrap();
        let (marg, ll) = brute_force(&eta, &p, &z10);
        assert!((sm.smoothed - marg).amax() < 1e-13);
        assert!((out.loglik - ll).abs() < 1e-12);
    }

    #[test]
    fn log_scale_survives_underflow() {
        let log_eta = DMatrix::from_row_slice(2, 2, &[-2000.0, -2001.0, -1500.0, -1499.0]);
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        let out = hamilton_filter_log(&log_eta, &p, &[0.5, 0.5]).unwrap();
        assert!(out.loglik.is_finite());
        assert!(out.filtered.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn all_zero_row_fails() {
        let eta = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        assert!(matches!(
            hamilton_filter(&eta, &p, &[0.5, 0.5]),
            Err(Error::FilterFailure { step: 2 })
        ));
    }

    #[test]
    fn zero_predicted_probability_is_guarded() {
        // regime 2 can never be entered after step 1
        let eta = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 1.0, 0.5, 1.0]);
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]);
        let out = hamilton_filter(&eta, &p, &[1.0, 0.0]).unwrap();
        let sm = kim_smoother(&out, &p).unwrap();
        assert!(sm.smoothed.iter().all(|v| v.is_finite()));
        assert!((sm.smoothed.row(1).sum() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pairs_marginalize_to_smoothed() {
        let eta = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.3, 1.0, 0.5, 1.5]);
        let p = DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.4, 0.6]);
        let out = hamilton_filter(&eta, &p, &[0.5, 0.5]).unwrap();
        let sm = kim_smoother(&out, &p).unwrap();
        for (u, pair) in smoothed_pairs(&out, &sm, &p).iter().enumerate() {
            for i in 0..2 {
                assert!((pair.row(i).sum() - sm.smoothed[(u, i)]).abs() < 1e-14);
                assert!((pair.column(i).sum() - sm.smoothed[(u + 1, i)]).abs() < 1e-14);
            }
        }
    }
}
