//! Regime paths, their duplication-removed partitions, transition counts and
//! the Dirichlet-multinomial path law.
//!
//! Regimes and time indices are zero-based internally. Constructors accept
//! one-based labels through [`RegimeVector::from_one_based`].

use std::fmt;

use nalgebra::DMatrix;

use crate::distributions::ln_gamma;
use crate::error::{Error, Result};

/// A path of regime labels `s_1, ..., s_T` over `n_regimes` states.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RegimeVector {
    states: Vec<usize>,
    n_regimes: usize,
}

impl RegimeVector {
    pub fn new(states: Vec<usize>, n_regimes: usize) -> Result<Self> {
        if n_regimes == 0 {
            return Err(Error::Domain("at least one regime is required".into()));
        }
        if let Some(&s) = states.iter().find(|&&s| s >= n_regimes) {
            return Err(Error::Domain(format!(
                "regime label {s} outside 0..{n_regimes}"
            )));
        }
        Ok(Self { states, n_regimes })
    }

    pub fn from_one_based(labels: &[usize], n_regimes: usize) -> Result<Self> {
        if labels.contains(&0) {
            return Err(Error::Domain("one-based labels must be positive".into()));
        }
        Self::new(labels.iter().map(|s| s - 1).collect(), n_regimes)
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn n_regimes(&self) -> usize {
        self.n_regimes
    }

    pub fn last(&self) -> Option<usize> {
        self.states.last().copied()
    }

    pub fn prefix(&self, t: usize) -> Self {
        Self {
            states: self.states[..t].to_vec(),
            n_regimes: self.n_regimes,
        }
    }

    pub fn extended(&self, tail: &[usize]) -> Result<Self> {
        let mut states = self.states.clone();
        states.extend_from_slice(tail);
        Self::new(states, self.n_regimes)
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.states.iter().map(|s| s + 1).collect()
    }
}

impl fmt::Display for RegimeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.states.iter().map(|s| (s + 1).to_string()).collect();
        write!(f, "({})", labels.join(","))
    }
}

/// Which side of the split a future regime falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeClass {
    /// Seen both before and after the split.
    Gamma,
    /// Seen only after the split.
    Delta,
    /// Seen only before the split.
    Epsilon,
}

/// Duplication-removed regime sets of a path split at `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegimePartition {
    pub split: usize,
    /// Distinct regimes of `s_1..s_t` in first-appearance order.
    pub alpha: Vec<usize>,
    /// Distinct regimes of `s_{t+1}..s_T` in first-appearance order.
    pub beta: Vec<usize>,
    /// `alpha ∩ beta`, in the order of `beta`.
    pub gamma: Vec<usize>,
    /// `beta \ alpha`, in the order of `beta`.
    pub delta: Vec<usize>,
    /// `alpha \ beta`, in the order of `alpha`.
    pub epsilon: Vec<usize>,
}

impl RegimePartition {
    /// Distinct regimes of the whole path: `alpha` followed by `delta`.
    pub fn full(&self) -> Vec<usize> {
        self.alpha
            .iter()
            .chain(self.delta.iter())
            .copied()
            .collect()
    }

    pub fn class_of(&self, regime: usize) -> Option<RegimeClass> {
        if self.gamma.contains(&regime) {
            Some(RegimeClass::Gamma)
        } else if self.delta.contains(&regime) {
            Some(RegimeClass::Delta)
        } else if self.epsilon.contains(&regime) {
            Some(RegimeClass::Epsilon)
        } else {
            None
        }
    }
}

fn first_appearance(states: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    for &s in states {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// Splits `path` after its first `t` entries and forms the regime sets.
pub fn dedup_partition(path: &RegimeVector, t: usize) -> Result<RegimePartition> {
    if t > path.len() {
        return Err(Error::Domain(format!(
            "split {t} beyond path length {}",
            path.len()
        )));
    }
    let alpha = first_appearance(&path.states[..t]);
    let beta = first_appearance(&path.states[t..]);
    let gamma = beta.iter().copied().filter(|s| alpha.contains(s)).collect();
    let delta = beta
        .iter()
        .copied()
        .filter(|s| !alpha.contains(s))
        .collect();
    let epsilon = alpha
        .iter()
        .copied()
        .filter(|s| !beta.contains(s))
        .collect();
    Ok(RegimePartition {
        split: t,
        alpha,
        beta,
        gamma,
        delta,
        epsilon,
    })
}

/// Time indices grouped by regime, plus for each time the position of its
/// regime within `regimes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccurrenceIndex {
    pub regimes: Vec<usize>,
    pub times: Vec<Vec<usize>>,
    pub position: Vec<usize>,
}

impl OccurrenceIndex {
    pub fn counts(&self) -> Vec<usize> {
        self.times.iter().map(Vec::len).collect()
    }

    pub fn reconstruct(&self) -> Vec<usize> {
        self.position.iter().map(|&k| self.regimes[k]).collect()
    }
}

/// Occurrence index of the first `t` entries of `path`.
pub fn occurrence_index(path: &RegimeVector, t: usize) -> Result<OccurrenceIndex> {
    if t > path.len() {
        return Err(Error::Domain(format!(
            "split {t} beyond path length {}",
            path.len()
        )));
    }
    let regimes = first_appearance(&path.states[..t]);
    let mut times = vec![Vec::new(); regimes.len()];
    let mut position = Vec::with_capacity(t);
    for (u, s) in path.states[..t].iter().enumerate() {
        let k = regimes.iter().position(|r| r == s).expect("regime listed");
        times[k].push(u);
        position.push(k);
    }
    Ok(OccurrenceIndex {
        regimes,
        times,
        position,
    })
}

/// Transition counts; row 0 counts the initial state, row `i + 1` counts
/// transitions out of regime `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCounts {
    counts: Vec<Vec<u64>>,
}

impl TransitionCounts {
    pub fn zeros(n_regimes: usize) -> Self {
        Self {
            counts: vec![vec![0; n_regimes]; n_regimes + 1],
        }
    }

    pub fn from_path(path: &RegimeVector) -> Self {
        let mut c = Self::zeros(path.n_regimes());
        let mut prev = None;
        for &s in path.states() {
            c.push(prev, s);
            prev = Some(s);
        }
        c
    }

    pub fn push(&mut self, prev: Option<usize>, next: usize) {
        let row = prev.map_or(0, |p| p + 1);
        self.counts[row][next] += 1;
    }

    /// Count for row `row` of the `(N+1) x N` layout.
    pub fn get(&self, row: usize, next: usize) -> u64 {
        self.counts[row][next]
    }

    pub fn row(&self, row: usize) -> &[u64] {
        &self.counts[row]
    }

    pub fn n_regimes(&self) -> usize {
        self.counts.len() - 1
    }
}

/// Dirichlet concentrations, `(N+1) x N`, laid out like [`TransitionCounts`].
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletPriorSet {
    alpha: DMatrix<f64>,
}

impl DirichletPriorSet {
    pub fn new(alpha: DMatrix<f64>) -> Result<Self> {
        if alpha.nrows() != alpha.ncols() + 1 || alpha.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "Dirichlet concentrations must be (N+1)xN, got {}x{}",
                alpha.nrows(),
                alpha.ncols()
            )));
        }
        if alpha.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::Domain(
                "Dirichlet concentrations must be positive".into(),
            ));
        }
        Ok(Self { alpha })
    }

    /// Every concentration set to `value`.
    pub fn uniform(n_regimes: usize, value: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(n_regimes + 1, n_regimes, value))
    }

    /// Flat initial row and `diag` on the diagonal, `off` elsewhere.
    pub fn sticky(n_regimes: usize, diag: f64, off: f64) -> Result<Self> {
        let mut a = DMatrix::from_element(n_regimes + 1, n_regimes, off);
        for j in 0..n_regimes {
            a[(0, j)] = 1.0;
            a[(j + 1, j)] = diag;
        }
        Self::new(a)
    }

    pub fn n_regimes(&self) -> usize {
        self.alpha.ncols()
    }

    pub fn alpha(&self) -> &DMatrix<f64> {
        &self.alpha
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.alpha.row(row).iter().copied().collect()
    }

    /// Posterior concentrations `alpha + counts` of row `row`.
    pub fn posterior_row(&self, row: usize, counts: &TransitionCounts) -> Vec<f64> {
        (0..self.n_regimes())
            .map(|j| self.alpha[(row, j)] + counts.get(row, j) as f64)
            .collect()
    }
}

/// Marginal log probability of a regime path with the transition matrix
/// integrated out against independent Dirichlet rows.
pub fn regime_path_logdensity(path: &RegimeVector, priors: &DirichletPriorSet) -> Result<f64> {
    if path.n_regimes() != priors.n_regimes() {
        return Err(Error::Dimension("path and prior disagree on N".into()));
    }
    let counts = TransitionCounts::from_path(path);
    Ok(path_logdensity_from_counts(&counts, priors))
}

pub(crate) fn path_logdensity_from_counts(
    counts: &TransitionCounts,
    priors: &DirichletPriorSet,
) -> f64 {
    let n = priors.n_regimes();
    let mut acc = 0.0;
    for i in 0..=n {
        let row_counts = counts.row(i);
        if row_counts.iter().all(|&c| c == 0) {
            continue;
        }
        let mut a0 = 0.0;
        let mut an = 0.0;
        for j in 0..n {
            let a = priors.alpha[(i, j)];
            let c = row_counts[j] as f64;
            a0 += a;
            an += a + c;
            if row_counts[j] > 0 {
                acc += ln_gamma(a + c) - ln_gamma(a);
            }
        }
        acc += ln_gamma(a0) - ln_gamma(an);
    }
    acc
}

/// Predictive law of the next regime given the path so far.
pub fn next_regime_probs(path: &RegimeVector, priors: &DirichletPriorSet) -> Result<Vec<f64>> {
    if path.n_regimes() != priors.n_regimes() {
        return Err(Error::Dimension("path and prior disagree on N".into()));
    }
    let counts = TransitionCounts::from_path(path);
    let row = path.last().map_or(0, |s| s + 1);
    let w = priors.posterior_row(row, &counts);
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}
