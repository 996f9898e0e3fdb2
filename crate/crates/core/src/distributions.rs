//! Random number streams, special functions and the samplers/densities used
//! by the Normal-Inverse-Wishart model.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma as statrs_ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, SpdMatrix};

const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Seeded ChaCha stream. Identical `(seed, stream)` pairs reproduce identical
/// draws regardless of thread scheduling.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// A fresh stream sharing this seed.
    pub fn child(&self, stream: u64) -> Self {
        Self::new(self.seed, stream)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs_ln_gamma(x)
}

/// Log multivariate gamma `ln Γ_n(x) = n(n-1)/4 ln π + Σ_{i=1}^n ln Γ(x + (1-i)/2)`.
pub fn log_mv_gamma(n: usize, x: f64) -> Result<f64> {
    let bound = (n as f64 - 1.0) / 2.0;
    if !(x > bound) {
        return Err(Error::Domain(format!(
            "multivariate gamma of order {n} needs x > {bound}, got {x}"
        )));
    }
    let nf = n as f64;
    let mut acc = nf * (nf - 1.0) / 4.0 * LN_PI;
    for i in 1..=n {
        acc += ln_gamma(x + (1.0 - i as f64) / 2.0);
    }
    Ok(acc)
}

pub fn ln_pi() -> f64 {
    LN_PI
}

/// Dirichlet draw. Components with concentration below one are drawn in log
/// space so that tiny concentrations do not underflow to an all-zero vector.
pub fn sample_dirichlet<R: RngCore + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::Domain("empty Dirichlet concentration".into()));
    }
    let mut logs = Vec::with_capacity(alpha.len());
    for &a in alpha {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::Domain(format!(
                "Dirichlet concentration {a} is not positive"
            )));
        }
        let lg = if a < 1.0 {
            let g: f64 = Gamma::new(a + 1.0, 1.0)
                .map_err(|e| Error::Domain(e.to_string()))?
                .sample(rng);
            let u: f64 = rng.random::<f64>();
            g.ln() + u.max(f64::MIN_POSITIVE).ln() / a
        } else {
            let g: f64 = Gamma::new(a, 1.0)
                .map_err(|e| Error::Domain(e.to_string()))?
                .sample(rng);
            g.ln()
        };
        logs.push(lg);
    }
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    Ok(out)
}

pub fn dirichlet_logpdf(x: &[f64], alpha: &[f64]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    let mut acc = ln_gamma(a0);
    for (&xi, &ai) in x.iter().zip(alpha) {
        acc += (ai - 1.0) * xi.ln() - ln_gamma(ai);
    }
    acc
}

/// Inverse-Wishart draw `Σ ~ IW(ν, S)` with density proportional to
/// `|Σ|^{-(ν+n+1)/2} exp(-tr(S Σ⁻¹)/2)`.
///
/// With `S = U U'` and a Bartlett factor `A` of a standard Wishart,
/// `Σ = (U A^{-T})(U A^{-T})'`.
pub fn sample_inverse_wishart<R: RngCore + ?Sized>(
    dof: f64,
    scale: &SpdMatrix,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let n = scale.dim();
    if !(dof > n as f64 - 1.0) {
        return Err(Error::DegreesOfFreedom {
            dof,
            bound: n as f64 - 1.0,
        });
    }
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let chi = ChiSquared::new(dof - i as f64).map_err(|e| Error::Domain(e.to_string()))?;
        let c: f64 = chi.sample(rng);
        a[(i, i)] = c.sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let a_inv = a
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::NotPositiveDefinite("Bartlett factor is singular".into()))?;
    let b = scale.chol_l() * a_inv.transpose();
    let mut sigma = &b * b.transpose();
    symmetrize(&mut sigma);
    Ok(sigma)
}

/// Log density of `IW(ν, S)` at `Σ`.
pub fn inverse_wishart_logpdf(sigma: &SpdMatrix, dof: f64, scale: &SpdMatrix) -> Result<f64> {
    let n = scale.dim();
    let nf = n as f64;
    let tr = (scale.matrix() * sigma.inverse()).trace();
    Ok(dof / 2.0 * scale.ln_det()
        - dof * nf / 2.0 * std::f64::consts::LN_2
        - log_mv_gamma(n, dof / 2.0)?
        - (dof + nf + 1.0) / 2.0 * sigma.ln_det()
        - 0.5 * tr)
}

/// Matrix normal draw `M + L_row Z L_col'` with row covariance `L_row L_row'`
/// and column covariance `L_col L_col'`.
pub fn sample_matrix_normal<R: RngCore + ?Sized>(
    mean: &DMatrix<f64>,
    row_chol: &DMatrix<f64>,
    col_chol: &DMatrix<f64>,
    rng: &mut R,
) -> DMatrix<f64> {
    let z = DMatrix::<f64>::from_fn(mean.nrows(), mean.ncols(), |_, _| {
        StandardNormal.sample(rng)
    });
    mean + row_chol * z * col_chol.transpose()
}

pub fn sample_mvn<R: RngCore + ?Sized>(
    mean: &DVector<f64>,
    chol: &DMatrix<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let z = DVector::<f64>::from_fn(mean.len(), |_, _| StandardNormal.sample(rng));
    mean + chol * z
}

pub fn mvn_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &SpdMatrix) -> f64 {
    let r = x - mean;
    let n = x.len() as f64;
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + cov.ln_det() + cov.inv_quad_form(&r))
}

/// Parameters of a Normal-Inverse-Wishart law on `(Π, Σ)`:
/// `Σ ~ IW(dof, scale)` and `Π | Σ ~ MN(mean, Σ, col_cov)`, i.e.
/// `vec Π | Σ ~ N(vec mean, col_cov ⊗ Σ)`.
#[derive(Debug, Clone)]
pub struct NiwParams {
    pub mean: DMatrix<f64>,
    pub col_cov: SpdMatrix,
    pub dof: f64,
    pub scale: SpdMatrix,
}

impl NiwParams {
    pub fn validate(&self) -> Result<()> {
        let n = self.scale.dim();
        let d = self.col_cov.dim();
        if self.mean.nrows() != n || self.mean.ncols() != d {
            return Err(Error::Dimension(format!(
                "NIW mean is {}x{}, expected {n}x{d}",
                self.mean.nrows(),
                self.mean.ncols()
            )));
        }
        if !(self.dof > n as f64 - 1.0) {
            return Err(Error::DegreesOfFreedom {
                dof: self.dof,
                bound: n as f64 - 1.0,
            });
        }
        Ok(())
    }
}

/// Joint draw `(Π, Σ)` from a Normal-Inverse-Wishart law.
pub fn sample_niw<R: RngCore + ?Sized>(
    params: &NiwParams,
    rng: &mut R,
) -> Result<(DMatrix<f64>, SpdMatrix)> {
    params.validate()?;
    let sigma =
        SpdMatrix::from_nearly_symmetric(sample_inverse_wishart(params.dof, &params.scale, rng)?)?;
    let coef = sample_matrix_normal(&params.mean, &sigma.chol_l(), &params.col_cov.chol_l(), rng);
    Ok((coef, sigma))
}

/// Log density of the matrix t law
/// `c |I_n + rowscale⁻¹ (X - M) colscale (X - M)'|^{-(dof+d)/2}` with
/// `c = |colscale|^{n/2} |rowscale|^{-d/2} Γ_n((dof+d)/2) / (π^{nd/2} Γ_n(dof/2))`.
///
/// `colscale` acts as a precision over the `d` columns and `rowscale` as a
/// scale over the `n` rows.
pub fn matrix_t_logpdf(
    x: &DMatrix<f64>,
    location: &DMatrix<f64>,
    rowscale: &SpdMatrix,
    colscale: &SpdMatrix,
    dof: f64,
) -> Result<f64> {
    let n = rowscale.dim();
    let d = colscale.dim();
    if x.nrows() != n || x.ncols() != d || location.shape() != x.shape() {
        return Err(Error::Dimension("matrix t argument shapes disagree".into()));
    }
    if !(dof > n as f64 - 1.0) {
        return Err(Error::DegreesOfFreedom {
            dof,
            bound: n as f64 - 1.0,
        });
    }
    let (nf, df) = (n as f64, d as f64);
    let r = x - location;
    let inner = rowscale.solve(&(&r * colscale.matrix() * r.transpose()));
    let kernel = crate::linalg::ln_det_positive(&(DMatrix::identity(n, n) + inner))
        .ok_or_else(|| Error::Domain("matrix t kernel determinant is not positive".into()))?;
    Ok(nf / 2.0 * colscale.ln_det() - df / 2.0 * rowscale.ln_det()
        + log_mv_gamma(n, (dof + df) / 2.0)?
        - nf * df / 2.0 * LN_PI
        - log_mv_gamma(n, dof / 2.0)?
        - (dof + df) / 2.0 * kernel)
}

/// `ln Σ exp(v)` computed stably.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
