//! Dense linear algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric positive definite matrix together with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl SpdMatrix {
    /// Checks symmetry (relative 1e-12) and factorizes, retrying once with a
    /// small ridge when the plain factorization fails.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension(format!(
                "expected a square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        let n = matrix.nrows();
        for i in 0..n {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::NotPositiveDefinite(format!(
                        "asymmetric entry ({i}, {j})"
                    )));
                }
            }
        }
        let mut matrix = matrix;
        symmetrize(&mut matrix);
        Self::factor(matrix)
    }

    /// Like [`SpdMatrix::new`] but symmetrizes first instead of rejecting
    /// small floating point asymmetry.
    pub fn from_nearly_symmetric(mut matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension("expected a square matrix".into()));
        }
        symmetrize(&mut matrix);
        Self::factor(matrix)
    }

    pub fn identity(n: usize) -> Self {
        Self::factor(DMatrix::identity(n, n)).expect("identity is SPD")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    fn factor(matrix: DMatrix<f64>) -> Result<Self> {
        if let Some(chol) = Cholesky::new(matrix.clone()) {
            return Ok(Self { matrix, chol });
        }
        let n = matrix.nrows().max(1);
        let ridge = 1e-10 * matrix.trace().abs() / n as f64;
        let mut ridged = matrix;
        for i in 0..ridged.nrows() {
            ridged[(i, i)] += ridge;
        }
        match Cholesky::new(ridged.clone()) {
            Some(chol) => Ok(Self {
                matrix: ridged,
                chol,
            }),
            None => Err(Error::NotPositiveDefinite(
                "Cholesky factorization failed after ridge retry".into(),
            )),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Lower triangular factor `L` with `L L' = self`.
    pub fn chol_l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * self
            .chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let mut inv = self.chol.inverse();
        symmetrize(&mut inv);
        inv
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// `v' self⁻¹ v`.
    pub fn inv_quad_form(&self, v: &DVector<f64>) -> f64 {
        let w = self
            .chol
            .l_dirty()
            .solve_lower_triangular(v)
            .expect("Cholesky factor has a positive diagonal");
        w.norm_squared()
    }

    /// `v' self v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.matrix * v))
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// `ln |m|` of a general square matrix through LU; `None` when the
/// determinant is not positive.
pub fn ln_det_positive(m: &DMatrix<f64>) -> Option<f64> {
    let det = m.clone().lu().determinant();
    (det > 0.0).then(|| det.ln())
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Column-major vectorization.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &DVector<f64>, nrows: usize, ncols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(nrows, ncols, v.as_slice())
}
