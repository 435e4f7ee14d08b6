//! Exact zero-mean GP posterior prediction and fast leave-one-out
//! predictive distributions.
//!
//! Noiseless interpolation setting: no nugget or jitter is ever added.
//! An ill-conditioned covariance matrix surfaces as
//! [`GpError::NotPositiveDefinite`] and is handled upstream through range
//! bounds on the parameters.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::kernel::{self, MaternParams};
use crate::{GpError, Result};

/// Floor applied to predicted variances (normalized output units squared).
pub const VARIANCE_FLOOR: f64 = 1e-15;

/// Training data: design points plus centered observations.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    z: DVector<f64>,
}

impl Dataset {
    /// Build a dataset, rejecting duplicated design rows (they make the
    /// noiseless covariance matrix singular).
    pub fn new(x: DMatrix<f64>, z: DVector<f64>) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(GpError::InvalidInput("empty design".into()));
        }
        if z.len() != n {
            return Err(GpError::InvalidInput(format!(
                "design has {n} rows but {} observations given",
                z.len()
            )));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (0..x.ncols()).all(|c| x[(i, c)] == x[(j, c)]) {
                    return Err(GpError::InvalidInput(format!(
                        "duplicated design rows {i} and {j}"
                    )));
                }
            }
        }
        Ok(Dataset { x, z })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires n >= 1
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Dataset with row `i` removed (brute-force LOO oracle support).
    pub fn without(&self, i: usize) -> Result<Dataset> {
        let keep: Vec<usize> = (0..self.len()).filter(|&j| j != i).collect();
        let x = DMatrix::from_fn(keep.len(), self.dim(), |r, c| self.x[(keep[r], c)]);
        let z = DVector::from_fn(keep.len(), |r, _| self.z[keep[r]]);
        Dataset::new(x, z)
    }
}

/// Univariate Gaussian predictive distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPredictive {
    pub mu: f64,
    pub sigma2: f64,
}

impl GaussianPredictive {
    /// Clamp the variance at the floor.
    pub fn new(mu: f64, sigma2: f64) -> Self {
        GaussianPredictive { mu, sigma2: sigma2.max(VARIANCE_FLOOR) }
    }
}

/// Cholesky factorization of a covariance matrix, with the derived
/// quantities needed by prediction, LOO formulas and adjoints.
pub struct GpFactorization {
    chol: Cholesky<f64, Dyn>,
    n: usize,
}

impl GpFactorization {
    /// Factorize a symmetric matrix; fails with `NotPositiveDefinite` when
    /// the matrix has a non-positive pivot.  Never regularized.
    pub fn new(k: DMatrix<f64>) -> Result<Self> {
        let n = k.nrows();
        let chol = Cholesky::new(k).ok_or(GpError::NotPositiveDefinite)?;
        Ok(GpFactorization { chol, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Lower-triangular factor `L` with `L Lᵀ = K`.
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `log det K`.
    pub fn logdet(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Solve `K x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// Solve `K X = B` column-wise.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// Full inverse `B = K⁻¹` (needed by the LOO formulas and adjoints).
    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Diagonal of `K⁻¹`, computed from the triangular factor by column
    /// solves of `L`.
    pub fn inverse_diagonal(&self) -> DVector<f64> {
        // (K^{-1})_{ii} = || L^{-1} e_i ||^2
        let l = self.chol.l_dirty();
        let n = self.n;
        let mut diag = DVector::zeros(n);
        for i in 0..n {
            // forward solve L w = e_i; w has zeros before index i
            let mut w = vec![0.0; n];
            w[i] = 1.0 / l[(i, i)];
            for r in (i + 1)..n {
                let mut s = 0.0;
                for c in i..r {
                    s += l[(r, c)] * w[c];
                }
                w[r] = -s / l[(r, r)];
            }
            diag[i] = w[i..].iter().map(|v| v * v).sum();
        }
        diag
    }
}

/// Factorize the covariance matrix of `data` under `theta`.
pub fn factorize(theta: &MaternParams, data: &Dataset) -> Result<GpFactorization> {
    GpFactorization::new(kernel::cov_matrix(data.x(), theta)?)
}

/// Posterior predictive distributions at the rows of `xtest`.
///
/// `μ(x) = k*ᵀ K⁻¹ z`, `σ²(x) = k(x,x) - k*ᵀ K⁻¹ k*`, variance clamped
/// at [`VARIANCE_FLOOR`].
pub fn predict(
    theta: &MaternParams,
    data: &Dataset,
    xtest: &DMatrix<f64>,
) -> Result<Vec<GaussianPredictive>> {
    let fact = factorize(theta, data)?;
    predict_with(&fact, theta, data, xtest)
}

/// As [`predict`], reusing an existing factorization of `K_θ`.
pub fn predict_with(
    fact: &GpFactorization,
    theta: &MaternParams,
    data: &Dataset,
    xtest: &DMatrix<f64>,
) -> Result<Vec<GaussianPredictive>> {
    let (kstar, kss) = kernel::cross_cov(data.x(), xtest, theta)?;
    let alpha = fact.solve(data.z());
    let gamma = fact.solve_mat(&kstar);
    let m = xtest.nrows();
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let kj = kstar.column(j);
        let mu = kj.dot(&alpha);
        let s2 = kss[j] - kj.dot(&gamma.column(j));
        out.push(GaussianPredictive::new(mu, s2));
    }
    Ok(out)
}

/// Leave-one-out predictive distributions via the fast algebraic formulas
/// `μ_{-i} = z_i - (K⁻¹z)_i / (K⁻¹)_{ii}` and `σ²_{-i} = 1/(K⁻¹)_{ii}`.
pub fn loo_predictives(theta: &MaternParams, data: &Dataset) -> Result<Vec<GaussianPredictive>> {
    let fact = factorize(theta, data)?;
    loo_predictives_with(&fact, data)
}

/// As [`loo_predictives`], reusing an existing factorization.
pub fn loo_predictives_with(
    fact: &GpFactorization,
    data: &Dataset,
) -> Result<Vec<GaussianPredictive>> {
    let alpha = fact.solve(data.z());
    let diag = fact.inverse_diagonal();
    let n = data.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mu = data.z()[i] - alpha[i] / diag[i];
        let s2 = 1.0 / diag[i];
        out.push(GaussianPredictive::new(mu, s2));
    }
    Ok(out)
}
