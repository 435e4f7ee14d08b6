//! Anisotropic Matérn covariance family with half-integer regularity and
//! the squared-exponential limit.
//!
//! Only half-integer regularities `ν = χ + 1/2` are supported, for which
//! the Matérn correlation has an exact polynomial-times-exponential form,
//! plus the pointwise limit `ν → ∞` (squared exponential).

use nalgebra::{DMatrix, DVector};

use crate::{GpError, Result};

/// Regularity (smoothness) of the Matérn correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regularity {
    /// `ν = χ + 1/2` with integer `χ ≥ 0`.
    HalfInteger(u32),
    /// The pointwise limit `ν → ∞`, i.e. the squared-exponential
    /// correlation `exp(-h²/2)`.
    GaussianLimit,
}

impl Regularity {
    /// The value of `ν`, or `None` for the squared-exponential limit.
    pub fn nu(&self) -> Option<f64> {
        match self {
            Regularity::HalfInteger(chi) => Some(*chi as f64 + 0.5),
            Regularity::GaussianLimit => None,
        }
    }

    /// Parse `"1/2"`, `"3/2"`, ..., `"inf"`.
    pub fn parse(s: &str) -> Result<Regularity> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s == "∞" {
            return Ok(Regularity::GaussianLimit);
        }
        if let Some(num) = s.strip_suffix("/2") {
            let k: u32 = num
                .parse()
                .map_err(|_| GpError::InvalidInput(format!("bad regularity '{s}'")))?;
            if k % 2 == 1 {
                return Ok(Regularity::HalfInteger(k / 2));
            }
        }
        Err(GpError::InvalidInput(format!(
            "regularity must be an odd half-integer like '5/2', or 'inf'; got '{s}'"
        )))
    }
}

impl std::fmt::Display for Regularity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regularity::HalfInteger(chi) => write!(f, "{}/2", 2 * chi + 1),
            Regularity::GaussianLimit => write!(f, "inf"),
        }
    }
}

/// Hyperparameters `θ = (σ², ρ₁…ρ_d, ν)` of the anisotropic Matérn kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct MaternParams {
    /// Variance of the process (output units squared).
    pub sigma2: f64,
    /// Range (correlation length) per input dimension.
    pub rho: Vec<f64>,
    /// Regularity.
    pub nu: Regularity,
}

impl MaternParams {
    pub fn new(sigma2: f64, rho: Vec<f64>, nu: Regularity) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(GpError::InvalidInput(format!("sigma2 must be positive, got {sigma2}")));
        }
        if rho.is_empty() || rho.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(GpError::InvalidInput("all ranges must be positive".into()));
        }
        Ok(MaternParams { sigma2, rho, nu })
    }

    /// Input dimension.
    pub fn dim(&self) -> usize {
        self.rho.len()
    }

    /// Isotropic parameters with unit variance (used for range bounds).
    pub fn isotropic_unit(rho: f64, d: usize, nu: Regularity) -> Self {
        MaternParams { sigma2: 1.0, rho: vec![rho; d], nu }
    }
}

/// Scaled anisotropic distance `h = sqrt(Σ_j (x_j - y_j)²/ρ_j²)`.
pub fn scaled_distance(x: &[f64], y: &[f64], rho: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() != rho.len() || x.is_empty() {
        return Err(GpError::InvalidInput(format!(
            "dimension mismatch: |x|={}, |y|={}, |rho|={}",
            x.len(),
            y.len(),
            rho.len()
        )));
    }
    let mut s = 0.0;
    for j in 0..x.len() {
        let u = (x[j] - y[j]) / rho[j];
        s += u * u;
    }
    Ok(s.sqrt())
}

/// Coefficients of the half-integer Matérn correlation
/// `k(h) = e^{-c h} Σ_m coef[m] h^m` with `c = sqrt(2ν)`.
///
/// The closed form is the finite-sum expression for `ν = χ + 1/2`:
/// `exp(-c h) · χ!/(2χ)! · Σ_{i=0}^{χ} (χ+i)!/(i!(χ-i)!) (2 c h)^{χ-i}`.
fn half_integer_coeffs(chi: u32) -> &'static (f64, Vec<f64>) {
    use std::collections::HashMap;
    use std::sync::{Mutex, OnceLock};
    // the coefficients sit on the hot path of every kernel evaluation:
    // precompute the common regularities, leak the rare large ones
    static SMALL: OnceLock<Vec<(f64, Vec<f64>)>> = OnceLock::new();
    static BIG: OnceLock<Mutex<HashMap<u32, &'static (f64, Vec<f64>)>>> = OnceLock::new();
    if (chi as usize) < 64 {
        &SMALL.get_or_init(|| (0..64).map(compute_half_integer_coeffs).collect())[chi as usize]
    } else {
        let map = BIG.get_or_init(|| Mutex::new(HashMap::new()));
        let mut m = map.lock().unwrap();
        m.entry(chi).or_insert_with(|| Box::leak(Box::new(compute_half_integer_coeffs(chi))))
    }
}

fn compute_half_integer_coeffs(chi: u32) -> (f64, Vec<f64>) {
    let nu = chi as f64 + 0.5;
    let c = (2.0 * nu).sqrt();
    let ln_fact = |k: u32| -> f64 {
        (1..=k).map(|i| (i as f64).ln()).sum()
    };
    let ln_a = ln_fact(chi) - ln_fact(2 * chi);
    let mut coef = vec![0.0; chi as usize + 1];
    for i in 0..=chi {
        let m = (chi - i) as usize;
        let ln_b = ln_fact(chi + i) - ln_fact(i) - ln_fact(chi - i);
        coef[m] = (ln_a + ln_b + m as f64 * (2.0 * c).ln()).exp();
    }
    (c, coef)
}

/// Matérn correlation `k_θ(h)/σ²` at scaled distance `h ≥ 0`.
pub fn matern_correlation(h: f64, nu: Regularity) -> Result<f64> {
    if !(h >= 0.0) {
        return Err(GpError::InvalidInput(format!("h must be non-negative, got {h}")));
    }
    Ok(match nu {
        Regularity::GaussianLimit => (-0.5 * h * h).exp(),
        Regularity::HalfInteger(chi) => {
            let &(c, ref coef) = half_integer_coeffs(chi);
            let mut poly = 0.0;
            for &a in coef.iter().rev() {
                poly = poly * h + a;
            }
            (-c * h).exp() * poly
        }
    })
}

/// Derivative `d/dh` of [`matern_correlation`].
pub fn matern_correlation_dh(h: f64, nu: Regularity) -> Result<f64> {
    if !(h >= 0.0) {
        return Err(GpError::InvalidInput(format!("h must be non-negative, got {h}")));
    }
    Ok(match nu {
        Regularity::GaussianLimit => -h * (-0.5 * h * h).exp(),
        Regularity::HalfInteger(chi) => {
            let &(c, ref coef) = half_integer_coeffs(chi);
            let mut poly = 0.0;
            let mut dpoly = 0.0;
            for &a in coef.iter().rev() {
                dpoly = dpoly * h + poly;
                poly = poly * h + a;
            }
            (-c * h).exp() * (dpoly - c * poly)
        }
    })
}

fn row(x: &DMatrix<f64>, i: usize) -> Vec<f64> {
    x.row(i).iter().copied().collect()
}

/// Covariance matrix `K_θ` of the design `X` (n×d).
pub fn cov_matrix(x: &DMatrix<f64>, theta: &MaternParams) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if x.ncols() != theta.dim() {
        return Err(GpError::InvalidInput(format!(
            "design has {} columns but theta has {} ranges",
            x.ncols(),
            theta.dim()
        )));
    }
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = theta.sigma2;
        let xi = row(x, i);
        for j in (i + 1)..n {
            let h = scaled_distance(&xi, &row(x, j), &theta.rho)?;
            let v = theta.sigma2 * matern_correlation(h, theta.nu)?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Correlation matrix `R_θ` (covariance with `σ² = 1`).
pub fn corr_matrix(x: &DMatrix<f64>, theta: &MaternParams) -> Result<DMatrix<f64>> {
    let unit = MaternParams { sigma2: 1.0, ..theta.clone() };
    cov_matrix(x, &unit)
}

/// Derivatives of `K_θ` with respect to `log σ²` and each `log ρ_j`,
/// in that order (`d+1` matrices).
///
/// `∂K/∂log σ² = K`; `ν` carries no derivative (discrete grid).
pub fn cov_matrix_param_derivatives(
    x: &DMatrix<f64>,
    theta: &MaternParams,
) -> Result<Vec<DMatrix<f64>>> {
    let n = x.nrows();
    let d = theta.dim();
    let mut out = Vec::with_capacity(d + 1);
    out.push(cov_matrix(x, theta)?);
    for _ in 0..d {
        out.push(DMatrix::zeros(n, n));
    }
    for i in 0..n {
        let xi = row(x, i);
        for j in (i + 1)..n {
            let xj = row(x, j);
            let h = scaled_distance(&xi, &xj, &theta.rho)?;
            if h == 0.0 {
                continue;
            }
            let dk_dh = theta.sigma2 * matern_correlation_dh(h, theta.nu)?;
            for l in 0..d {
                let u = (xi[l] - xj[l]) / theta.rho[l];
                // ∂h/∂log ρ_l = -u²/h
                let v = dk_dh * (-(u * u) / h);
                out[l + 1][(i, j)] = v;
                out[l + 1][(j, i)] = v;
            }
        }
    }
    Ok(out)
}

/// Cross-covariances between a design and a test set: the n×m matrix
/// `K*[i,j] = k_θ(x_i, x_j^test)` and the length-m vector of prior
/// variances `k**[j] = σ²`.
pub fn cross_cov(
    x: &DMatrix<f64>,
    xtest: &DMatrix<f64>,
    theta: &MaternParams,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if x.ncols() != xtest.ncols() || x.ncols() != theta.dim() {
        return Err(GpError::InvalidInput("cross_cov: dimension mismatch".into()));
    }
    let (n, m) = (x.nrows(), xtest.nrows());
    let mut kstar = DMatrix::zeros(n, m);
    for i in 0..n {
        let xi = row(x, i);
        for j in 0..m {
            let h = scaled_distance(&xi, &row(xtest, j), &theta.rho)?;
            kstar[(i, j)] = theta.sigma2 * matern_correlation(h, theta.nu)?;
        }
    }
    Ok((kstar, DVector::from_element(m, theta.sigma2)))
}

/// Derivatives of `K*` with respect to `log σ²` and each `log ρ_j`.
pub fn cross_cov_param_derivatives(
    x: &DMatrix<f64>,
    xtest: &DMatrix<f64>,
    theta: &MaternParams,
) -> Result<Vec<DMatrix<f64>>> {
    let (n, m) = (x.nrows(), xtest.nrows());
    let d = theta.dim();
    let (kstar, _) = cross_cov(x, xtest, theta)?;
    let mut out = Vec::with_capacity(d + 1);
    out.push(kstar);
    for _ in 0..d {
        out.push(DMatrix::zeros(n, m));
    }
    for i in 0..n {
        let xi = row(x, i);
        for j in 0..m {
            let xj = row(xtest, j);
            let h = scaled_distance(&xi, &xj, &theta.rho)?;
            if h == 0.0 {
                continue;
            }
            let dk_dh = theta.sigma2 * matern_correlation_dh(h, theta.nu)?;
            for l in 0..d {
                let u = (xi[l] - xj[l]) / theta.rho[l];
                out[l + 1][(i, j)] = dk_dh * (-(u * u) / h);
            }
        }
    }
    Ok(out)
}
