//! Hand-coded reverse-mode gradients.
//!
//! All gradients are taken with respect to the log-parameters
//! `(log σ², log ρ₁ … log ρ_d)`, in that order; the regularity lives on a
//! discrete grid and carries no derivative.  Predictive variances clamped
//! at the floor propagate a zero adjoint.

use nalgebra::{DMatrix, DVector};

use crate::criteria::{self, CriterionKind, CriterionSpec};
use crate::gp::{self, Dataset, GaussianPredictive, GpFactorization, VARIANCE_FLOOR};
use crate::kernel::{self, MaternParams};
use crate::scoring::{self, ScoringRule};
use crate::{GpError, Result};

/// Intermediates of a posterior prediction, kept for the reverse sweep.
pub struct PredictionTape {
    /// `B = K⁻¹`.
    pub b: DMatrix<f64>,
    /// `α = K⁻¹ z`.
    pub alpha: DVector<f64>,
    /// Cross-covariances `K*` (n×m).
    pub kstar: DMatrix<f64>,
    /// `Γ = B K*` (n×m).
    pub gamma: DMatrix<f64>,
    /// Prior variances `k**` (length m).
    pub kss: DVector<f64>,
    /// Predictive distributions (variances already clamped).
    pub predictions: Vec<GaussianPredictive>,
    /// Whether the variance at each test point hit the clamp.
    pub clamped: Vec<bool>,
}

/// Run the forward prediction, recording everything the reverse sweep needs.
pub fn predict_taped(
    theta: &MaternParams,
    data: &Dataset,
    xtest: &DMatrix<f64>,
) -> Result<PredictionTape> {
    let fact = gp::factorize(theta, data)?;
    let b = fact.inverse();
    let alpha = fact.solve(data.z());
    let (kstar, kss) = kernel::cross_cov(data.x(), xtest, theta)?;
    let gamma = &b * &kstar;
    let m = xtest.nrows();
    let mut predictions = Vec::with_capacity(m);
    let mut clamped = Vec::with_capacity(m);
    for j in 0..m {
        let kj = kstar.column(j);
        let mu = kj.dot(&alpha);
        let s2_raw = kss[j] - kj.dot(&gamma.column(j));
        predictions.push(GaussianPredictive::new(mu, s2_raw));
        clamped.push(s2_raw < VARIANCE_FLOOR);
    }
    Ok(PredictionTape { b, alpha, kstar, gamma, kss, predictions, clamped })
}

/// Reverse sweep through the prediction: given adjoint seeds
/// `δ_μ`, `δ_{σ²}` of a scalar functional of the predictions, return its
/// gradient with respect to `(log σ², log ρ₁ … log ρ_d)`.
pub fn adjoint_prediction(
    tape: &PredictionTape,
    dmu: &DVector<f64>,
    dsigma2: &DVector<f64>,
    theta: &MaternParams,
    data: &Dataset,
    xtest: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let (n, m) = tape.kstar.shape();
    if dmu.len() != m || dsigma2.len() != m {
        return Err(GpError::InvalidInput("adjoint seeds have wrong length".into()));
    }
    // clamped variances are locally constant
    let mut ds2 = dsigma2.clone();
    for j in 0..m {
        if tape.clamped[j] {
            ds2[j] = 0.0;
        }
    }

    // δ_Γ[i,j] = -K*[i,j] δ_{σ²}[j]
    let mut dgamma = DMatrix::zeros(n, m);
    for j in 0..m {
        for i in 0..n {
            dgamma[(i, j)] = -tape.kstar[(i, j)] * ds2[j];
        }
    }
    // δ_{K*} = α δ_μᵀ - Γ ∘ (1 δ_{σ²}ᵀ) + B δ_Γ
    let mut dkstar = &tape.alpha * dmu.transpose() + &tape.b * &dgamma;
    for j in 0..m {
        for i in 0..n {
            dkstar[(i, j)] -= tape.gamma[(i, j)] * ds2[j];
        }
    }
    // δ_B = (K* δ_μ) zᵀ + δ_Γ K*ᵀ, then δ_K = -B δ_B B
    let db = (&tape.kstar * dmu) * data.z().transpose() + &dgamma * tape.kstar.transpose();
    let dk = -(&tape.b * db * &tape.b);

    let dk_dtheta = kernel::cov_matrix_param_derivatives(data.x(), theta)?;
    let dkstar_dtheta = kernel::cross_cov_param_derivatives(data.x(), xtest, theta)?;
    let d = theta.dim();
    let mut grad = DVector::zeros(d + 1);
    for l in 0..=d {
        grad[l] = frob(&dk, &dk_dtheta[l]) + frob(&dkstar, &dkstar_dtheta[l]);
    }
    // ∂k**/∂log σ² = σ² 1_m; ranges do not enter k**
    grad[0] += theta.sigma2 * ds2.sum();
    Ok(grad)
}

fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Gradient of the mean test-set score
/// `(1/m) Σ_j S(P_j, z_j)` with respect to the log-parameters.
pub fn test_score_gradient(
    rule: ScoringRule,
    theta: &MaternParams,
    data: &Dataset,
    xtest: &DMatrix<f64>,
    ztest: &DVector<f64>,
) -> Result<DVector<f64>> {
    let m = xtest.nrows();
    if ztest.len() != m {
        return Err(GpError::InvalidInput("test labels have wrong length".into()));
    }
    let tape = predict_taped(theta, data, xtest)?;
    let mut dmu = DVector::zeros(m);
    let mut ds2 = DVector::zeros(m);
    for j in 0..m {
        let (gm, gs2) = scoring::score_grad(rule, &tape.predictions[j], ztest[j])?;
        dmu[j] = gm / m as f64;
        ds2[j] = gs2 / m as f64;
    }
    adjoint_prediction(&tape, &dmu, &ds2, theta, data, xtest)
}

/// Gradient of the mean LOO score via the `B = K⁻¹` adjoint:
/// `μ_{-i} = z_i - α_i/B_{ii}`, `σ²_{-i} = 1/B_{ii}`, so the score adjoints
/// land on row `i` and the diagonal of `B`, and `δ_K = -B δ_B B`.
pub fn loo_criterion_gradient(
    rule: ScoringRule,
    theta: &MaternParams,
    data: &Dataset,
) -> Result<DVector<f64>> {
    let n = data.len();
    let fact = gp::factorize(theta, data)?;
    let b = fact.inverse();
    let alpha = fact.solve(data.z());
    let preds = gp::loo_predictives_with(&fact, data)?;

    let mut db = DMatrix::zeros(n, n);
    for i in 0..n {
        let bii = b[(i, i)];
        let s2_raw = 1.0 / bii;
        let (a_mu, a_s2) = scoring::score_grad(rule, &preds[i], data.z()[i])?;
        let a_mu = a_mu / n as f64;
        // clamped LOO variances are locally constant
        let a_s2 = if s2_raw < VARIANCE_FLOOR { 0.0 } else { a_s2 / n as f64 };
        // ∂μ_{-i}/∂B_{il} = -z_l/B_{ii} (+ α_i/B_{ii}² at l = i)
        for l in 0..n {
            db[(i, l)] += a_mu * (-data.z()[l] / bii);
        }
        db[(i, i)] += a_mu * alpha[i] / (bii * bii);
        // ∂σ²_{-i}/∂B_{ii} = -1/B_{ii}²
        db[(i, i)] += a_s2 * (-1.0 / (bii * bii));
    }
    let dk = -(&b * db * &b);
    contract_with_cov_derivatives(&dk, theta, data)
}

fn contract_with_cov_derivatives(
    dk: &DMatrix<f64>,
    theta: &MaternParams,
    data: &Dataset,
) -> Result<DVector<f64>> {
    let dk_dtheta = kernel::cov_matrix_param_derivatives(data.x(), theta)?;
    let d = theta.dim();
    let mut grad = DVector::zeros(d + 1);
    for l in 0..=d {
        grad[l] = frob(dk, &dk_dtheta[l]);
    }
    Ok(grad)
}

/// Gradient of the NLL:
/// `∂/∂θ_l = ½ (tr(K⁻¹ ∂K) - αᵀ ∂K α)` with `α = K⁻¹ z`.
pub fn nll_gradient(theta: &MaternParams, data: &Dataset) -> Result<DVector<f64>> {
    let fact = gp::factorize(theta, data)?;
    let b = fact.inverse();
    let alpha = fact.solve(data.z());
    let dk_dtheta = kernel::cov_matrix_param_derivatives(data.x(), theta)?;
    let d = theta.dim();
    let mut grad = DVector::zeros(d + 1);
    for l in 0..=d {
        let dk = &dk_dtheta[l];
        grad[l] = 0.5 * (frob(&b, dk) - alpha.dot(&(dk * &alpha)));
    }
    Ok(grad)
}

/// Gradient of the profiled likelihood
/// `PL = log(zᵀR⁻¹z/n) + (1/n) log det R` (zero in `log σ²`).
pub fn profiled_likelihood_gradient(
    theta: &MaternParams,
    data: &Dataset,
) -> Result<DVector<f64>> {
    let unit = MaternParams { sigma2: 1.0, ..theta.clone() };
    let r = kernel::corr_matrix(data.x(), theta)?;
    let fact = GpFactorization::new(r)?;
    let rinv = fact.inverse();
    let beta = fact.solve(data.z());
    let quad = data.z().dot(&beta);
    if quad <= 0.0 {
        return Err(GpError::Degenerate("zᵀR⁻¹z is not positive".into()));
    }
    let dr_dtheta = kernel::cov_matrix_param_derivatives(data.x(), &unit)?;
    let n = data.len() as f64;
    let d = theta.dim();
    let mut grad = DVector::zeros(d + 1);
    for l in 1..=d {
        let dr = &dr_dtheta[l];
        grad[l] = -beta.dot(&(dr * &beta)) / quad + frob(&rinv, dr) / n;
    }
    Ok(grad)
}

/// Gaussian divided-difference matrix for `g` over the spectrum
/// (Daleckii–Krein): `Φ_{ij} = (g(λ_i)-g(λ_j))/(λ_i-λ_j)`, `g'` on the
/// diagonal and for near-degenerate pairs.
fn divided_differences(
    lambda: &DVector<f64>,
    g: impl Fn(f64) -> f64,
    gprime: impl Fn(f64) -> f64,
) -> DMatrix<f64> {
    let n = lambda.len();
    let mut phi = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (li, lj) = (lambda[i], lambda[j]);
            phi[(i, j)] = if (li - lj).abs() <= 1e-8 * li.abs().max(lj.abs()) {
                gprime(0.5 * (li + lj))
            } else {
                (g(li) - g(lj)) / (li - lj)
            };
        }
    }
    phi
}

/// Gradient of the Hölderized likelihood `HL(p, q)` with respect to the
/// log-parameters (zero in `log σ²`).
///
/// Uses `HL = A^{1/p} M_q(λ)` with `A = Σ cᵢ²/λᵢ^p`, `c = Qᵀz`, and the
/// Daleckii–Krein formula for `∂A/∂R`.  For `q = ±∞` the power mean is
/// the extremal eigenvalue and the (sub)gradient uses its eigenvector.
pub fn holderized_gradient(
    p: f64,
    q: f64,
    theta: &MaternParams,
    data: &Dataset,
) -> Result<DVector<f64>> {
    if p == 0.0 || !p.is_finite() {
        return Err(GpError::InvalidInput("holderized likelihood requires finite p != 0".into()));
    }
    let eig = criteria::eigen_factorize(theta, data)?;
    let lambda = &eig.eigenvalues;
    let qmat = &eig.eigenvectors;
    if lambda.iter().any(|&l| l <= 0.0) {
        return Err(GpError::NotPositiveDefinite);
    }
    let n = data.len() as f64;
    let c = qmat.transpose() * data.z();
    let a: f64 = c
        .iter()
        .zip(lambda.iter())
        .map(|(&ci, &li)| ci * ci / li.powf(p))
        .sum();
    if a <= 0.0 {
        return Err(GpError::Degenerate("zero observations".into()));
    }
    let mq = criteria::power_mean(lambda, q);

    // ∂A/∂R = Q (Φ ∘ ccᵀ) Qᵀ with g(λ) = λ^{-p}
    let phi = divided_differences(lambda, |l| l.powf(-p), |l| -p * l.powf(-p - 1.0));
    let mut inner = DMatrix::zeros(lambda.len(), lambda.len());
    for i in 0..lambda.len() {
        for j in 0..lambda.len() {
            inner[(i, j)] = phi[(i, j)] * c[i] * c[j];
        }
    }
    let da_dr = qmat * inner * qmat.transpose();

    // ∂M_q/∂R = Q diag(∂M_q/∂λ) Qᵀ
    let dmq_dlambda: DVector<f64> = if q == 0.0 {
        DVector::from_fn(lambda.len(), |i, _| mq / (n * lambda[i]))
    } else if q.is_infinite() {
        let pick = if q > 0.0 {
            (0..lambda.len()).fold(0, |b, i| if lambda[i] > lambda[b] { i } else { b })
        } else {
            (0..lambda.len()).fold(0, |b, i| if lambda[i] < lambda[b] { i } else { b })
        };
        DVector::from_fn(lambda.len(), |i, _| if i == pick { 1.0 } else { 0.0 })
    } else {
        DVector::from_fn(lambda.len(), |i, _| mq.powf(1.0 - q) * lambda[i].powf(q - 1.0) / n)
    };
    let dmq_dr = qmat * DMatrix::from_diagonal(&dmq_dlambda) * qmat.transpose();

    // HL = A^{1/p} M_q
    let dhl_dr = da_dr * (a.powf(1.0 / p - 1.0) * mq / p) + dmq_dr * a.powf(1.0 / p);

    let unit = MaternParams { sigma2: 1.0, ..theta.clone() };
    let dr_dtheta = kernel::cov_matrix_param_derivatives(data.x(), &unit)?;
    let d = theta.dim();
    let mut grad = DVector::zeros(d + 1);
    for l in 1..=d {
        grad[l] = frob(&dhl_dr, &dr_dtheta[l]);
    }
    Ok(grad)
}

/// Gradient of GCV through the identity `GCV = HL(2,-1)²/n`.
pub fn gcv_gradient(theta: &MaternParams, data: &Dataset) -> Result<DVector<f64>> {
    let hl = criteria::holderized_likelihood(2.0, -1.0, theta, data)?;
    let ghl = holderized_gradient(2.0, -1.0, theta, data)?;
    Ok(ghl * (2.0 * hl / data.len() as f64))
}

/// Gradient of kernel alignment `-zᵀKz/(‖K‖_F ‖z‖²)` (zero in `log σ²`).
pub fn kernel_alignment_gradient(theta: &MaternParams, data: &Dataset) -> Result<DVector<f64>> {
    let k = kernel::cov_matrix(data.x(), theta)?;
    let z = data.z();
    let zn2 = z.norm_squared();
    if zn2 == 0.0 {
        return Err(GpError::Degenerate("zero observations".into()));
    }
    let u = z.dot(&(&k * z));
    let v = k.norm();
    // ∂KA/∂K = -zzᵀ/(v ‖z‖²) + u K / (v³ ‖z‖²)
    let dka_dk = z * z.transpose() * (-1.0 / (v * zn2)) + &k * (u / (v * v * v * zn2));
    let dk_dtheta = kernel::cov_matrix_param_derivatives(data.x(), theta)?;
    let d = theta.dim();
    let mut grad = DVector::zeros(d + 1);
    for l in 1..=d {
        grad[l] = frob(&dka_dk, &dk_dtheta[l]);
    }
    Ok(grad)
}

/// Gradient of a criterion with respect to `(log σ², log ρ₁ … log ρ_d)`.
///
/// σ²-blind criteria return an exact zero in the first slot.
pub fn criterion_gradient(
    spec: &CriterionSpec,
    theta: &MaternParams,
    data: &Dataset,
) -> Result<DVector<f64>> {
    match spec.kind {
        CriterionKind::Loo(rule) => loo_criterion_gradient(rule, theta, data),
        CriterionKind::Nll => nll_gradient(theta, data),
        CriterionKind::ProfiledLikelihood => profiled_likelihood_gradient(theta, data),
        CriterionKind::Holderized { p, q } => holderized_gradient(p, q, theta, data),
        CriterionKind::Gcv => gcv_gradient(theta, data),
        CriterionKind::KernelAlignment => kernel_alignment_gradient(theta, data),
        CriterionKind::HybridNllSpe => Err(GpError::InvalidInput(
            "hybrid NLL/SPE is a selection procedure, not a differentiable criterion".into(),
        )),
    }
}
