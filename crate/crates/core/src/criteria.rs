//! Parameter-selection criteria: leave-one-out mean scores, negative
//! log-likelihood, profiled likelihood, the Hölderized-likelihood family
//! and its GCV / kernel-alignment special cases, plus the two σ² rules
//! (profiling and Cressie).

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::gp::{self, Dataset};
use crate::kernel::{self, MaternParams};
use crate::scoring::{self, ScoringRule};
use crate::{GpError, Result};

/// Rule used to pick `σ²` for criteria that do not determine it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sigma2Rule {
    /// `σ² = (1/n) zᵀ R⁻¹ z` (maximizes the likelihood given the ranges).
    Profiling,
    /// `σ²` making the mean standardized LOO squared residual equal 1.
    Cressie,
    /// The criterion determines `σ²` itself (joint optimization).
    None,
}

/// Which criterion to minimize.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriterionKind {
    /// Mean leave-one-out score under a scoring rule.
    Loo(ScoringRule),
    /// Negative log-likelihood.
    Nll,
    /// Profiled likelihood (σ² eliminated in closed form).
    ProfiledLikelihood,
    /// Hölderized likelihood with exponents `p ≠ 0` and
    /// `q ∈ [-∞, +∞]` (`q = 0` is the geometric-mean limit).
    Holderized { p: f64, q: f64 },
    /// Generalized cross-validation.
    Gcv,
    /// Kernel alignment.
    KernelAlignment,
    /// Fit ranges by NLL per regularity, pick the regularity by LOO-SPE.
    HybridNllSpe,
}

/// Criterion plus the σ² rule applied after σ²-blind minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionSpec {
    pub kind: CriterionKind,
    pub sigma2_rule: Sigma2Rule,
}

impl CriterionSpec {
    /// Default σ² binding for each criterion: profiling for the likelihood
    /// criteria, Cressie for the σ²-blind ones, joint optimization for
    /// LOO-NLPD / LOO-CRPS (whose σ²-optimum coincides with Cressie for
    /// NLPD).
    pub fn with_default_rule(kind: CriterionKind) -> Result<Self> {
        let sigma2_rule = match kind {
            CriterionKind::Nll
            | CriterionKind::ProfiledLikelihood
            | CriterionKind::HybridNllSpe => Sigma2Rule::Profiling,
            CriterionKind::Loo(ScoringRule::Spe)
            | CriterionKind::Gcv
            | CriterionKind::KernelAlignment
            | CriterionKind::Holderized { .. } => Sigma2Rule::Cressie,
            CriterionKind::Loo(_) => Sigma2Rule::None,
        };
        let spec = CriterionSpec { kind, sigma2_rule };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if let CriterionKind::Holderized { p, .. } = self.kind {
            if p == 0.0 || !p.is_finite() {
                return Err(GpError::InvalidInput("Holderized likelihood requires finite p != 0".into()));
            }
        }
        // sigma2-blind criteria need a rule
        if self.is_sigma2_blind() && self.sigma2_rule == Sigma2Rule::None {
            return Err(GpError::InvalidInput(format!(
                "criterion {:?} cannot select sigma2; a sigma2 rule is required",
                self.kind
            )));
        }
        Ok(())
    }

    /// True when the criterion value is invariant under `σ² → c σ²`.
    pub fn is_sigma2_blind(&self) -> bool {
        matches!(
            self.kind,
            CriterionKind::Loo(ScoringRule::Spe)
                | CriterionKind::ProfiledLikelihood
                | CriterionKind::Gcv
                | CriterionKind::KernelAlignment
                | CriterionKind::Holderized { .. }
        )
    }

    /// Parse `"nll"`, `"pl"`, `"loo-spe"`, `"loo-nlpd"`, `"loo-crps"`,
    /// `"gcv"`, `"ka"`, `"nll-spe"`, `"hl:p:q"`.
    pub fn parse(s: &str) -> Result<CriterionSpec> {
        let s = s.trim().to_ascii_lowercase();
        let kind = match s.as_str() {
            "nll" => CriterionKind::Nll,
            "pl" => CriterionKind::ProfiledLikelihood,
            "loo-spe" => CriterionKind::Loo(ScoringRule::Spe),
            "loo-nlpd" => CriterionKind::Loo(ScoringRule::Nlpd),
            "loo-crps" => CriterionKind::Loo(ScoringRule::Crps),
            "gcv" => CriterionKind::Gcv,
            "ka" => CriterionKind::KernelAlignment,
            "nll-spe" | "nll/spe" => CriterionKind::HybridNllSpe,
            other => {
                if let Some(rest) = other.strip_prefix("hl:") {
                    let mut it = rest.split(':');
                    let p: f64 = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| GpError::InvalidInput(format!("bad criterion '{s}'")))?;
                    let q: f64 = match it.next() {
                        Some("inf") => f64::INFINITY,
                        Some("-inf") => f64::NEG_INFINITY,
                        Some(v) => v
                            .parse()
                            .map_err(|_| GpError::InvalidInput(format!("bad criterion '{s}'")))?,
                        None => return Err(GpError::InvalidInput(format!("bad criterion '{s}'"))),
                    };
                    CriterionKind::Holderized { p, q }
                } else {
                    return Err(GpError::InvalidInput(format!("unknown criterion '{s}'")));
                }
            }
        };
        CriterionSpec::with_default_rule(kind)
    }
}

impl std::fmt::Display for CriterionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            CriterionKind::Loo(rule) => write!(f, "loo-{rule}"),
            CriterionKind::Nll => write!(f, "nll"),
            CriterionKind::ProfiledLikelihood => write!(f, "pl"),
            CriterionKind::Holderized { p, q } => write!(f, "hl:{p}:{q}"),
            CriterionKind::Gcv => write!(f, "gcv"),
            CriterionKind::KernelAlignment => write!(f, "ka"),
            CriterionKind::HybridNllSpe => write!(f, "nll-spe"),
        }
    }
}

/// Eigendecomposition of the correlation matrix `R_θ`.
pub struct EigenFactorization {
    /// Eigenvalues of `R_θ` (unordered, as returned by the solver).
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors, one per column.
    pub eigenvectors: DMatrix<f64>,
}

fn reject_zero_observations(data: &Dataset) -> Result<()> {
    if data.z().iter().all(|&v| v == 0.0) {
        return Err(GpError::Degenerate(
            "all observations are zero after centering; sigma2 rules are undefined".into(),
        ));
    }
    Ok(())
}

/// Mean leave-one-out score `J_n^S(θ)`.
pub fn loo_criterion(rule: ScoringRule, theta: &MaternParams, data: &Dataset) -> Result<f64> {
    let preds = gp::loo_predictives(theta, data)?;
    let zs: Vec<f64> = data.z().iter().copied().collect();
    scoring::mean_score(rule, &preds, &zs)
}

/// Negative log-likelihood `½(n log 2π + log det K + zᵀK⁻¹z)`.
pub fn nll(theta: &MaternParams, data: &Dataset) -> Result<f64> {
    let fact = gp::factorize(theta, data)?;
    let alpha = fact.solve(data.z());
    let quad = data.z().dot(&alpha);
    let n = data.len() as f64;
    Ok(0.5 * (n * (2.0 * std::f64::consts::PI).ln() + fact.logdet() + quad))
}

/// Profiling rule `σ²_NLL = (1/n) zᵀ R_θ⁻¹ z` (only the ranges and
/// regularity of `theta` are used).
pub fn profiling_sigma2(theta: &MaternParams, data: &Dataset) -> Result<f64> {
    reject_zero_observations(data)?;
    let r = kernel::corr_matrix(data.x(), theta)?;
    let fact = gp::GpFactorization::new(r)?;
    Ok(data.z().dot(&fact.solve(data.z())) / data.len() as f64)
}

/// Profiled likelihood `log((1/n) zᵀR⁻¹z) + (1/n) log det R`.
pub fn profiled_likelihood(theta: &MaternParams, data: &Dataset) -> Result<f64> {
    reject_zero_observations(data)?;
    let r = kernel::corr_matrix(data.x(), theta)?;
    let fact = gp::GpFactorization::new(r)?;
    let n = data.len() as f64;
    let s2 = data.z().dot(&fact.solve(data.z())) / n;
    Ok(s2.ln() + fact.logdet() / n)
}

/// Cressie's rule: the σ² that makes the mean standardized LOO squared
/// residual equal one.
pub fn cressie_sigma2(theta: &MaternParams, data: &Dataset) -> Result<f64> {
    let unit = MaternParams { sigma2: 1.0, ..theta.clone() };
    let preds = gp::loo_predictives(&unit, data)?;
    let n = data.len() as f64;
    let mut s = 0.0;
    for (p, &z) in preds.iter().zip(data.z().iter()) {
        let e = z - p.mu;
        s += e * e / p.sigma2;
    }
    if s == 0.0 {
        return Err(GpError::Degenerate("all LOO residuals are zero".into()));
    }
    Ok(s / n)
}

/// Eigendecomposition of the correlation matrix.
pub fn eigen_factorize(theta: &MaternParams, data: &Dataset) -> Result<EigenFactorization> {
    let r = kernel::corr_matrix(data.x(), theta)?;
    let eig = SymmetricEigen::new(r);
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(GpError::EigenFailure("non-finite eigenvalues".into()));
    }
    Ok(EigenFactorization { eigenvalues: eig.eigenvalues, eigenvectors: eig.eigenvectors })
}

/// Generalized power mean `((1/n) Σ λ^q)^{1/q}` with the `q = 0`
/// (geometric) and `q = ±∞` (max/min) limits.
pub fn power_mean(lambda: &DVector<f64>, q: f64) -> f64 {
    let n = lambda.len() as f64;
    if q == 0.0 {
        (lambda.iter().map(|v| v.ln()).sum::<f64>() / n).exp()
    } else if q == f64::INFINITY {
        lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    } else if q == f64::NEG_INFINITY {
        lambda.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        (lambda.iter().map(|v| v.powf(q)).sum::<f64>() / n).powf(1.0 / q)
    }
}

/// Hölderized likelihood
/// `(Σ (qᵢᵀz)²/λᵢ^p)^{1/p} · ((1/n) Σ λⱼ^q)^{1/q}`.
pub fn holderized_likelihood(
    p: f64,
    q: f64,
    theta: &MaternParams,
    data: &Dataset,
) -> Result<f64> {
    if p == 0.0 || !p.is_finite() {
        return Err(GpError::InvalidInput("holderized likelihood requires finite p != 0".into()));
    }
    if data.z().iter().all(|&v| v == 0.0) && p < 0.0 {
        return Err(GpError::Degenerate("zero observations with p < 0".into()));
    }
    reject_zero_observations(data)?;
    let eig = eigen_factorize(theta, data)?;
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(GpError::NotPositiveDefinite);
    }
    let c = eig.eigenvectors.transpose() * data.z();
    let sum_p: f64 = c
        .iter()
        .zip(eig.eigenvalues.iter())
        .map(|(&ci, &li)| ci * ci / li.powf(p))
        .sum();
    Ok(sum_p.powf(1.0 / p) * power_mean(&eig.eigenvalues, q))
}

/// GCV as a variance-weighted LOO-SPE:
/// `(1/n) Σ w_i² (z_i - μ_{-i})²` with `w_i = σ̃²/σ²_{-i}` and
/// `σ̃² = ((1/n) Σ 1/σ²_{-i})⁻¹`.
pub fn gcv(theta: &MaternParams, data: &Dataset) -> Result<f64> {
    let preds = gp::loo_predictives(theta, data)?;
    let n = data.len() as f64;
    let harm: f64 = preds.iter().map(|p| 1.0 / p.sigma2).sum::<f64>() / n;
    let sigma_tilde2 = 1.0 / harm;
    let mut s = 0.0;
    for (p, &z) in preds.iter().zip(data.z().iter()) {
        let w = sigma_tilde2 / p.sigma2;
        let e = z - p.mu;
        s += w * w * e * e;
    }
    Ok(s / n)
}

/// Kernel alignment `-zᵀK_θz / (‖K_θ‖_F ‖z‖²)`.
pub fn kernel_alignment(theta: &MaternParams, data: &Dataset) -> Result<f64> {
    reject_zero_observations(data)?;
    let k = kernel::cov_matrix(data.x(), theta)?;
    let z = data.z();
    let quad = z.dot(&(&k * z));
    Ok(-quad / (k.norm() * z.norm_squared()))
}

/// Evaluate a criterion value at full parameters `theta`.
///
/// For σ²-blind criteria the value does not depend on `theta.sigma2`;
/// the σ² rule of `spec` is not consulted here.
pub fn evaluate(spec: &CriterionSpec, theta: &MaternParams, data: &Dataset) -> Result<f64> {
    match spec.kind {
        CriterionKind::Loo(rule) => loo_criterion(rule, theta, data),
        CriterionKind::Nll => nll(theta, data),
        CriterionKind::ProfiledLikelihood => profiled_likelihood(theta, data),
        CriterionKind::Holderized { p, q } => holderized_likelihood(p, q, theta, data),
        CriterionKind::Gcv => gcv(theta, data),
        CriterionKind::KernelAlignment => kernel_alignment(theta, data),
        CriterionKind::HybridNllSpe => Err(GpError::InvalidInput(
            "hybrid NLL/SPE is a selection procedure, not a pointwise criterion".into(),
        )),
    }
}

/// Apply a σ² rule to range-only parameters, returning full parameters.
pub fn apply_sigma2_rule(
    rule: Sigma2Rule,
    theta: &MaternParams,
    data: &Dataset,
) -> Result<MaternParams> {
    let sigma2 = match rule {
        Sigma2Rule::Profiling => profiling_sigma2(theta, data)?,
        Sigma2Rule::Cressie => cressie_sigma2(theta, data)?,
        Sigma2Rule::None => theta.sigma2,
    };
    MaternParams::new(sigma2, theta.rho.clone(), theta.nu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Regularity;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(seed: u64, n: usize, d: usize) -> (MaternParams, Dataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, d, |_, _| rng.gen::<f64>());
        let z = DVector::from_fn(n, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let rho: Vec<f64> = (0..d).map(|_| 0.3 + 0.5 * rng.gen::<f64>()).collect();
        let theta = MaternParams::new(0.5 + rng.gen::<f64>(), rho, Regularity::HalfInteger(1)).unwrap();
        (theta, Dataset::new(x, z).unwrap())
    }

    #[test]
    fn loo_spe_matches_brute_force_and_is_sigma2_blind() {
        let (theta, data) = random_problem(1, 8, 2);
        let j = loo_criterion(ScoringRule::Spe, &theta, &data).unwrap();
        // brute force refit
        let mut s = 0.0;
        for i in 0..data.len() {
            let rest = data.without(i).unwrap();
            let xi = DMatrix::from_fn(1, data.dim(), |_, c| data.x()[(i, c)]);
            let p = gp::predict(&theta, &rest, &xi).unwrap()[0];
            s += (data.z()[i] - p.mu).powi(2);
        }
        assert_relative_eq!(j, s / data.len() as f64, max_relative = 1e-8);
        let scaled = MaternParams { sigma2: theta.sigma2 * 13.0, ..theta.clone() };
        let j2 = loo_criterion(ScoringRule::Spe, &scaled, &data).unwrap();
        assert_relative_eq!(j, j2, max_relative = 1e-12);
    }

    #[test]
    fn nll_basics() {
        // n=1, sigma2=1, z=0 -> 0.5 log 2 pi
        let theta = MaternParams::new(1.0, vec![1.0], Regularity::HalfInteger(0)).unwrap();
        let data = Dataset::new(
            DMatrix::from_row_slice(1, 1, &[0.0]),
            DVector::from_row_slice(&[0.0]),
        )
        .unwrap();
        assert_relative_eq!(
            nll(&theta, &data).unwrap(),
            0.5 * (2.0 * std::f64::consts::PI).ln(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn nll_equals_sequential_conditional_nlpd_sum() {
        let (theta, data) = random_problem(2, 9, 2);
        let total = nll(&theta, &data).unwrap();
        // sequential conditioning: - sum_i log p(z_i | z_1..z_{i-1})
        let mut s = 0.0;
        for i in 0..data.len() {
            let xi = DMatrix::from_fn(1, data.dim(), |_, c| data.x()[(i, c)]);
            let p = if i == 0 {
                gp::GaussianPredictive { mu: 0.0, sigma2: theta.sigma2 }
            } else {
                let xprev = DMatrix::from_fn(i, data.dim(), |r, c| data.x()[(r, c)]);
                let zprev = DVector::from_fn(i, |r, _| data.z()[r]);
                let prev = Dataset::new(xprev, zprev).unwrap();
                gp::predict(&theta, &prev, &xi).unwrap()[0]
            };
            s += scoring::score(ScoringRule::Nlpd, &p, data.z()[i]).unwrap();
        }
        assert_relative_eq!(total, s, max_relative = 1e-8);
    }

    #[test]
    fn profiling_rule_identities() {
        let (theta, data) = random_problem(3, 7, 1);
        let n = data.len() as f64;
        let s2 = profiling_sigma2(&theta, &data).unwrap();
        // stationarity: NLL at profiled sigma2 is lower than nearby sigma2
        let at = |s: f64| {
            let t = MaternParams::new(s, theta.rho.clone(), theta.nu).unwrap();
            nll(&t, &data).unwrap()
        };
        assert!(at(s2) <= at(s2 * 1.001) && at(s2) <= at(s2 * 0.999));
        // NLL(profiled) = 0.5 n (PL + log 2 pi + 1)
        let pl = profiled_likelihood(&theta, &data).unwrap();
        assert_relative_eq!(
            at(s2),
            0.5 * n * (pl + (2.0 * std::f64::consts::PI).ln() + 1.0),
            max_relative = 1e-10
        );
        // scaling z by c multiplies sigma2 by c^2
        let data_c = Dataset::new(data.x().clone(), data.z() * 3.0).unwrap();
        let s2_c = profiling_sigma2(&theta, &data_c).unwrap();
        assert_relative_eq!(s2_c, 9.0 * s2, max_relative = 1e-12);
        // R = I -> ||z||^2/n
        let far = Dataset::new(
            DMatrix::from_row_slice(3, 1, &[0.0, 1e6, 2e6]),
            DVector::from_row_slice(&[1.0, -2.0, 0.5]),
        )
        .unwrap();
        let s2_far = profiling_sigma2(&theta, &far).unwrap();
        assert_relative_eq!(s2_far, (1.0 + 4.0 + 0.25) / 3.0, max_relative = 1e-9);
    }

    #[test]
    fn cressie_rule_defining_property() {
        let (theta, data) = random_problem(4, 8, 2);
        let s2 = cressie_sigma2(&theta, &data).unwrap();
        let fitted = MaternParams::new(s2, theta.rho.clone(), theta.nu).unwrap();
        let preds = gp::loo_predictives(&fitted, &data).unwrap();
        let mean_std: f64 = preds
            .iter()
            .zip(data.z().iter())
            .map(|(p, &z)| (z - p.mu).powi(2) / p.sigma2)
            .sum::<f64>()
            / data.len() as f64;
        assert_relative_eq!(mean_std, 1.0, max_relative = 1e-12);
        // equals the argmin over sigma2 of LOO-NLPD (1-D scan oracle)
        let at = |s: f64| {
            let t = MaternParams::new(s, theta.rho.clone(), theta.nu).unwrap();
            loo_criterion(ScoringRule::Nlpd, &t, &data).unwrap()
        };
        let j0 = at(s2);
        for &f in &[0.9, 0.95, 1.05, 1.1] {
            assert!(at(s2 * f) > j0);
        }
        // n = 1: sigma2 = z1^2
        let one = Dataset::new(
            DMatrix::from_row_slice(1, 1, &[0.5]),
            DVector::from_row_slice(&[1.3]),
        )
        .unwrap();
        let theta1 = MaternParams::new(1.0, vec![0.4], theta.nu).unwrap();
        assert_relative_eq!(cressie_sigma2(&theta1, &one).unwrap(), 1.69, max_relative = 1e-12);
    }

    #[test]
    fn eigen_factorize_properties() {
        let (theta, data) = random_problem(5, 6, 1);
        let eig = eigen_factorize(&theta, &data).unwrap();
        let n = data.len() as f64;
        // trace = n (unit diagonal)
        assert_relative_eq!(eig.eigenvalues.iter().sum::<f64>(), n, max_relative = 1e-10);
        // prod lambda = det R against triangular logdet
        let r = kernel::corr_matrix(data.x(), &theta).unwrap();
        let logdet = gp::GpFactorization::new(r.clone()).unwrap().logdet();
        let sum_log: f64 = eig.eigenvalues.iter().map(|v| v.ln()).sum();
        assert_relative_eq!(sum_log, logdet, max_relative = 1e-8, epsilon = 1e-10);
        // reconstruction
        let recon = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues)
            * eig.eigenvectors.transpose();
        assert!((recon - &r).norm() / r.norm() <= 1e-8);
    }

    #[test]
    fn holderized_identities() {
        let (theta, data) = random_problem(6, 10, 2);
        let n = data.len() as f64;
        // HL(1, q->0) = n exp(PL)
        let hl10 = holderized_likelihood(1.0, 0.0, &theta, &data).unwrap();
        let pl = profiled_likelihood(&theta, &data).unwrap();
        assert_relative_eq!(hl10, n * pl.exp(), max_relative = 1e-10);
        // GCV = n^{-1} HL(2,-1)^2
        let hl2m1 = holderized_likelihood(2.0, -1.0, &theta, &data).unwrap();
        assert_relative_eq!(gcv(&theta, &data).unwrap(), hl2m1 * hl2m1 / n, max_relative = 1e-10);
        // KA = -1/(sqrt(n) ||z||^2 HL(-1,2))
        let hlm12 = holderized_likelihood(-1.0, 2.0, &theta, &data).unwrap();
        assert_relative_eq!(
            kernel_alignment(&theta, &data).unwrap(),
            -1.0 / (n.sqrt() * data.z().norm_squared() * hlm12),
            max_relative = 1e-10
        );
        // sigma2 invariance
        let scaled = MaternParams { sigma2: theta.sigma2 * 5.0, ..theta.clone() };
        assert_relative_eq!(
            holderized_likelihood(2.0, -1.0, &scaled, &data).unwrap(),
            hl2m1,
            max_relative = 1e-12
        );
        // extreme q
        let eig = eigen_factorize(&theta, &data).unwrap();
        let lmax = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lmin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let base = holderized_likelihood(1.0, f64::INFINITY, &theta, &data).unwrap();
        let base_m = holderized_likelihood(1.0, f64::NEG_INFINITY, &theta, &data).unwrap();
        assert_relative_eq!(base / base_m, lmax / lmin, max_relative = 1e-10);
    }

    #[test]
    fn gcv_collapses_to_loo_spe_for_equal_variances() {
        // symmetric two-point configuration: both LOO variances equal
        let theta = MaternParams::new(1.0, vec![1.0], Regularity::HalfInteger(0)).unwrap();
        let data = Dataset::new(
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DVector::from_row_slice(&[1.0, -0.5]),
        )
        .unwrap();
        assert_relative_eq!(
            gcv(&theta, &data).unwrap(),
            loo_criterion(ScoringRule::Spe, &theta, &data).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn kernel_alignment_identity_matrix() {
        let theta = MaternParams::new(2.0, vec![0.01], Regularity::HalfInteger(0)).unwrap();
        // points far apart at this range -> K ~ sigma2 I
        let data = Dataset::new(
            DMatrix::from_row_slice(3, 1, &[0.0, 10.0, 20.0]),
            DVector::from_row_slice(&[1.0, 2.0, -1.0]),
        )
        .unwrap();
        assert_relative_eq!(
            kernel_alignment(&theta, &data).unwrap(),
            -1.0 / 3f64.sqrt(),
            max_relative = 1e-10
        );
        // z = 0 rejected
        let z0 = Dataset::new(
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DVector::from_row_slice(&[0.0, 0.0]),
        )
        .unwrap();
        assert!(kernel_alignment(&theta, &z0).is_err());
    }

    #[test]
    fn recentering_leaves_criteria_unchanged() {
        // adding a constant to z and re-centering is a no-op
        let (theta, data) = random_problem(8, 7, 1);
        let mean = data.z().iter().sum::<f64>() / data.len() as f64;
        let centered = Dataset::new(
            data.x().clone(),
            DVector::from_fn(data.len(), |i, _| data.z()[i] + 5.0 - (mean + 5.0) + mean),
        )
        .unwrap();
        for spec in [
            CriterionSpec::parse("nll").unwrap(),
            CriterionSpec::parse("loo-crps").unwrap(),
            CriterionSpec::parse("gcv").unwrap(),
        ] {
            assert_relative_eq!(
                evaluate(&spec, &theta, &data).unwrap(),
                evaluate(&spec, &theta, &centered).unwrap(),
                max_relative = 1e-12
            );
        }
    }
}
