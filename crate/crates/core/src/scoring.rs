//! Negatively oriented scoring rules for univariate Gaussian predictive
//! distributions, with closed forms and their derivatives.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::gp::GaussianPredictive;
use crate::{GpError, Result};

const INV_SQRT_2PI: f64 = 0.3989422804014327;
const INV_SQRT_PI: f64 = 0.5641895835477563;

/// Scoring rule for a Gaussian predictive distribution (smaller is better).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoringRule {
    /// Squared prediction error `(z - μ)²`.
    Spe,
    /// Negative log predictive density.
    Nlpd,
    /// Continuous ranked probability score.
    Crps,
    /// Interval score at coverage level `1 - α`.
    IntervalScore { alpha: f64 },
}

impl ScoringRule {
    /// Interval score at the 95% level used by the benchmark.
    pub const IS95: ScoringRule = ScoringRule::IntervalScore { alpha: 0.05 };

    pub fn parse(s: &str) -> Result<ScoringRule> {
        match s.trim().to_ascii_lowercase().as_str() {
            "spe" => Ok(ScoringRule::Spe),
            "nlpd" => Ok(ScoringRule::Nlpd),
            "crps" => Ok(ScoringRule::Crps),
            "is" | "is95" => Ok(ScoringRule::IS95),
            other => Err(GpError::InvalidInput(format!("unknown scoring rule '{other}'"))),
        }
    }

    fn validate(&self) -> Result<()> {
        if let ScoringRule::IntervalScore { alpha } = self {
            if !(*alpha > 0.0 && *alpha < 1.0) {
                return Err(GpError::InvalidInput(format!(
                    "interval score level alpha must lie in (0,1), got {alpha}"
                )));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for ScoringRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScoringRule::Spe => write!(f, "spe"),
            ScoringRule::Nlpd => write!(f, "nlpd"),
            ScoringRule::Crps => write!(f, "crps"),
            ScoringRule::IntervalScore { alpha } => write!(f, "is{}", (1.0 - alpha) * 100.0),
        }
    }
}

/// Standard Gaussian density.
pub fn std_normal_pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

/// Standard Gaussian cumulative distribution function.
pub fn std_normal_cdf(u: f64) -> f64 {
    // statrs Normal::cdf uses erfc; accurate in both tails.
    Normal::standard().cdf(u)
}

/// Standard Gaussian quantile function.
pub fn std_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Score a single Gaussian predictive distribution against an observation.
pub fn score(rule: ScoringRule, p: &GaussianPredictive, z: f64) -> Result<f64> {
    rule.validate()?;
    if !(p.sigma2 > 0.0) {
        return Err(GpError::InvalidInput(format!(
            "predictive variance must be positive, got {}",
            p.sigma2
        )));
    }
    let e = z - p.mu;
    Ok(match rule {
        ScoringRule::Spe => e * e,
        ScoringRule::Nlpd => {
            0.5 * (2.0 * std::f64::consts::PI * p.sigma2).ln() + 0.5 * e * e / p.sigma2
        }
        ScoringRule::Crps => {
            let sigma = p.sigma2.sqrt();
            let u = e / sigma;
            sigma * (u * (2.0 * std_normal_cdf(u) - 1.0) + 2.0 * std_normal_pdf(u) - INV_SQRT_PI)
        }
        ScoringRule::IntervalScore { alpha } => {
            let sigma = p.sigma2.sqrt();
            let q = std_normal_quantile(1.0 - alpha / 2.0);
            let l = p.mu - q * sigma;
            let u = p.mu + q * sigma;
            let mut s = u - l;
            if z <= l {
                s += 2.0 / alpha * (l - z);
            } else if z > u {
                s += 2.0 / alpha * (z - u);
            }
            s
        }
    })
}

/// Partial derivatives of the score with respect to `μ` and `σ²`.
///
/// At the interval-score quantile-coincidence points the right-continuous
/// branch is used.
pub fn score_grad(rule: ScoringRule, p: &GaussianPredictive, z: f64) -> Result<(f64, f64)> {
    rule.validate()?;
    if !(p.sigma2 > 0.0) {
        return Err(GpError::InvalidInput("predictive variance must be positive".into()));
    }
    let e = z - p.mu;
    Ok(match rule {
        ScoringRule::Spe => (-2.0 * e, 0.0),
        ScoringRule::Nlpd => {
            (-e / p.sigma2, 0.5 / p.sigma2 - 0.5 * e * e / (p.sigma2 * p.sigma2))
        }
        ScoringRule::Crps => {
            let sigma = p.sigma2.sqrt();
            let u = e / sigma;
            let dmu = -(2.0 * std_normal_cdf(u) - 1.0);
            let dsigma = 2.0 * std_normal_pdf(u) - INV_SQRT_PI;
            (dmu, dsigma / (2.0 * sigma))
        }
        ScoringRule::IntervalScore { alpha } => {
            let sigma = p.sigma2.sqrt();
            let q = std_normal_quantile(1.0 - alpha / 2.0);
            let l = p.mu - q * sigma;
            let u = p.mu + q * sigma;
            let (below, above) = (z <= l, z > u);
            let dmu = 2.0 / alpha * ((below as i32 as f64) - (above as i32 as f64));
            let dsigma =
                2.0 * q - 2.0 / alpha * q * ((below as i32 as f64) + (above as i32 as f64));
            (dmu, dsigma / (2.0 * sigma))
        }
    })
}

/// Arithmetic mean of per-point scores.
pub fn mean_score(
    rule: ScoringRule,
    predictives: &[GaussianPredictive],
    zs: &[f64],
) -> Result<f64> {
    if predictives.is_empty() || predictives.len() != zs.len() {
        return Err(GpError::InvalidInput(format!(
            "mean_score needs equal non-empty lists, got {} and {}",
            predictives.len(),
            zs.len()
        )));
    }
    let mut s = 0.0;
    for (p, &z) in predictives.iter().zip(zs) {
        s += score(rule, p, z)?;
    }
    Ok(s / predictives.len() as f64)
}
