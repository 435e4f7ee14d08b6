//! Parameter fitting and model selection: condition-number range bounds,
//! the admissible regularity grid, bounded multi-start quasi-Newton
//! minimization of the criteria, and discrete selection over ν.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

use crate::criteria::{self, CriterionKind, CriterionSpec, Sigma2Rule};
use crate::gp::Dataset;
use crate::gradients;
use crate::kernel::{self, MaternParams, Regularity};
use crate::optim::{self, Bounds, OptimOptions};
use crate::scoring::ScoringRule;
use crate::{GpError, Result};

/// Fitting configuration.
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Number of multi-start restarts.
    pub restarts: usize,
    /// Lower bound on every range (in domain-scale units).
    pub rho_min: f64,
    /// Condition-number threshold defining the upper range bound.
    pub kappa: f64,
    pub optim: OptimOptions,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            restarts: 5,
            rho_min: 1e-2,
            kappa: 1e11,
            optim: OptimOptions::default(),
            seed: 0,
        }
    }
}

/// Upper range bound for one (ν, design) pair.
#[derive(Debug, Clone, Copy)]
pub struct RangeBound {
    /// Largest admissible isotropic range.
    pub l: f64,
    /// True when the condition number exceeded κ already at the smallest
    /// probed range (the returned `l` is that floor).
    pub floored: bool,
}

/// Cache of range bounds keyed by (ν, design content hash).
#[derive(Debug, Default)]
pub struct RangeBoundTable {
    map: HashMap<(Regularity, u64), RangeBound>,
}

fn design_signature(x: &DMatrix<f64>) -> u64 {
    // FNV-1a over the raw coordinate bits
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in x.iter() {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }
    h
}

impl RangeBoundTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_compute(
        &mut self,
        nu: Regularity,
        x: &DMatrix<f64>,
        kappa: f64,
    ) -> Result<RangeBound> {
        let key = (nu, design_signature(x));
        if let Some(b) = self.map.get(&key) {
            return Ok(*b);
        }
        let b = range_bound(nu, x, kappa)?;
        self.map.insert(key, b);
        Ok(b)
    }
}

/// 2-norm condition number of the isotropic unit-variance correlation
/// matrix at range `rho` (exact symmetric eigenvalue extremes).
fn isotropic_condition(nu: Regularity, x: &DMatrix<f64>, rho: f64) -> Result<f64> {
    let theta = MaternParams::isotropic_unit(rho, x.ncols(), nu);
    let r = kernel::corr_matrix(x, &theta)?;
    let eig = SymmetricEigen::new(r);
    let lmax = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lmin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lmin > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok(lmax / lmin)
}

/// Largest isotropic range keeping the correlation-matrix condition number
/// at or below `kappa`, by bisection over `[1e-3, 1e3] ×` the design's
/// bounding-box diameter (relative tolerance 1e-3).
pub fn range_bound(nu: Regularity, x: &DMatrix<f64>, kappa: f64) -> Result<RangeBound> {
    if kappa <= 1.0 {
        return Err(GpError::InvalidInput("kappa must exceed 1".into()));
    }
    let (n, d) = x.shape();
    if n == 0 || d == 0 {
        return Err(GpError::InvalidInput("empty design".into()));
    }
    let mut diam2 = 0.0;
    for j in 0..d {
        let col = x.column(j);
        let span = col.max() - col.min();
        diam2 += span * span;
    }
    let diam = if diam2 > 0.0 { diam2.sqrt() } else { 1.0 };
    let mut lo = 1e-3 * diam;
    let mut hi = 1e3 * diam;
    if n == 1 || isotropic_condition(nu, x, hi)? <= kappa {
        return Ok(RangeBound { l: hi, floored: false });
    }
    if isotropic_condition(nu, x, lo)? > kappa {
        return Ok(RangeBound { l: lo, floored: true });
    }
    while hi - lo > 1e-3 * lo {
        let mid = (lo * hi).sqrt(); // geometric bisection over decades
        if isotropic_condition(nu, x, mid)? <= kappa {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(RangeBound { l: lo, floored: false })
}

/// Regularities whose range bound satisfies `L ≥ 0.35 √d` (unit-hypercube
/// convention), with their bounds.
pub fn admissible_nu(
    nu_grid: &[Regularity],
    x: &DMatrix<f64>,
    kappa: f64,
) -> Result<Vec<(Regularity, RangeBound)>> {
    let d = x.ncols() as f64;
    let threshold = 0.35 * d.sqrt();
    let mut out = Vec::new();
    for &nu in nu_grid {
        let b = range_bound(nu, x, kappa)?;
        if b.l >= threshold {
            out.push((nu, b));
        }
    }
    if out.is_empty() {
        return Err(GpError::SelectionFailure(format!(
            "no regularity in the grid admits a range bound >= {threshold:.3} at kappa = {kappa:e}"
        )));
    }
    Ok(out)
}

/// Default regularity grid: `χ ∈ {0,1,2,3,4,d,2d}` plus the
/// squared-exponential limit, deduplicated and ordered by ν.
pub fn default_nu_grid(d: usize) -> Vec<Regularity> {
    let mut chis: Vec<u32> = vec![0, 1, 2, 3, 4, d as u32, 2 * d as u32];
    chis.sort_unstable();
    chis.dedup();
    let mut grid: Vec<Regularity> = chis.into_iter().map(Regularity::HalfInteger).collect();
    grid.push(Regularity::GaussianLimit);
    grid
}

/// Result of one criterion fit at a fixed regularity.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: MaternParams,
    /// Criterion value at `theta` (full NLL for the NLL criterion).
    pub criterion_value: f64,
    pub n_restarts_used: usize,
    pub converged: bool,
    /// Some fitted range sits at the box bound.
    pub at_bound: bool,
    pub n_evals: usize,
    pub n_grads: usize,
}

enum FitVariables {
    /// Optimize `log ρ` only; σ² is bound by a rule afterwards.  The
    /// objective is the criterion at σ² = 1 (profiled likelihood for the
    /// likelihood criteria).
    RangesOnly,
    /// Optimize `(log σ², log ρ)` jointly.
    Joint,
}

fn fit_objective_kind(spec: &CriterionSpec) -> Result<(CriterionKind, FitVariables)> {
    Ok(match spec.kind {
        // NLL shares its range-minimizer with the profiled likelihood
        CriterionKind::Nll | CriterionKind::ProfiledLikelihood => {
            (CriterionKind::ProfiledLikelihood, FitVariables::RangesOnly)
        }
        CriterionKind::Loo(ScoringRule::Spe)
        | CriterionKind::Gcv
        | CriterionKind::KernelAlignment
        | CriterionKind::Holderized { .. } => (spec.kind, FitVariables::RangesOnly),
        CriterionKind::Loo(_) => (spec.kind, FitVariables::Joint),
        CriterionKind::HybridNllSpe => {
            return Err(GpError::InvalidInput(
                "hybrid NLL/SPE is handled by select_model / hybrid_nll_spe".into(),
            ))
        }
    })
}

const LOG_SIGMA2_BOUND: f64 = 18.0; // e^18 ≈ 6.6e7, generous for unit-variance data

/// Fit a criterion at fixed regularity inside the range box
/// `[ρ_min, L]^d` using multi-start projected quasi-Newton minimization.
pub fn fit(
    spec: &CriterionSpec,
    data: &Dataset,
    nu: Regularity,
    bound: RangeBound,
    config: &FitConfig,
) -> Result<FitResult> {
    spec.validate()?;
    let (obj_kind, vars) = fit_objective_kind(spec)?;
    let d = data.dim();
    let joint = matches!(vars, FitVariables::Joint);
    let nvars = if joint { d + 1 } else { d };

    let (log_lo, log_hi) = (config.rho_min.ln(), bound.l.max(config.rho_min * (1.0 + 1e-9)).ln());
    let mut lower = DVector::from_element(nvars, log_lo);
    let mut upper = DVector::from_element(nvars, log_hi);
    if joint {
        lower[0] = -LOG_SIGMA2_BOUND;
        upper[0] = LOG_SIGMA2_BOUND;
    }
    let bounds = Bounds::new(lower, upper)?;

    let theta_of = |v: &DVector<f64>| -> Result<MaternParams> {
        let (s2, off) = if joint { (v[0].exp(), 1) } else { (1.0, 0) };
        let rho: Vec<f64> = (0..d).map(|j| v[off + j].exp()).collect();
        MaternParams::new(s2, rho, nu)
    };
    let obj_spec = CriterionSpec { kind: obj_kind, sigma2_rule: Sigma2Rule::None };

    let n_evals = std::cell::Cell::new(0usize);
    let n_grads = std::cell::Cell::new(0usize);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(optim::OptimResult, f64)> = None;
    let mut starts_used = 0usize;
    let mut last_err: Option<GpError> = None;

    for _ in 0..config.restarts.max(1) {
        // log-uniform ranges over [rho_min, L]
        let mut x0 = DVector::zeros(nvars);
        let off = if joint { 1 } else { 0 };
        for j in 0..d {
            x0[off + j] = log_lo + rng.gen::<f64>() * (log_hi - log_lo);
        }
        if joint {
            // start sigma2 at the Cressie scale of the starting ranges;
            // a flat sigma2 = 1 start strands NLPD-type criteria in poor
            // local optima when the data variance is far from unit
            let rho0: Vec<f64> = (0..d).map(|j| x0[1 + j].exp()).collect();
            x0[0] = MaternParams::new(1.0, rho0, nu)
                .and_then(|t| criteria::cressie_sigma2(&t, data))
                .map(|s2| s2.ln().clamp(-LOG_SIGMA2_BOUND, LOG_SIGMA2_BOUND))
                .unwrap_or(0.0);
        }
        starts_used += 1;
        let run = optim::minimize(
            optim::SplitObjective {
                value: |v: &DVector<f64>| {
                    let theta = theta_of(v)?;
                    n_evals.set(n_evals.get() + 1);
                    criteria::evaluate(&obj_spec, &theta, data)
                },
                value_grad: |v: &DVector<f64>| {
                    let theta = theta_of(v)?;
                    n_evals.set(n_evals.get() + 1);
                    n_grads.set(n_grads.get() + 1);
                    let f = criteria::evaluate(&obj_spec, &theta, data)?;
                    let g_full = gradients::criterion_gradient(&obj_spec, &theta, data)?;
                    let g = if joint {
                        g_full
                    } else {
                        DVector::from_fn(d, |j, _| g_full[j + 1])
                    };
                    Ok((f, g))
                },
            },
            &x0,
            &bounds,
            &config.optim,
        );
        match run {
            Ok(r) => {
                // lowest value wins; a flat "converged" basin must not beat
                // a better point that merely ran out of iterations
                let better = match &best {
                    None => true,
                    Some((b, _)) => r.f < b.f,
                };
                if better {
                    let at_bound = (0..d).any(|j| {
                        let v = r.x[if joint { j + 1 } else { j }];
                        (v - log_lo).abs() <= 1e-6 || (v - log_hi).abs() <= 1e-6
                    });
                    best = Some((r, if at_bound { 1.0 } else { 0.0 }));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }

    let Some((run, at_bound_flag)) = best else {
        return Err(GpError::SelectionFailure(format!(
            "all {starts_used} starts failed for {spec} at nu = {nu}: {}",
            last_err.map(|e| e.to_string()).unwrap_or_else(|| "no diagnostic".into())
        )));
    };

    // bind sigma2 and report the criterion in its comparable form
    let theta_raw = theta_of(&run.x)?;
    let theta = criteria::apply_sigma2_rule(spec.sigma2_rule, &theta_raw, data)?;
    let criterion_value = match spec.kind {
        CriterionKind::Nll => criteria::nll(&theta, data)?,
        _ => criteria::evaluate(spec, &theta, data)?,
    };
    Ok(FitResult {
        theta,
        criterion_value,
        n_restarts_used: starts_used,
        converged: run.converged,
        at_bound: at_bound_flag > 0.0,
        n_evals: n_evals.get(),
        n_grads: n_grads.get(),
    })
}

/// Outcome of discrete model selection over the regularity grid.
#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub fit: FitResult,
    pub nu: Regularity,
    /// Criterion value per admissible ν, in grid order.
    pub per_nu: Vec<(Regularity, f64)>,
}

/// Fit every admissible ν with the same criterion and keep the minimizer.
/// `HybridNllSpe` delegates to [`hybrid_nll_spe`].
pub fn select_model(
    spec: &CriterionSpec,
    data: &Dataset,
    nu_grid: &[Regularity],
    config: &FitConfig,
) -> Result<SelectionResult> {
    let admissible = admissible_nu(nu_grid, data.x(), config.kappa)?;
    select_model_with_bounds(spec, data, &admissible, config)
}

/// As [`select_model`], with precomputed range bounds (e.g. bounds shared
/// across the replicates of a benchmark problem).
pub fn select_model_with_bounds(
    spec: &CriterionSpec,
    data: &Dataset,
    admissible: &[(Regularity, RangeBound)],
    config: &FitConfig,
) -> Result<SelectionResult> {
    if matches!(spec.kind, CriterionKind::HybridNllSpe) {
        return hybrid_nll_spe_with_bounds(data, admissible, config);
    }
    let mut best: Option<(FitResult, Regularity)> = None;
    let mut per_nu = Vec::new();
    let mut last_err = None;
    for &(nu, bound) in admissible {
        match fit(spec, data, nu, bound, config) {
            Ok(f) => {
                per_nu.push((nu, f.criterion_value));
                if best.as_ref().map_or(true, |(b, _)| f.criterion_value < b.criterion_value) {
                    best = Some((f, nu));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some((fit, nu)) = best else {
        return Err(GpError::SelectionFailure(format!(
            "every regularity failed: {}",
            last_err.map(|e| e.to_string()).unwrap_or_default()
        )));
    };
    Ok(SelectionResult { fit, nu, per_nu })
}

/// Fit ranges and σ² by NLL at every admissible ν, then pick the ν whose
/// fitted model minimizes the mean LOO squared prediction error.
pub fn hybrid_nll_spe(
    data: &Dataset,
    nu_grid: &[Regularity],
    config: &FitConfig,
) -> Result<SelectionResult> {
    let admissible = admissible_nu(nu_grid, data.x(), config.kappa)?;
    hybrid_nll_spe_with_bounds(data, &admissible, config)
}

/// As [`hybrid_nll_spe`], with precomputed range bounds.
pub fn hybrid_nll_spe_with_bounds(
    data: &Dataset,
    admissible: &[(Regularity, RangeBound)],
    config: &FitConfig,
) -> Result<SelectionResult> {
    let nll_spec = CriterionSpec::with_default_rule(CriterionKind::Nll)?;
    let mut best: Option<(FitResult, Regularity, f64)> = None;
    let mut per_nu = Vec::new();
    let mut last_err = None;
    for &(nu, bound) in admissible {
        match fit(&nll_spec, data, nu, bound, config) {
            Ok(f) => match criteria::loo_criterion(ScoringRule::Spe, &f.theta, data) {
                Ok(spe) => {
                    per_nu.push((nu, spe));
                    if best.as_ref().map_or(true, |(_, _, b)| spe < *b) {
                        best = Some((f, nu, spe));
                    }
                }
                Err(e) => last_err = Some(e),
            },
            Err(e) => last_err = Some(e),
        }
    }
    let Some((mut fit, nu, spe)) = best else {
        return Err(GpError::SelectionFailure(format!(
            "every regularity failed: {}",
            last_err.map(|e| e.to_string()).unwrap_or_default()
        )));
    };
    fit.criterion_value = spe;
    Ok(SelectionResult { fit, nu, per_nu })
}
