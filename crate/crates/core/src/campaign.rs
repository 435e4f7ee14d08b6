//! Benchmark campaign: fit every criterion at every regularity on seeded
//! replicated designs, score the fitted models on a shared test set,
//! compute directly-minimized reference scores and simple baselines, and
//! decompose the variance of the resulting table.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::criteria::CriterionSpec;
use crate::design::{self, DesignBundle};
use crate::gp;
use crate::gradients;
use crate::kernel::{MaternParams, Regularity};
use crate::optim::{self, Bounds};
use crate::scoring::{self, ScoringRule};
use crate::selection::{self, FitConfig, RangeBound};
use crate::testfns::Problem;
use crate::{GpError, Result};

/// One row of the campaign table.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRecord {
    pub problem: String,
    pub d: usize,
    pub n: usize,
    pub replicate: usize,
    /// Criterion id, or `r-star` for the directly minimized reference.
    pub criterion: String,
    /// `"1/2"` … `"inf"`, or `"auto"` for criterion-selected regularity.
    pub nu: String,
    pub rule: String,
    /// Test-set mean score; NaN for failed cells.
    pub r: f64,
    pub converged: bool,
    pub sigma2: f64,
    pub rho: Vec<f64>,
}

/// Campaign configuration (desk-scale defaults).
#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub n: usize,
    pub n_test: usize,
    pub m_replicates: usize,
    pub criteria: Vec<CriterionSpec>,
    pub nu_grid: Vec<Regularity>,
    /// Add a `nu = auto` row per criterion (discrete selection over the grid).
    pub include_auto: bool,
    pub rules: Vec<ScoringRule>,
    /// Also compute the directly minimized `r-star` rows per rule.
    pub compute_r_star: bool,
    pub fit: FitConfig,
    pub seed: u64,
}

impl CampaignConfig {
    pub fn desk_scale(d: usize, n: usize) -> Self {
        CampaignConfig {
            n,
            n_test: 2000,
            m_replicates: 20,
            criteria: ["nll", "loo-spe", "loo-nlpd", "loo-crps", "gcv", "ka"]
                .iter()
                .map(|s| CriterionSpec::parse(s).unwrap())
                .collect(),
            nu_grid: selection::default_nu_grid(d),
            include_auto: true,
            rules: vec![ScoringRule::Spe, ScoringRule::Nlpd, ScoringRule::Crps],
            compute_r_star: false,
            fit: FitConfig::default(),
            seed: 0,
        }
    }
}

/// Test-set mean score `R(θ; S)` of a fitted model on a bundle.
pub fn evaluate_r(theta: &MaternParams, bundle: &DesignBundle, rule: ScoringRule) -> Result<f64> {
    let preds = gp::predict(theta, &bundle.train, &bundle.x_test)?;
    let zs: Vec<f64> = bundle.z_test.iter().copied().collect();
    scoring::mean_score(rule, &preds, &zs)
}

/// Directly minimize `R(θ; S)` over `(log σ², log ρ)` by multi-start
/// quasi-Newton on the test-score gradient.
pub fn optimal_r_star(
    bundle: &DesignBundle,
    rule: ScoringRule,
    nu: Regularity,
    bound: RangeBound,
    config: &FitConfig,
    warm_starts: &[MaternParams],
) -> Result<(MaternParams, f64)> {
    let data = &bundle.train;
    let d = data.dim();
    let (log_lo, log_hi) = (config.rho_min.ln(), bound.l.max(config.rho_min * 1.0001).ln());
    let mut lower = DVector::from_element(d + 1, log_lo);
    let mut upper = DVector::from_element(d + 1, log_hi);
    lower[0] = -18.0;
    upper[0] = 18.0;
    // widen the sigma2 box so every warm start is strictly interior
    for t in warm_starts {
        let ls = t.sigma2.ln();
        lower[0] = lower[0].min(ls - 1.0);
        upper[0] = upper[0].max(ls + 1.0);
    }
    let bounds = Bounds::new(lower, upper)?;
    let theta_of = |v: &DVector<f64>| -> Result<MaternParams> {
        MaternParams::new(v[0].exp(), (0..d).map(|j| v[j + 1].exp()).collect(), nu)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5157_4152);
    let mut starts: Vec<DVector<f64>> = warm_starts
        .iter()
        .map(|t| {
            let mut v = DVector::zeros(d + 1);
            v[0] = t.sigma2.ln();
            for j in 0..d {
                v[j + 1] = t.rho[j].ln().clamp(log_lo, log_hi);
            }
            v
        })
        .collect();
    for _ in 0..config.restarts.max(1) {
        let mut x0 = DVector::zeros(d + 1);
        for j in 0..d {
            x0[j + 1] = log_lo + rng.gen::<f64>() * (log_hi - log_lo);
        }
        starts.push(x0);
    }
    // the direct minimum can never exceed R at any warm start: evaluate the
    // warm starts as-is so log-coordinate round-trips cannot cost an ulp
    let mut best: Option<(MaternParams, f64)> = None;
    for t in warm_starts {
        if let Ok(r) = evaluate_r(t, bundle, rule) {
            if best.as_ref().map_or(true, |(_, bf)| r < *bf) {
                best = Some((t.clone(), r));
            }
        }
    }
    for x0 in &starts {
        let run = optim::minimize(
            optim::SplitObjective {
                value: |v: &DVector<f64>| evaluate_r(&theta_of(v)?, bundle, rule),
                value_grad: |v: &DVector<f64>| {
                    let theta = theta_of(v)?;
                    let f = evaluate_r(&theta, bundle, rule)?;
                    let g = gradients::test_score_gradient(
                        rule,
                        &theta,
                        data,
                        &bundle.x_test,
                        &bundle.z_test,
                    )?;
                    Ok((f, g))
                },
            },
            x0,
            &bounds,
            &config.optim,
        );
        if let Ok(r) = run {
            if best.as_ref().map_or(true, |(_, bf)| r.f < *bf) {
                best = Some((theta_of(&r.x)?, r.f));
            }
        }
    }
    best.ok_or_else(|| GpError::SelectionFailure("every r-star start failed".into()))
}

/// Baseline test-set SPE values.
#[derive(Debug, Clone)]
pub struct BaselineR {
    /// Ordinary least squares on `(1, x)`; `None` when the design is
    /// rank-deficient.
    pub linear: Option<f64>,
    pub nn1: f64,
    pub nn2: f64,
}

/// SPE of a linear least-squares predictor and of k-nearest-neighbor
/// averaging (k = 1, 2) on the test set.
pub fn baselines(bundle: &DesignBundle) -> Result<BaselineR> {
    let data = &bundle.train;
    let (n, d) = data.x().shape();
    let m = bundle.x_test.nrows();

    // linear: z ~ a + bᵀx by least squares
    let linear = if n >= d + 1 {
        let a = {
            let mut a = DMatrix::zeros(n, d + 1);
            for i in 0..n {
                a[(i, 0)] = 1.0;
                for j in 0..d {
                    a[(i, j + 1)] = data.x()[(i, j)];
                }
            }
            a
        };
        let svd = a.clone().svd(true, true);
        let tol = 1e-10 * svd.singular_values.max();
        if svd.singular_values.iter().any(|&s| s <= tol) {
            None
        } else {
            let beta = svd.solve(data.z(), tol).map_err(|e| GpError::Degenerate(e.into()))?;
            let mut s = 0.0;
            for t in 0..m {
                let mut pred = beta[0];
                for j in 0..d {
                    pred += beta[j + 1] * bundle.x_test[(t, j)];
                }
                s += (bundle.z_test[t] - pred).powi(2);
            }
            Some(s / m as f64)
        }
    } else {
        None
    };

    // k-nearest neighbors
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for t in 0..m {
        let mut d1 = (f64::INFINITY, 0usize);
        let mut d2 = (f64::INFINITY, 0usize);
        for i in 0..n {
            let mut dist = 0.0;
            for j in 0..d {
                let e = data.x()[(i, j)] - bundle.x_test[(t, j)];
                dist += e * e;
            }
            if dist < d1.0 {
                d2 = d1;
                d1 = (dist, i);
            } else if dist < d2.0 {
                d2 = (dist, i);
            }
        }
        let p1 = data.z()[d1.1];
        s1 += (bundle.z_test[t] - p1).powi(2);
        let p2 = if n >= 2 { 0.5 * (p1 + data.z()[d2.1]) } else { p1 };
        s2 += (bundle.z_test[t] - p2).powi(2);
    }
    Ok(BaselineR { linear, nn1: s1 / m as f64, nn2: s2 / m as f64 })
}

fn cell_seed(master: u64, parts: &[u64]) -> u64 {
    // splitmix-style mixing of the cell coordinates into the master seed
    let mut s = master;
    for &p in parts {
        s = s.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p);
        let mut z = s;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        s = z ^ (z >> 31);
    }
    s
}

fn failed_record(
    problem: &Problem,
    n: usize,
    replicate: usize,
    criterion: &str,
    nu: &str,
    rule: &str,
) -> BenchmarkRecord {
    BenchmarkRecord {
        problem: problem.name.clone(),
        d: problem.dim,
        n,
        replicate,
        criterion: criterion.into(),
        nu: nu.into(),
        rule: rule.into(),
        r: f64::NAN,
        converged: false,
        sigma2: f64::NAN,
        rho: vec![f64::NAN; problem.dim],
    }
}

fn records_for_theta(
    problem: &Problem,
    config: &CampaignConfig,
    bundle: &DesignBundle,
    replicate: usize,
    criterion: &str,
    nu: &str,
    theta: &MaternParams,
    converged: bool,
) -> Vec<BenchmarkRecord> {
    config
        .rules
        .iter()
        .map(|&rule| match evaluate_r(theta, bundle, rule) {
            Ok(r) => BenchmarkRecord {
                problem: problem.name.clone(),
                d: problem.dim,
                n: config.n,
                replicate,
                criterion: criterion.into(),
                nu: nu.into(),
                rule: rule.to_string(),
                r,
                converged,
                sigma2: theta.sigma2,
                rho: theta.rho.clone(),
            },
            Err(_) => failed_record(problem, config.n, replicate, criterion, nu, &rule.to_string()),
        })
        .collect()
}

/// Seed used for a problem's design generation within a campaign (exposed
/// so external tooling can regenerate the same bundles).
pub fn problem_design_seed(master: u64, problem_name: &str) -> u64 {
    cell_seed(master, &[fnv(problem_name.as_bytes())])
}

/// Run the full campaign for one problem: all (replicate, criterion, ν)
/// cells in parallel, deterministic under the seed, canonically ordered.
pub fn run_problem(problem: &Problem, config: &CampaignConfig) -> Result<Vec<BenchmarkRecord>> {
    let bundles = design::make_designs(
        problem,
        config.n,
        config.n_test,
        config.m_replicates,
        problem_design_seed(config.seed, &problem.name),
    )?;
    // range bounds are shared across replicates: computed on the first design
    let admissible =
        selection::admissible_nu(&config.nu_grid, bundles[0].train.x(), config.fit.kappa)?;

    struct Cell {
        replicate: usize,
        criterion: usize,
        nu: Option<(Regularity, RangeBound)>, // None = auto
    }
    let mut cells = Vec::new();
    for replicate in 0..config.m_replicates {
        for (ci, _) in config.criteria.iter().enumerate() {
            for &(nu, bound) in &admissible {
                cells.push(Cell { replicate, criterion: ci, nu: Some((nu, bound)) });
            }
            if config.include_auto {
                cells.push(Cell { replicate, criterion: ci, nu: None });
            }
        }
    }

    // phase 1: criterion fits; keep the fitted parameters so the r-star
    // cells can warm-start from them (the direct minimum must dominate
    // every fitted model on the same cell)
    let fitted: Vec<(Vec<BenchmarkRecord>, Option<(usize, String, MaternParams)>)> = cells
        .par_iter()
        .map(|cell| {
            let bundle = &bundles[cell.replicate];
            let data = &bundle.train;
            match cell.nu {
                Some((nu, bound)) => {
                    let ci = cell.criterion;
                    let spec = &config.criteria[ci];
                    let name = spec.to_string();
                    let fit_config = FitConfig {
                        seed: cell_seed(
                            config.seed,
                            &[cell.replicate as u64, ci as u64, fnv(nu.to_string().as_bytes())],
                        ),
                        ..config.fit.clone()
                    };
                    match selection::fit(spec, data, nu, bound, &fit_config) {
                        Ok(f) => (
                            records_for_theta(
                                problem,
                                config,
                                bundle,
                                cell.replicate,
                                &name,
                                &nu.to_string(),
                                &f.theta,
                                f.converged,
                            ),
                            Some((cell.replicate, nu.to_string(), f.theta)),
                        ),
                        Err(_) => (
                            config
                                .rules
                                .iter()
                                .map(|rule| {
                                    failed_record(
                                        problem,
                                        config.n,
                                        cell.replicate,
                                        &name,
                                        &nu.to_string(),
                                        &rule.to_string(),
                                    )
                                })
                                .collect(),
                            None,
                        ),
                    }
                }
                None => {
                    let ci = cell.criterion;
                    let spec = &config.criteria[ci];
                    let name = spec.to_string();
                    let fit_config = FitConfig {
                        seed: cell_seed(config.seed, &[cell.replicate as u64, ci as u64, u64::MAX]),
                        ..config.fit.clone()
                    };
                    match selection::select_model_with_bounds(spec, data, &admissible, &fit_config)
                    {
                        Ok(sel) => (
                            records_for_theta(
                                problem,
                                config,
                                bundle,
                                cell.replicate,
                                &name,
                                "auto",
                                &sel.fit.theta,
                                sel.fit.converged,
                            ),
                            Some((cell.replicate, sel.nu.to_string(), sel.fit.theta)),
                        ),
                        Err(_) => (
                            config
                                .rules
                                .iter()
                                .map(|rule| {
                                    failed_record(
                                        problem,
                                        config.n,
                                        cell.replicate,
                                        &name,
                                        "auto",
                                        &rule.to_string(),
                                    )
                                })
                                .collect(),
                            None,
                        ),
                    }
                }
            }
        })
        .collect();

    let mut records: Vec<BenchmarkRecord> = Vec::new();
    let mut thetas: HashMap<(usize, String), Vec<MaternParams>> = HashMap::new();
    for (recs, fit) in fitted {
        records.extend(recs);
        if let Some((replicate, nu, theta)) = fit {
            thetas.entry((replicate, nu)).or_default().push(theta);
        }
    }

    // phase 2: direct minimization of R per (replicate, rule, nu)
    if config.compute_r_star {
        let mut star_cells = Vec::new();
        for replicate in 0..config.m_replicates {
            for &rule in &config.rules {
                for &(nu, bound) in &admissible {
                    star_cells.push((replicate, rule, nu, bound));
                }
            }
        }
        let star_records: Vec<BenchmarkRecord> = star_cells
            .par_iter()
            .map(|&(replicate, rule, nu, bound)| {
                let bundle = &bundles[replicate];
                let fit_config = FitConfig {
                    seed: cell_seed(
                        config.seed,
                        &[
                            replicate as u64,
                            fnv(rule.to_string().as_bytes()),
                            fnv(nu.to_string().as_bytes()),
                        ],
                    ),
                    ..config.fit.clone()
                };
                let warm = thetas
                    .get(&(replicate, nu.to_string()))
                    .map(Vec::as_slice)
                    .unwrap_or(&[]);
                match optimal_r_star(bundle, rule, nu, bound, &fit_config, warm) {
                    Ok((theta, r)) => BenchmarkRecord {
                        problem: problem.name.clone(),
                        d: problem.dim,
                        n: config.n,
                        replicate,
                        criterion: "r-star".into(),
                        nu: nu.to_string(),
                        rule: rule.to_string(),
                        r,
                        converged: true,
                        sigma2: theta.sigma2,
                        rho: theta.rho,
                    },
                    Err(_) => failed_record(
                        problem,
                        config.n,
                        replicate,
                        "r-star",
                        &nu.to_string(),
                        &rule.to_string(),
                    ),
                }
            })
            .collect();
        records.extend(star_records);
    }

    // canonical ordering: concurrency never changes the emitted table
    records.sort_by(|a, b| {
        (&a.problem, a.replicate, &a.criterion, &a.nu, &a.rule).cmp(&(
            &b.problem,
            b.replicate,
            &b.criterion,
            &b.nu,
            &b.rule,
        ))
    });
    Ok(records)
}

fn fnv(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Run the campaign over several problems.
pub fn run_campaign(
    problems: &[Problem],
    config: &CampaignConfig,
) -> Result<Vec<BenchmarkRecord>> {
    let mut out = Vec::new();
    for p in problems {
        out.extend(run_problem(p, config)?);
    }
    Ok(out)
}

/// Two-factor fixed-effects variance decomposition of the
/// `(criterion × ν)` grid of `log₁₀(replicate-averaged R)`.
#[derive(Debug, Clone)]
pub struct AnovaSummary {
    pub s_criterion: f64,
    pub s_nu: f64,
    pub s_int: f64,
    pub total_variance: f64,
    /// Replicates dropped because some cell failed (listwise exclusion).
    pub excluded_replicates: usize,
}

/// Decompose the table of one (problem, rule) pair over a criterion subset.
///
/// `auto` and `r-star` rows are ignored.  Replicates with any failed cell
/// in the subset are excluded listwise.
pub fn anova_decompose(
    records: &[BenchmarkRecord],
    criteria: &[String],
    rule: &str,
) -> Result<AnovaSummary> {
    let mut nus: Vec<String> = Vec::new();
    let mut reps: Vec<usize> = Vec::new();
    for r in records {
        if r.rule != rule || r.nu == "auto" || r.criterion == "r-star" {
            continue;
        }
        if !criteria.contains(&r.criterion) {
            continue;
        }
        if !nus.contains(&r.nu) {
            nus.push(r.nu.clone());
        }
        if !reps.contains(&r.replicate) {
            reps.push(r.replicate);
        }
    }
    if nus.is_empty() || criteria.is_empty() {
        return Err(GpError::InvalidInput("empty ANOVA grid".into()));
    }
    let lookup = |c: &str, nu: &str, rep: usize| -> Option<f64> {
        records
            .iter()
            .find(|r| {
                r.rule == rule && r.criterion == c && r.nu == *nu && r.replicate == rep
            })
            .map(|r| r.r)
    };
    // listwise exclusion of replicates with any failed cell
    let mut good_reps = Vec::new();
    'rep: for &rep in &reps {
        for c in criteria {
            for nu in &nus {
                match lookup(c, nu, rep) {
                    Some(v) if v.is_finite() => {}
                    _ => continue 'rep,
                }
            }
        }
        good_reps.push(rep);
    }
    if good_reps.is_empty() {
        return Err(GpError::Degenerate("every replicate has a failed cell".into()));
    }
    let excluded = reps.len() - good_reps.len();

    let (ni, nj) = (criteria.len(), nus.len());
    let mut grid = DMatrix::zeros(ni, nj);
    for (i, c) in criteria.iter().enumerate() {
        for (j, nu) in nus.iter().enumerate() {
            let mean = good_reps
                .iter()
                .map(|&rep| lookup(c, nu, rep).unwrap())
                .sum::<f64>()
                / good_reps.len() as f64;
            if !(mean > 0.0) {
                return Err(GpError::Degenerate(format!(
                    "non-positive mean R for ({c}, {nu}); log10 undefined"
                )));
            }
            grid[(i, j)] = mean.log10();
        }
    }
    let grand = grid.sum() / (ni * nj) as f64;
    let row_means: Vec<f64> = (0..ni).map(|i| grid.row(i).sum() / nj as f64).collect();
    let col_means: Vec<f64> = (0..nj).map(|j| grid.column(j).sum() / ni as f64).collect();
    let v = grid.iter().map(|a| (a - grand).powi(2)).sum::<f64>() / (ni * nj) as f64;
    if v == 0.0 {
        return Ok(AnovaSummary {
            s_criterion: f64::NAN,
            s_nu: f64::NAN,
            s_int: f64::NAN,
            total_variance: 0.0,
            excluded_replicates: excluded,
        });
    }
    let s_c = row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / ni as f64 / v;
    let s_n = col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / nj as f64 / v;
    let mut s_i = 0.0;
    for i in 0..ni {
        for j in 0..nj {
            s_i += (grid[(i, j)] - row_means[i] - col_means[j] + grand).powi(2);
        }
    }
    let s_i = s_i / (ni * nj) as f64 / v;
    Ok(AnovaSummary {
        s_criterion: s_c,
        s_nu: s_n,
        s_int: s_i,
        total_variance: v,
        excluded_replicates: excluded,
    })
}

/// Replicate-averaged R for one (problem, criterion, ν, rule), skipping
/// failed cells.
pub fn mean_r(records: &[BenchmarkRecord], criterion: &str, nu: &str, rule: &str) -> Option<f64> {
    let vals: Vec<f64> = records
        .iter()
        .filter(|r| r.criterion == criterion && r.nu == nu && r.rule == rule && r.r.is_finite())
        .map(|r| r.r)
        .collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}
