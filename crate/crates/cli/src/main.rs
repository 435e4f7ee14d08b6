//! `gpsel` command line: reproducible criterion fits (`fit`) and benchmark
//! campaigns with variance decomposition (`bench`).
//!
//! Exit codes: 0 success, 1 configuration error, 2 total run failure.

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use gpsel::campaign::{self, CampaignConfig};
use gpsel::criteria::{self, CriterionSpec};
use gpsel::design;
use gpsel::selection::{self, FitConfig};
use gpsel::testfns::{self, Problem};
use gpsel::{Dataset, Regularity, ScoringRule};
use nalgebra::{DMatrix, DVector};

#[derive(Parser)]
#[command(name = "gpsel", about = "Gaussian-process interpolation with selectable fitting criteria")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit one model on a builtin problem or a tabulated dataset.
    Fit(FitArgs),
    /// Run a benchmark campaign and its analyses.
    Bench(BenchArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Builtin problem name (e.g. goldstein-price-1d, rosenbrock-2).
    #[arg(long)]
    problem: Option<String>,
    /// Tabulated dataset: header line, d input columns + 1 output column,
    /// comma/whitespace delimited.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Training design size for builtin problems.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Test-set size used to normalize builtin problems.
    #[arg(long = "n-test", default_value_t = 2000)]
    n_test: usize,
    /// Fitting criterion (nll, pl, loo-spe, loo-nlpd, loo-crps, gcv, ka,
    /// nll-spe, hl:p:q).
    #[arg(long, default_value = "nll")]
    criterion: String,
    /// Regularity: "1/2", "3/2", ..., "inf", or "auto".
    #[arg(long, default_value = "auto")]
    nu: String,
    #[arg(long, default_value_t = 1e11)]
    kappa: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional output directory for the fitted-parameter file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Campaign configuration file (TOML); flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Vec<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "m-replicates")]
    m_replicates: Option<usize>,
    #[arg(long = "n-test")]
    n_test: Option<usize>,
    /// Comma-separated criteria list.
    #[arg(long)]
    criteria: Option<String>,
    /// Comma-separated ν list; include "auto" for criterion-selected ν.
    #[arg(long)]
    nu: Option<String>,
    /// Comma-separated scoring rules.
    #[arg(long)]
    rules: Option<String>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all available cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Also compute directly minimized reference scores per (ν, rule).
    #[arg(long = "r-star")]
    r_star: bool,
    /// Output directory (required).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Serializable campaign configuration; persisted next to the outputs so a
/// run can be reproduced exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    problems: Vec<String>,
    #[serde(default = "d_n")]
    n: usize,
    #[serde(default = "d_n_test")]
    n_test: usize,
    #[serde(default = "d_m")]
    m_replicates: usize,
    #[serde(default = "d_criteria")]
    criteria: Vec<String>,
    #[serde(default = "d_nu")]
    nu: Vec<String>,
    #[serde(default = "d_rules")]
    rules: Vec<String>,
    #[serde(default = "d_kappa")]
    kappa: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    workers: usize,
    #[serde(default)]
    r_star: bool,
    #[serde(default = "d_restarts")]
    restarts: usize,
}

fn d_n() -> usize {
    10
}
fn d_n_test() -> usize {
    2000
}
fn d_m() -> usize {
    20
}
fn d_criteria() -> Vec<String> {
    ["nll", "loo-spe", "loo-nlpd", "loo-crps", "gcv", "ka"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}
fn d_nu() -> Vec<String> {
    vec!["default".into(), "auto".into()]
}
fn d_rules() -> Vec<String> {
    vec!["spe".into(), "nlpd".into(), "crps".into()]
}
fn d_kappa() -> f64 {
    1e11
}
fn d_restarts() -> usize {
    5
}

fn config_error(msg: &str) -> ExitCode {
    eprintln!("configuration error: {msg}");
    ExitCode::from(1)
}

fn run_error(msg: &str) -> ExitCode {
    eprintln!("run failed: {msg}");
    ExitCode::from(2)
}

fn resolve_problem(name: &str) -> gpsel::Result<Problem> {
    // rotated-rosenbrock-<d>-<k>: instance k of the seeded rotated family
    if let Some(rest) = name.strip_prefix("rotated-rosenbrock-") {
        let parts: Vec<&str> = rest.split('-').collect();
        if parts.len() == 2 {
            if let (Ok(d), Ok(k)) = (parts[0].parse::<usize>(), parts[1].parse::<usize>()) {
                let fam = testfns::rotated_rosenbrock_family(d, k + 1, 0xB0B)?;
                return Ok(fam.into_iter().nth(k).unwrap());
            }
        }
    }
    Problem::builtin(name)
}

/// Load a tabulated dataset: inputs rescaled per column to the unit
/// hypercube, outputs centered and scaled to unit sample variance.
fn load_dataset(path: &Path) -> Result<Dataset, String> {
    let text =
        std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue; // header
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .collect();
        let vals: Vec<f64> = fields
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        if vals.len() < 2 {
            return Err(format!("line {}: need at least 2 columns", lineno + 1));
        }
        if *width.get_or_insert(vals.len()) != vals.len() {
            return Err(format!("line {}: inconsistent column count", lineno + 1));
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err("no data rows".into());
    }
    let d = rows[0].len() - 1;
    let n = rows.len();
    let mut x = DMatrix::zeros(n, d);
    let mut z = DVector::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        for j in 0..d {
            x[(i, j)] = row[j];
        }
        z[i] = row[d];
    }
    // unit-hypercube rescaling per input column
    for j in 0..d {
        let (lo, hi) = (x.column(j).min(), x.column(j).max());
        let span = if hi > lo { hi - lo } else { 1.0 };
        for i in 0..n {
            x[(i, j)] = (x[(i, j)] - lo) / span;
        }
    }
    let mean = z.sum() / n as f64;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return Err("constant outputs".into());
    }
    let s = var.sqrt();
    let z = z.map(|v| (v - mean) / s);
    Dataset::new(x, z).map_err(|e| e.to_string())
}

fn parse_nu_list(tokens: &[String], d: usize) -> Result<(Vec<Regularity>, bool), String> {
    let mut grid = Vec::new();
    let mut auto = false;
    for t in tokens {
        match t.as_str() {
            "auto" => auto = true,
            "default" => grid.extend(selection::default_nu_grid(d)),
            other => grid.push(Regularity::parse(other).map_err(|e| e.to_string())?),
        }
    }
    grid.dedup();
    Ok((grid, auto))
}

fn cmd_fit(args: &FitArgs) -> ExitCode {
    let spec = match CriterionSpec::parse(&args.criterion) {
        Ok(s) => s,
        Err(e) => return config_error(&e.to_string()),
    };
    let (data, label) = match (&args.problem, &args.data) {
        (Some(_), Some(_)) => return config_error("give either --problem or --data, not both"),
        (None, None) => return config_error("one of --problem or --data is required"),
        (Some(name), None) => {
            let p = match resolve_problem(name) {
                Ok(p) => p,
                Err(e) => return config_error(&e.to_string()),
            };
            match design::make_designs(&p, args.n, args.n_test, 1, args.seed) {
                Ok(mut b) => (b.remove(0).train, name.clone()),
                Err(e) => return config_error(&e.to_string()),
            }
        }
        (None, Some(path)) => match load_dataset(path) {
            Ok(d) => (d, path.display().to_string()),
            Err(e) => return config_error(&e),
        },
    };

    let config = FitConfig { kappa: args.kappa, seed: args.seed, ..Default::default() };
    let result = if args.nu == "auto" {
        let grid = selection::default_nu_grid(data.dim());
        selection::select_model(&spec, &data, &grid, &config)
    } else {
        match Regularity::parse(&args.nu) {
            Ok(nu) => selection::select_model(&spec, &data, &[nu], &config),
            Err(e) => return config_error(&e.to_string()),
        }
    };
    let sel = match result {
        Ok(s) => s,
        Err(e) => return run_error(&e.to_string()),
    };

    let mut report = String::new();
    let _ = writeln!(report, "source      : {label}");
    let _ = writeln!(report, "n, d        : {}, {}", data.len(), data.dim());
    let _ = writeln!(report, "criterion   : {spec}");
    let _ = writeln!(report, "nu          : {}", sel.nu);
    let _ = writeln!(report, "value       : {:.12e}", sel.fit.criterion_value);
    let _ = writeln!(report, "sigma2      : {:.12e}", sel.fit.theta.sigma2);
    for (j, r) in sel.fit.theta.rho.iter().enumerate() {
        let _ = writeln!(report, "rho_{:<8}: {r:.12e}", j + 1);
    }
    let _ = writeln!(report, "converged   : {}", sel.fit.converged);
    let _ = writeln!(report, "at_bound    : {}", sel.fit.at_bound);
    // LOO diagnostics at the fitted parameters
    let theta = &sel.fit.theta;
    if let (Ok(spe), Ok(nlpd)) = (
        criteria::loo_criterion(ScoringRule::Spe, theta, &data),
        criteria::loo_criterion(ScoringRule::Nlpd, theta, &data),
    ) {
        let _ = writeln!(report, "loo-spe     : {spe:.12e}");
        let _ = writeln!(report, "loo-nlpd    : {nlpd:.12e}");
    }
    if let Ok(preds) = gpsel::gp::loo_predictives(theta, &data) {
        let cressie = preds
            .iter()
            .zip(data.z().iter())
            .map(|(p, &z)| (z - p.mu).powi(2) / p.sigma2)
            .sum::<f64>()
            / data.len() as f64;
        let _ = writeln!(report, "cressie-stat: {cressie:.12e}");
    }
    print!("{report}");

    if let Some(dir) = &args.out {
        if let Err(e) = std::fs::create_dir_all(dir) {
            return run_error(&format!("cannot create {}: {e}", dir.display()));
        }
        let mut theta_file = String::new();
        let _ = writeln!(theta_file, "nu = \"{}\"", sel.nu);
        let _ = writeln!(theta_file, "sigma2 = {:e}", theta.sigma2);
        let rho_list =
            theta.rho.iter().map(|r| format!("{r:e}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(theta_file, "rho = [{rho_list}]");
        if let Err(e) = std::fs::write(dir.join("theta.toml"), theta_file) {
            return run_error(&format!("cannot write theta file: {e}"));
        }
    }
    ExitCode::SUCCESS
}

fn resolve_bench_config(args: &BenchArgs) -> Result<RunConfig, String> {
    let mut cfg: RunConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            toml::from_str(&text).map_err(|e| e.to_string())?
        }
        None => RunConfig {
            problems: Vec::new(),
            n: d_n(),
            n_test: d_n_test(),
            m_replicates: d_m(),
            criteria: d_criteria(),
            nu: d_nu(),
            rules: d_rules(),
            kappa: d_kappa(),
            seed: 0,
            workers: 0,
            r_star: false,
            restarts: d_restarts(),
        },
    };
    if !args.problem.is_empty() {
        cfg.problems = args.problem.clone();
    }
    let split = |s: &String| -> Vec<String> {
        s.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect()
    };
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.m_replicates {
        cfg.m_replicates = v;
    }
    if let Some(v) = args.n_test {
        cfg.n_test = v;
    }
    if let Some(v) = &args.criteria {
        cfg.criteria = split(v);
    }
    if let Some(v) = &args.nu {
        cfg.nu = split(v);
    }
    if let Some(v) = &args.rules {
        cfg.rules = split(v);
    }
    if let Some(v) = args.kappa {
        cfg.kappa = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.workers {
        cfg.workers = v;
    }
    if args.r_star {
        cfg.r_star = true;
    }
    if cfg.problems.is_empty() {
        return Err("no problems configured (use --problem or a config file)".into());
    }
    Ok(cfg)
}

fn float_field(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        "NaN".into()
    }
}

fn write_records_csv(path: &Path, d: usize, records: &[campaign::BenchmarkRecord]) -> std::io::Result<()> {
    let mut out = String::new();
    let rho_cols: Vec<String> = (1..=d).map(|j| format!("rho_{j}")).collect();
    let _ = writeln!(out, "problem,d,n,replicate,criterion,nu,rule,R,converged,sigma2,{}", rho_cols.join(","));
    for r in records {
        let rho = r.rho.iter().map(|v| float_field(*v)).collect::<Vec<_>>().join(",");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{rho}",
            r.problem,
            r.d,
            r.n,
            r.replicate,
            r.criterion,
            r.nu,
            r.rule,
            float_field(r.r),
            r.converged,
            float_field(r.sigma2)
        );
    }
    std::fs::write(path, out)
}

fn mean_r_table(
    records: &[campaign::BenchmarkRecord],
    criteria: &[String],
    nus: &[String],
    rule: &str,
) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<12}", "criterion");
    for nu in nus {
        let _ = write!(out, " {nu:>12}");
    }
    let _ = writeln!(out);
    for c in criteria {
        let _ = write!(out, "{c:<12}");
        for nu in nus {
            match campaign::mean_r(records, c, nu, rule) {
                Some(v) => {
                    let _ = write!(out, " {v:>12.4e}");
                }
                None => {
                    let _ = write!(out, " {:>12}", "-");
                }
            }
        }
        let _ = writeln!(out);
    }
    out
}

fn cmd_bench(args: &BenchArgs) -> ExitCode {
    let Some(out_dir) = &args.out else {
        return config_error("--out is required");
    };
    let cfg = match resolve_bench_config(args) {
        Ok(c) => c,
        Err(e) => return config_error(&e),
    };

    // resolve problems and typed lists up front
    let mut problems = Vec::new();
    for name in &cfg.problems {
        match resolve_problem(name) {
            Ok(p) => problems.push(p),
            Err(e) => return config_error(&e.to_string()),
        }
    }
    let mut criteria_specs = Vec::new();
    for c in &cfg.criteria {
        match CriterionSpec::parse(c) {
            Ok(s) => criteria_specs.push(s),
            Err(e) => return config_error(&e.to_string()),
        }
    }
    let mut rules = Vec::new();
    for r in &cfg.rules {
        match ScoringRule::parse(r) {
            Ok(s) => rules.push(s),
            Err(e) => return config_error(&e.to_string()),
        }
    }

    if cfg.workers > 0 {
        if rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global().is_err() {
            eprintln!("note: worker pool already initialized; using existing pool");
        }
    }
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        return run_error(&format!("cannot create {}: {e}", out_dir.display()));
    }
    // persist the exact resolved configuration
    match toml::to_string_pretty(&cfg) {
        Ok(text) => {
            if let Err(e) = std::fs::write(out_dir.join("config.toml"), text) {
                return run_error(&format!("cannot write config: {e}"));
            }
        }
        Err(e) => return run_error(&e.to_string()),
    }

    let mut any_success = false;
    let mut failures = Vec::new();
    for p in &problems {
        let (nu_grid, include_auto) = match parse_nu_list(&cfg.nu, p.dim) {
            Ok(v) => v,
            Err(e) => return config_error(&e),
        };
        let camp = CampaignConfig {
            n: cfg.n,
            n_test: cfg.n_test,
            m_replicates: cfg.m_replicates,
            criteria: criteria_specs.clone(),
            nu_grid,
            include_auto,
            rules: rules.clone(),
            compute_r_star: cfg.r_star,
            fit: FitConfig {
                restarts: cfg.restarts,
                kappa: cfg.kappa,
                ..Default::default()
            },
            seed: cfg.seed,
        };
        let records = match campaign::run_problem(p, &camp) {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("{}: {e}", p.name));
                continue;
            }
        };
        any_success = true;
        let rec_path = out_dir.join(format!("records_{}.csv", p.name));
        if let Err(e) = write_records_csv(&rec_path, p.dim, &records) {
            return run_error(&format!("cannot write {}: {e}", rec_path.display()));
        }

        // baselines on each replicate
        let mut baseline_text = String::from("replicate,linear,nn1,nn2\n");
        if let Ok(bundles) = design::make_designs(
            p,
            cfg.n,
            cfg.n_test,
            cfg.m_replicates,
            campaign_seed(cfg.seed, &p.name),
        ) {
            for (i, b) in bundles.iter().enumerate() {
                if let Ok(base) = campaign::baselines(b) {
                    let lin = base.linear.map(float_field).unwrap_or_else(|| "NaN".into());
                    let _ = writeln!(
                        baseline_text,
                        "{i},{lin},{},{}",
                        float_field(base.nn1),
                        float_field(base.nn2)
                    );
                }
            }
        }
        let _ = std::fs::write(out_dir.join(format!("baselines_{}.csv", p.name)), baseline_text);

        // per-rule summary: mean-R table + ANOVA (all criteria, and the
        // KA/GCV-exclusion preset)
        let nus_present: Vec<String> = {
            let mut v: Vec<String> = Vec::new();
            for r in &records {
                if r.criterion != "r-star" && !v.contains(&r.nu) {
                    v.push(r.nu.clone());
                }
            }
            v
        };
        for rule in &cfg.rules {
            let mut summary = String::new();
            let table = mean_r_table(&records, &cfg.criteria, &nus_present, rule);
            let _ = writeln!(summary, "problem: {}  rule: {rule}\n\n{table}", p.name);
            println!("problem: {}  rule: {rule}\n{table}", p.name);
            for (label, subset) in [
                ("all-criteria", cfg.criteria.clone()),
                (
                    "excluding-ka-gcv",
                    cfg.criteria
                        .iter()
                        .filter(|c| c.as_str() != "ka" && c.as_str() != "gcv")
                        .cloned()
                        .collect(),
                ),
            ] {
                if subset.is_empty() {
                    continue;
                }
                match campaign::anova_decompose(&records, &subset, rule) {
                    Ok(a) => {
                        let _ = writeln!(
                            summary,
                            "anova[{label}]: S_criterion={:.6} S_nu={:.6} S_int={:.6} V={:.6} excluded={}",
                            a.s_criterion, a.s_nu, a.s_int, a.total_variance, a.excluded_replicates
                        );
                    }
                    Err(e) => {
                        let _ = writeln!(summary, "anova[{label}]: unavailable ({e})");
                    }
                }
            }
            let _ = std::fs::write(
                out_dir.join(format!("summary_{}_{rule}.txt", p.name)),
                summary,
            );
        }
    }

    for f in &failures {
        eprintln!("problem failed: {f}");
    }
    if !any_success {
        return run_error("every problem failed");
    }
    ExitCode::SUCCESS
}

// mirror of the internal per-problem design seeding used by the campaign
fn campaign_seed(master: u64, name: &str) -> u64 {
    campaign::problem_design_seed(master, name)
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Fit(args) => cmd_fit(&args),
        Cmd::Bench(args) => cmd_bench(&args),
    }
}
