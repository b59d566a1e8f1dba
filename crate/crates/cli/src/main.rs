//! Command-line front end: closed-form optimal policies, the
//! finite-difference solver, Monte Carlo estimates, common-scenario
//! strategy comparisons, parameter sweeps and the certificate suite.
//!
//! Exit codes: 0 ok, 2 configuration/usage error, 3 solver
//! non-convergence, 4 validation failure. Worker threads for the Monte
//! Carlo engine follow `RAYON_NUM_THREADS`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use surplus_core::closedform::{optimize_policy, ClosedFormError, ExpModel};
use surplus_core::config::{parse_str, ConfigError};
use surplus_core::hjb::{
    default_epsilon, howard_solve, validate_solution, Grid, HjbError, HjbSolution, Region,
};
use surplus_core::model::{ClaimLaw, ModelParams};
use surplus_core::sim::{
    compare_paths, estimate_value, simulate_path, EventKind, SimError, Strategy,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "surplus",
    about = "Dividend / reinsurance / capital-injection control on the Cramér-Lundberg surplus",
    after_help = "Thread count for parallel sections follows RAYON_NUM_THREADS.\n\
                  Without --config, a built-in baseline model is used\n\
                  (lambda=4, eta1=0.1, eta2=0.11, q=0.15, k=1.14, a=0.85, uniform claims on [0,2])."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Model configuration file (`name = value` lines)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Prefix for the output files
    #[arg(long, default_value = "surplus_out")]
    out: String,
}

#[derive(Args)]
struct GridArgs {
    /// Number of grid nodes
    #[arg(long, default_value_t = 300)]
    n: usize,
    /// Grid spacing
    #[arg(long, default_value_t = 0.009)]
    delta: f64,
    /// Retention grid resolution of the policy-improvement step
    #[arg(long = "alpha-grid", default_value_t = 101)]
    alpha_grid: usize,
    /// Stopping tolerance (default: 1e-9 * c/q)
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct SimArgs {
    /// Initial surplus
    #[arg(long, default_value_t = 0.0)]
    x0: f64,
    /// Number of Monte Carlo replications
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    /// Initial horizon (auto-extended until the truncation bound certifies)
    #[arg(long, default_value_t = 64.0)]
    horizon: f64,
    /// Seed of the counter-based path streams
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the revision period from the configuration
    #[arg(long)]
    period: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicySource {
    /// Closed form for exponential claims, solver feedback otherwise
    Auto,
    ClosedForm,
    Hjb,
    Fixed,
}

#[derive(Args)]
struct PolicyArgs {
    /// Where the simulated band policy comes from
    #[arg(long, value_enum, default_value_t = PolicySource::Auto)]
    policy: PolicySource,
    /// Fixed retention (with --policy fixed)
    #[arg(long)]
    alpha: Option<f64>,
    /// Dividend barrier (with --policy fixed)
    #[arg(long)]
    barrier: Option<f64>,
    /// Injection band depth (with --policy fixed; default: model `a`)
    #[arg(long)]
    buffer: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepParameter {
    K,
    A,
    Q,
    Eta2,
    Period,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal (alpha, a, b) triple in closed form (exponential claims)
    ClosedForm {
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference solve of the control problem by policy iteration
    Solve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Monte Carlo estimate of a band policy's value
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Replay strategies against one common claim scenario
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        /// Initial surplus
        #[arg(long, default_value_t = 0.5)]
        x0: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100.0)]
        horizon: f64,
        /// Revision periods to compare, comma separated
        #[arg(long, default_value = "1,12", value_delimiter = ',')]
        periods: Vec<f64>,
    },
    /// Re-solve the control problem while sweeping one parameter
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        /// Which parameter to sweep
        #[arg(long, value_enum)]
        parameter: SweepParameter,
        /// Values to sweep over, comma separated (at least 2)
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Run the certificate suite; nonzero exit on any failure
    Validate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(EXIT_CONFIG, format!("configuration error: {e}"))
    }
}

impl From<ClosedFormError> for Failure {
    fn from(e: ClosedFormError) -> Self {
        let code = match e {
            ClosedFormError::NonConvergence(_) | ClosedFormError::Verification(_) => {
                EXIT_NONCONVERGENCE
            }
            _ => EXIT_CONFIG,
        };
        Failure::new(code, format!("closed-form engine: {e}"))
    }
}

impl From<HjbError> for Failure {
    fn from(e: HjbError) -> Self {
        let code = match e {
            HjbError::NonConvergence { .. }
            | HjbError::Singular
            | HjbError::DominanceLost { .. } => EXIT_NONCONVERGENCE,
            _ => EXIT_CONFIG,
        };
        Failure::new(code, format!("solver: {e}"))
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::new(EXIT_CONFIG, format!("simulator: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Print a summary to stdout, tolerating a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::ClosedForm { common } => run_closed_form(&common),
        Command::Solve { common, grid } => run_solve(&common, &grid),
        Command::Simulate {
            common,
            grid,
            sim,
            policy,
        } => run_simulate(&common, &grid, &sim, &policy),
        Command::Compare {
            common,
            grid,
            x0,
            seed,
            horizon,
            periods,
        } => run_compare(&common, &grid, x0, seed, horizon, &periods),
        Command::Sweep {
            common,
            grid,
            parameter,
            values,
        } => run_sweep(&common, &grid, parameter, &values),
        Command::Validate { common, grid } => run_validate(&common, &grid),
    }
}

fn load_params(common: &Common) -> Result<ModelParams<f64>, Failure> {
    match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Failure::new(EXIT_CONFIG, format!("cannot read {}: {e}", path.display()))
            })?;
            Ok(parse_str(&text)?)
        }
        None => Ok(ModelParams::baseline_uniform()),
    }
}

fn atomic_write(path: &Path, contents: &str) -> Result<(), Failure> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)
        .and_then(|()| std::fs::rename(&tmp, path))
        .map_err(|e| Failure::new(EXIT_CONFIG, format!("cannot write {}: {e}", path.display())))
}

fn out_path(common: &Common, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}_{suffix}", common.out))
}

fn build_grid(grid: &GridArgs) -> Result<Grid<f64>, Failure> {
    Ok(Grid::new(grid.n, grid.delta)?)
}

fn epsilon_for(params: &ModelParams<f64>, grid: &GridArgs) -> f64 {
    grid.epsilon.unwrap_or_else(|| default_epsilon(params))
}

fn region_name(r: Region) -> &'static str {
    match r {
        Region::Continuation => "continuation",
        Region::Dividend => "dividend",
    }
}

fn run_closed_form(common: &Common) -> Result<(), Failure> {
    let params = load_params(common)?;
    if !matches!(params.claim_law, ClaimLaw::Exponential { .. }) {
        return Err(Failure::new(
            EXIT_CONFIG,
            "closed-form engine requires `claim = exponential mu=...`; \
             use `surplus solve` for other claim laws",
        ));
    }
    let policy = optimize_policy(&params)?;
    let summary = json!({
        "alpha_star": policy.alpha_star,
        "a_star": policy.a_star,
        "b_star": policy.b_star,
        "j0": policy.j0,
        "boundary_case": policy.boundary_case.to_string(),
        "residuals": {
            "da0": policy.residuals.da0,
            "bopt": policy.residuals.bopt,
            "aopt": policy.residuals.aopt,
        },
    });
    let rendered = serde_json::to_string_pretty(&summary).expect("serializable summary");
    atomic_write(&out_path(common, "policy.json"), &rendered)?;

    let mut csv = String::from("x,cost\n");
    let (lo, hi) = (-policy.a_star, policy.b_star);
    for i in 0..1000 {
        let x = lo + (hi - lo) * i as f64 / 999.0;
        let cost = policy.cost_at(x.min(hi))?;
        writeln!(csv, "{x},{cost}").expect("string write");
    }
    atomic_write(&out_path(common, "cost.csv"), &csv)?;
    emit(&rendered);
    Ok(())
}

fn run_solve(common: &Common, grid_args: &GridArgs) -> Result<(), Failure> {
    let params = load_params(common)?;
    let grid = build_grid(grid_args)?;
    let eps = epsilon_for(&params, grid_args);
    let sol = howard_solve(&params, &grid, grid_args.alpha_grid, eps, 200)?;
    write_solution_csv(&out_path(common, "solution.csv"), &sol)?;
    let report = validate_solution(&params, &sol)?;
    for check in report.checks.iter().filter(|c| !c.pass) {
        eprintln!(
            "warning: certificate `{}` failed at worst value {:e}",
            check.name, check.worst_value
        );
    }
    let summary = json!({
        "b_star": finite_or_null(sol.b_star),
        "iterations": sol.iterations,
        "residual": sol.residual,
        "epsilon": sol.epsilon,
        "certificates_pass": report.all_pass(),
    });
    let rendered = serde_json::to_string_pretty(&summary).expect("serializable summary");
    atomic_write(&out_path(common, "summary.json"), &rendered)?;
    emit(&rendered);
    Ok(())
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}

fn write_solution_csv(path: &Path, sol: &HjbSolution<f64>) -> Result<(), Failure> {
    let mut csv = String::from("x,v,alpha,region\n");
    for i in 0..sol.grid.n {
        writeln!(
            csv,
            "{},{},{},{}",
            sol.grid.x(i),
            sol.v[i],
            sol.alpha_field[i],
            region_name(sol.regions[i])
        )
        .expect("string write");
    }
    atomic_write(path, &csv)
}

/// Build the simulated strategy and a JSON description of its origin.
fn build_strategy(
    params: &ModelParams<f64>,
    grid_args: &GridArgs,
    policy_args: &PolicyArgs,
    period: f64,
) -> Result<(Strategy<f64>, serde_json::Value), Failure> {
    let source = match policy_args.policy {
        PolicySource::Auto => {
            if matches!(params.claim_law, ClaimLaw::Exponential { .. }) {
                PolicySource::ClosedForm
            } else {
                PolicySource::Hjb
            }
        }
        other => other,
    };
    match source {
        PolicySource::ClosedForm => {
            let policy = optimize_policy(params)?;
            let strategy = Strategy::from_policy(&policy, period)?;
            let desc = json!({
                "source": "closed-form",
                "alpha": policy.alpha_star,
                "a": policy.a_star,
                "b": policy.b_star,
            });
            Ok((strategy, desc))
        }
        PolicySource::Hjb => {
            let grid = build_grid(grid_args)?;
            let eps = epsilon_for(params, grid_args);
            let sol = howard_solve(params, &grid, grid_args.alpha_grid, eps, 200)?;
            let strategy = Strategy::from_hjb(&sol, params.a, period)?;
            let desc = json!({
                "source": "hjb-feedback",
                "a": params.a,
                "b": finite_or_null(sol.b_star),
            });
            Ok((strategy, desc))
        }
        PolicySource::Fixed => {
            let alpha = policy_args.alpha.ok_or_else(|| {
                Failure::new(EXIT_CONFIG, "--policy fixed requires --alpha")
            })?;
            let barrier = policy_args.barrier.ok_or_else(|| {
                Failure::new(EXIT_CONFIG, "--policy fixed requires --barrier")
            })?;
            let buffer = policy_args.buffer.unwrap_or(params.a);
            let strategy = Strategy::fixed(alpha, buffer, barrier, period)?;
            let desc = json!({
                "source": "fixed",
                "alpha": alpha,
                "a": buffer,
                "b": barrier,
            });
            Ok((strategy, desc))
        }
        PolicySource::Auto => unreachable!("auto resolved above"),
    }
}

fn run_simulate(
    common: &Common,
    grid_args: &GridArgs,
    sim: &SimArgs,
    policy_args: &PolicyArgs,
) -> Result<(), Failure> {
    let params = load_params(common)?;
    let period = sim.period.unwrap_or(params.period);
    let (strategy, desc) = build_strategy(&params, grid_args, policy_args, period)?;

    // one logged sample path for the event CSV, then the estimator
    let sample = simulate_path(&params, &strategy, sim.x0, sim.horizon, sim.seed)?;
    let mut csv = String::from("t,kind,amount,surplus_after,alpha\n");
    let mut alpha = f64::NAN;
    for event in &sample.events {
        let (kind, amount) = match event.kind {
            EventKind::Claim { retained, .. } => ("claim", retained),
            EventKind::Dividend { amount, .. } => ("dividend", amount),
            EventKind::Injection { amount } => ("injection", amount),
            EventKind::Revision { alpha: new_alpha } => {
                alpha = new_alpha;
                ("revision", 0.0)
            }
            EventKind::Ruin => ("ruin", 0.0),
        };
        writeln!(
            csv,
            "{},{},{},{},{}",
            event.t, kind, amount, event.surplus_after, alpha
        )
        .expect("string write");
    }
    atomic_write(&out_path(common, "events.csv"), &csv)?;

    let est = estimate_value(&params, &strategy, sim.x0, sim.horizon, sim.paths, sim.seed)?;
    let summary = json!({
        "mean": est.mean,
        "se": est.std_error,
        "n_paths": est.n_paths,
        "horizon": est.horizon,
        "truncation_bound": est.truncation_bound,
        "policy": desc,
    });
    let rendered = serde_json::to_string_pretty(&summary).expect("serializable summary");
    atomic_write(&out_path(common, "estimate.json"), &rendered)?;
    emit(&rendered);
    Ok(())
}

fn run_compare(
    common: &Common,
    grid_args: &GridArgs,
    x0: f64,
    seed: u64,
    horizon: f64,
    periods: &[f64],
) -> Result<(), Failure> {
    if periods.is_empty() {
        return Err(Failure::new(EXIT_CONFIG, "--periods needs at least one value"));
    }
    let params = load_params(common)?;
    let auto = PolicyArgs {
        policy: PolicySource::Auto,
        alpha: None,
        barrier: None,
        buffer: None,
    };
    let mut strategies = Vec::new();
    for &period in periods {
        let (strategy, _) = build_strategy(&params, grid_args, &auto, period)?;
        strategies.push((format!("policy_dt{period}"), strategy));
    }
    // the no-reinsurance benchmark keeps the same band as the first policy
    let base = &strategies[0].1;
    let full = Strategy::fixed(1.0, base.a, base.b, periods[0])?;
    strategies.push((format!("full_retention_dt{}", periods[0]), full));

    let runs = compare_paths(&params, x0, seed, horizon, &strategies)?;
    let mut paths_csv = String::from("strategy,t,surplus\n");
    let mut alpha_csv = String::from("strategy,t,alpha\n");
    let mut summary = Vec::new();
    for run in &runs {
        for (t, x) in &run.surplus_trace {
            writeln!(paths_csv, "{},{t},{x}", run.label).expect("string write");
        }
        for (t, a) in &run.alpha_trace {
            writeln!(alpha_csv, "{},{t},{a}", run.label).expect("string write");
        }
        summary.push(json!({
            "strategy": run.label,
            "objective": run.outcome.objective(),
            "discounted_dividends": run.outcome.discounted_dividends,
            "discounted_injection_cost": run.outcome.discounted_injection_cost,
            "ruin_time": run.outcome.ruin_time,
        }));
    }
    atomic_write(&out_path(common, "paths.csv"), &paths_csv)?;
    atomic_write(&out_path(common, "alpha.csv"), &alpha_csv)?;
    let rendered =
        serde_json::to_string_pretty(&json!({ "runs": summary })).expect("serializable summary");
    atomic_write(&out_path(common, "compare.json"), &rendered)?;
    emit(&rendered);
    Ok(())
}

fn sweep_apply(
    params: &ModelParams<f64>,
    parameter: SweepParameter,
    value: f64,
) -> Result<ModelParams<f64>, String> {
    let (lambda, mut eta2, mut q, mut k, mut a, mut period) = (
        params.lambda,
        params.eta2,
        params.q,
        params.k,
        params.a,
        params.period,
    );
    match parameter {
        SweepParameter::K => k = value,
        SweepParameter::A => a = value,
        SweepParameter::Q => q = value,
        SweepParameter::Eta2 => eta2 = value,
        SweepParameter::Period => period = value,
    }
    ModelParams::new(
        lambda,
        params.claim_law,
        params.eta1,
        eta2,
        q,
        k,
        a,
        period,
    )
    .map_err(|e| e.to_string())
}

fn run_sweep(
    common: &Common,
    grid_args: &GridArgs,
    parameter: SweepParameter,
    values: &[f64],
) -> Result<(), Failure> {
    if values.len() < 2 {
        return Err(Failure::new(EXIT_CONFIG, "--values needs at least 2 entries"));
    }
    let params = load_params(common)?;
    let grid = build_grid(grid_args)?;
    let mut csv = String::from("param_value,x,v,alpha\n");
    let mut results = Vec::new();
    let mut any_failed = false;
    for &value in values {
        let outcome = sweep_apply(&params, parameter, value)
            .map_err(|e| e.to_string())
            .and_then(|p| {
                let eps = epsilon_for(&p, grid_args);
                howard_solve(&p, &grid, grid_args.alpha_grid, eps, 200).map_err(|e| e.to_string())
            });
        match outcome {
            Ok(sol) => {
                for i in 0..grid.n {
                    writeln!(
                        csv,
                        "{value},{},{},{}",
                        grid.x(i),
                        sol.v[i],
                        sol.alpha_field[i]
                    )
                    .expect("string write");
                }
                results.push(json!({
                    "value": value,
                    "ok": true,
                    "b_star": finite_or_null(sol.b_star),
                    "iterations": sol.iterations,
                    "residual": sol.residual,
                }));
            }
            Err(message) => {
                any_failed = true;
                eprintln!("sweep value {value}: {message}");
                results.push(json!({
                    "value": value,
                    "ok": false,
                    "error": message,
                }));
            }
        }
    }
    atomic_write(&out_path(common, "sweep.csv"), &csv)?;
    let parameter_name = match parameter {
        SweepParameter::K => "k",
        SweepParameter::A => "a",
        SweepParameter::Q => "q",
        SweepParameter::Eta2 => "eta2",
        SweepParameter::Period => "period",
    };
    let rendered = serde_json::to_string_pretty(&json!({
        "parameter": parameter_name,
        "results": results,
    }))
    .expect("serializable summary");
    atomic_write(&out_path(common, "sweep_summary.json"), &rendered)?;
    emit(&rendered);
    if any_failed {
        Err(Failure::new(
            EXIT_NONCONVERGENCE,
            "one or more sweep values failed; remaining values were still emitted",
        ))
    } else {
        Ok(())
    }
}

fn run_validate(common: &Common, grid_args: &GridArgs) -> Result<(), Failure> {
    let params = load_params(common)?;
    let mut all_pass = true;
    let mut verdict = |name: &str, pass: bool, detail: String| {
        println!("{name}: {} ({detail})", if pass { "pass" } else { "FAIL" });
        all_pass &= pass;
    };

    if matches!(params.claim_law, ClaimLaw::Exponential { .. }) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let low = params.lowest_retention();
        let mut worst_root = 0.0f64;
        let mut worst_form = 0.0f64;
        let mut worst_jofa = 0.0f64;
        for _ in 0..100 {
            let alpha = rng.random_range((low + 0.01)..1.0);
            let m = ExpModel::new(&params, alpha)?;
            let roots = m.solve_roots()?;
            let rel = |lhs: f64, rhs: f64| (lhs - rhs).abs() / rhs.abs().max(1.0);
            worst_root = worst_root
                .max(rel(m.laplace_exponent(roots.phi_q)?, params.q))
                .max(rel(m.laplace_exponent(roots.rho_minus)?, params.q))
                .max(rel(
                    roots.phi_q * roots.rho_minus,
                    -m.mu * params.q / (m.alpha * m.c_alpha),
                ));
            let a = rng.random_range(0.05..3.0);
            let b = rng.random_range(0.0..3.0);
            worst_form = worst_form.max(rel(
                m.cost_zero(&roots, params.k, a, b)?,
                m.cost_zero_wz(&roots, params.k, a, b)?,
            ));
            let a_crit = m.critical_a(&roots, params.k, b)?;
            worst_jofa = worst_jofa.max(
                (m.cost_zero(&roots, params.k, a_crit, b)? - params.k * a_crit).abs()
                    / (params.k * a_crit).max(1e-12),
            );
        }
        verdict(
            "laplace_root_identities",
            worst_root <= 1e-9,
            format!("worst relative error {worst_root:.2e}"),
        );
        verdict(
            "cost_form_agreement",
            worst_form <= 1e-9,
            format!("worst relative error {worst_form:.2e}"),
        );
        verdict(
            "stationary_buffer_identity",
            worst_jofa <= 1e-8,
            format!("worst relative error {worst_jofa:.2e}"),
        );
    } else {
        println!("laplace_root_identities: skipped (needs exponential claims)");
    }

    let grid = build_grid(grid_args)?;
    let eps = epsilon_for(&params, grid_args);
    let sol = howard_solve(&params, &grid, grid_args.alpha_grid, eps, 200)?;
    let report = validate_solution(&params, &sol)?;
    for check in &report.checks {
        verdict(
            check.name,
            check.pass,
            format!("worst value {:e}", check.worst_value),
        );
    }

    if all_pass {
        Ok(())
    } else {
        Err(Failure::new(EXIT_VALIDATION, "validation failed"))
    }
}
