//! `swsim`: run social-welfare bandit experiments from JSON plans.
//!
//! Subcommands:
//! - `simulate`: execute a plan, write `<name>.csv` and `<name>.json`;
//! - `verify`:   run the analytic identity suite (four-point welfare
//!   gaps, concave-family properties, oracle equivalences);
//! - `rates`:    execute a horizon sweep and report fitted log-log
//!   regret slopes.
//!
//! Exit codes: 0 success, 1 runtime failure (including failed
//! verification), 2 configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use welfare_bandits::env::{check_mu_identities, lower_bound_proof_constants, ConcaveFamily};
use welfare_bandits::exp3::{theorem_bound, Exp3Config};
use welfare_bandits::harness::{
    compare_to_bound, final_mean_regret, fit_rate, run_plan, write_csv, write_summary,
    AlgorithmSpec, BoundReport, ExperimentPlan, PlanResult, Summary,
};
use welfare_bandits::oracle::best_constant_adversarial;
use welfare_bandits::welfare::social_welfare;

#[derive(Parser)]
#[command(name = "swsim", version, about = "Social-welfare bandit simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment plan and write CSV + summary JSON.
    Simulate(RunArgs),
    /// Check the closed-form identities behind the hard instances.
    Verify(VerifyArgs),
    /// Run a horizon sweep and fit empirical regret-rate exponents.
    Rates(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment plan.
    #[arg(long)]
    config: PathBuf,
    /// Override a plan field after parsing, e.g. `--override T=1000`
    /// or `--override algorithm.k=10`.  Repeatable; unknown keys are
    /// rejected.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory for result files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Replaces the plan's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 sizes the pool automatically.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Evaluate the lower-bound constants at this welfare weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Distribution tilt used together with --lambda.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    epsilon: f64,
    /// Test hook: inject a perturbation so the suite must fail.
    #[arg(long, hide = true)]
    perturb: bool,
    /// Suppress the per-row table, print only the verdict.
    #[arg(long)]
    quiet: bool,
}

/// Configuration problem: reported on stderr, exit code 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Simulate(args) => cmd_simulate(&args),
        Cmd::Verify(args) => cmd_verify(&args),
        Cmd::Rates(args) => cmd_rates(&args),
    };
    match result {
        Ok(code) => code,
        Err(err) if err.is::<ConfigError>() => {
            eprintln!("configuration error: {err}");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Parse the plan file and apply `key=value` overrides.
fn load_plan(args: &RunArgs) -> anyhow::Result<ExperimentPlan> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| config_err(format!("{}: {e}", args.config.display())))?;
    let mut doc: Value = serde_json::from_str(&text)
        .map_err(|e| config_err(format!("{}: {e}", args.config.display())))?;
    for ov in &args.overrides {
        apply_override(&mut doc, ov)?;
    }
    let mut plan: ExperimentPlan = serde_json::from_value(doc)
        .map_err(|e| config_err(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        plan.base_seed = seed;
    }
    plan.validate()
        .map_err(|e| config_err(format!("{}: {e}", args.config.display())))?;
    Ok(plan)
}

/// Apply one `key=value` override to the parsed plan document.
///
/// Top-level plan fields are addressed by name (`T` abbreviates a
/// single-horizon list); nested algorithm/environment fields use dotted
/// paths that must already exist, e.g. `algorithm.gamma=0.2`.
fn apply_override(doc: &mut Value, ov: &str) -> anyhow::Result<()> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| config_err(format!("override `{ov}` is not KEY=VALUE")))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| config_err("plan file must hold a JSON object"))?;
    match key {
        "name" | "lambda" | "replications" | "base_seed" | "checkpoints_per_decade" => {
            obj.insert(key.into(), value);
        }
        "T" => {
            obj.insert("horizons".into(), Value::Array(vec![value]));
        }
        "horizons" => {
            let list: Vec<Value> = raw
                .split(',')
                .map(|s| {
                    serde_json::from_str(s.trim())
                        .map_err(|_| config_err(format!("bad horizon `{s}` in `{ov}`")))
                })
                .collect::<Result<_, _>>()?;
            obj.insert("horizons".into(), Value::Array(list));
        }
        path if path.starts_with("algorithm.") || path.starts_with("env.") => {
            let mut cursor = &mut *doc;
            let parts: Vec<&str> = path.split('.').collect();
            for part in &parts[..parts.len() - 1] {
                cursor = cursor
                    .get_mut(part)
                    .ok_or_else(|| config_err(format!("unknown override key `{path}`")))?;
            }
            let leaf = parts[parts.len() - 1];
            let slot = cursor
                .as_object_mut()
                .and_then(|o| o.get_mut(leaf))
                .ok_or_else(|| config_err(format!("unknown override key `{path}`")))?;
            *slot = value;
        }
        other => return Err(config_err(format!("unknown override key `{other}`"))),
    }
    Ok(())
}

/// Bound-dominance reports for fixed in-hypothesis Exp3 configs.
fn bound_reports(plan: &ExperimentPlan, result: &PlanResult) -> Vec<BoundReport> {
    let AlgorithmSpec::Exp3 { k, gamma, eta } = plan.algorithm else {
        return Vec::new();
    };
    let Ok(cfg) = Exp3Config::new(k, gamma, eta, plan.lambda) else {
        return Vec::new();
    };
    if !cfg.satisfies_bound_hypothesis() || plan.replications < 100 {
        return Vec::new();
    }
    result
        .horizons
        .iter()
        .map(|h| compare_to_bound(h, |t| theorem_bound(&cfg, t).expect("hypothesis checked")))
        .collect()
}

fn write_outputs(
    plan: &ExperimentPlan,
    result: &PlanResult,
    out: &Path,
    quiet: bool,
) -> anyhow::Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(out).map_err(|e| anyhow::anyhow!("{}: {e}", out.display()))?;
    let csv_path = out.join(format!("{}.csv", plan.name));
    let json_path = out.join(format!("{}.json", plan.name));
    write_csv(result, &csv_path)?;
    let summary = Summary {
        result,
        rate_fit: fit_rate(&final_mean_regret(result)).ok(),
        bound_reports: bound_reports(plan, result),
    };
    write_summary(&summary, &json_path)?;
    if !quiet {
        println!("wrote {}", csv_path.display());
        println!("wrote {}", json_path.display());
    }
    Ok((csv_path, json_path))
}

fn cmd_simulate(args: &RunArgs) -> anyhow::Result<ExitCode> {
    let plan = load_plan(args)?;
    if !args.quiet {
        println!(
            "plan `{}`: {} on {}, horizons {:?}, {} replications",
            plan.name,
            plan.algorithm.label(),
            plan.env.label(),
            plan.horizons,
            plan.replications
        );
    }
    let result = run_plan(&plan, args.threads)?;
    write_outputs(&plan, &result, &args.out, args.quiet)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_rates(args: &RunArgs) -> anyhow::Result<ExitCode> {
    let plan = load_plan(args)?;
    if plan.horizons.len() < 4 {
        return Err(config_err(format!(
            "rate fitting needs at least 4 horizons, got {}",
            plan.horizons.len()
        )));
    }
    let span = plan.horizons[plan.horizons.len() - 1] as f64 / plan.horizons[0] as f64;
    if span < 100.0 {
        return Err(config_err(
            "rate fitting needs horizons spanning at least two decades",
        ));
    }
    let result = run_plan(&plan, args.threads)?;
    let points = final_mean_regret(&result);
    let fit = fit_rate(&points)?;

    // Standard error of the fitted slope, from the log-log residuals.
    let logs: Vec<(f64, f64)> = points.iter().map(|&(t, r)| (t.ln(), r.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let ss_res: f64 = logs
        .iter()
        .map(|&(x, y)| {
            let e = y - (fit.intercept + fit.slope * x);
            e * e
        })
        .sum();
    let se = (ss_res / (n - 2.0) / sxx).sqrt();

    if !args.quiet {
        for &(t, r) in &points {
            println!("T = {t:>12.0}  mean final regret = {r:.4}");
        }
    }
    println!(
        "fitted rate: regret ~ T^{:.4} (slope se {:.4}, 95% ca. [{:.4}, {:.4}], R^2 {:.4})",
        fit.slope,
        se,
        fit.slope - 1.96 * se,
        fit.slope + 1.96 * se,
        fit.r_squared
    );
    write_outputs(&plan, &result, &args.out, args.quiet)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: &VerifyArgs) -> anyhow::Result<ExitCode> {
    if let Some(lambda) = args.lambda {
        let (c1, c2, c3, cap) = lower_bound_proof_constants::<f64>(lambda)?;
        println!("lambda = {lambda}, epsilon = {}", args.epsilon);
        println!("c1 = {c1:.12}");
        println!("c2 = {c2:.12}");
        println!("c3 = {c3:.12}");
        println!("C  = {cap:.12}");
        let report = check_mu_identities(lambda, args.epsilon)?;
        println!(
            "identity residuals: gap-c1*eps = {:.3e}, cross-gap-c2 = {:.3e}",
            report.gap_vs_c1_eps, report.cross_gap_vs_c2
        );
        return Ok(ExitCode::SUCCESS);
    }

    // Perturbation hook: shifts every identity residual so the table
    // cannot pass; exercises the failure path end to end.
    let shift = if args.perturb { 1e-6 } else { 0.0 };
    let mut all_ok = true;
    let mut row = |label: String, ok: bool| {
        if !args.quiet || !ok {
            println!("{:<58} {}", label, if ok { "ok" } else { "FAIL" });
        }
        all_ok &= ok;
    };

    for &lambda in &[0.1, 0.25, 0.5, 0.75, 0.9] {
        for &epsilon in &[-1.0, -0.5, 0.0, 0.5, 1.0] {
            let rep = check_mu_identities(lambda, epsilon)?;
            let ok = (rep.gap_vs_c1_eps.abs() + shift) <= rep.tol
                && (rep.cross_gap_vs_c2.abs() + shift) <= rep.tol
                && rep.argmax_structure
                && rep.capital_c > 0.0;
            row(
                format!("four-point identities  lambda={lambda:<4} eps={epsilon:<4}"),
                ok,
            );
        }
    }

    for &lambda in &[0.25f64, 0.5, 0.75] {
        let f0 = ConcaveFamily::new(lambda, 0.0)?;
        for &eps in &[0.0, 0.45 * f0.eps_bar, -0.45 * f0.eps_bar] {
            let f = ConcaveFamily::new(lambda, eps)?;
            let mut ok = (f.cdf(1.0) - 1.0).abs() + shift <= 1e-9;
            for i in 0..200 {
                let x = i as f64 / 200.0;
                ok &= (f.cdf(f.quantile(f.cdf(x))) - f.cdf(x)).abs() + shift <= 1e-9;
            }
            // Expected welfare is concave along the policy axis.
            let w = |x: f64| f.expected_welfare(x, lambda);
            for i in 1..100 {
                let x = i as f64 / 100.0;
                ok &= w(x) - (w(x - 0.01) + w(x + 0.01)) / 2.0 >= -1e-9;
            }
            row(
                format!("concave family         lambda={lambda:<4} eps={eps:<7.4}"),
                ok,
            );
        }
    }

    for seed in 0..5u64 {
        let values: Vec<f64> = (0..40)
            .map(|i| {
                let g = 10_000u64;
                (welfare_bandits::rng::counter_uniform(seed, i) * g as f64).round() / g as f64
            })
            .collect();
        let lambda = 0.6;
        let (xstar, best) = best_constant_adversarial(&values, lambda)?;
        let grid_best = (0..=10_000)
            .map(|j| {
                let x = j as f64 / 10_000.0;
                values.iter().map(|&v| social_welfare(x, v, lambda)).sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let at_star: f64 = values.iter().map(|&v| social_welfare(xstar, v, lambda)).sum();
        let ok = (best - grid_best).abs() + shift <= 1e-9 && (best - at_star).abs() <= 1e-9;
        row(format!("oracle vs grid         seed={seed}"), ok);
    }

    if all_ok {
        println!("verification suite: all checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("verification suite: FAILED");
        Ok(ExitCode::FAILURE)
    }
}
