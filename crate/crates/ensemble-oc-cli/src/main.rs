//! Command-line front end: loads a JSON run config, dispatches to the
//! library, and writes deterministic CSV/JSON artifacts.
//!
//! Exit codes are part of the contract:
//!   0  success (solve hit tolerance / checks passed / sweep converged)
//!   2  malformed or unsupported input (config, CSV, flags)
//!   3  the run finished but did not reach its target (iteration budget,
//!      stagnation, non-converged sweep)
//!   4  a checker failed and gated the run
//!
//! Artifacts are written atomically (temp file + rename) so a crashed run
//! never leaves a truncated file behind, and numbers are serialised in
//! shortest round-trip form so reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ensemble_oc::config::RunConfig;
use ensemble_oc::costs::cost_breakdown;
use ensemble_oc::ensemble::ControlSequence;
use ensemble_oc::gamma::{preflight_checks, run_gamma_sweep, GammaSweepResult, SweepOutcome};
use ensemble_oc::measures::fmt_f64;
use ensemble_oc::solvers::{solve, Termination};
use ensemble_oc::verify::{check_lemma2_bound, check_lemma3_bound, CheckReport};
use ensemble_oc::{Error, Result};

const EXIT_INPUT: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_REFUSED: u8 = 4;

#[derive(Parser)]
#[command(
    name = "ensemble-oc",
    version,
    about = "Finite-horizon optimal control of system ensembles, with certified measure convergence"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory for output artifacts (overrides the config's output_dir).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed override for everything the run derives randomness from.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 = auto; ENSEMBLE_OC_THREADS is the fallback.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out one trajectory; writes trajectory.csv and prints the costs.
    Rollout(RolloutArgs),
    /// Minimise the averaged cost; writes report.json and u_star.csv.
    Solve,
    /// Run the assumption checkers; prints and writes the reports.
    CheckAssumptions,
    /// Sweep empirical measures against the reference; writes values.csv,
    /// minimisers.csv, and summary.json.
    GammaSweep(SweepArgs),
}

#[derive(Args)]
struct RolloutArgs {
    /// Parameter vector, comma-separated.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    theta: Vec<f64>,
    /// CSV file of inputs, one row per step, one column per input coordinate.
    #[arg(long, value_name = "FILE")]
    u: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Override the configured k grid, comma-separated.
    #[arg(long, value_delimiter = ',')]
    k_grid: Option<Vec<usize>>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let threads = match cli.threads {
        Some(n) => Some(n),
        None => match std::env::var("ENSEMBLE_OC_THREADS") {
            Ok(raw) => Some(raw.parse().map_err(|_| {
                Error::input(format!("ENSEMBLE_OC_THREADS must be an integer, got {raw:?}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        ensemble_oc::configure_threads(n);
    }

    let config_path = cli
        .config
        .ok_or_else(|| Error::input("--config <FILE> is required"))?;
    let text = fs::read_to_string(&config_path).map_err(|e| {
        Error::input(format!("cannot read config {}: {e}", config_path.display()))
    })?;
    let mut config = RunConfig::from_json(&text)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out_dir = cli.out.or_else(|| config.output_dir.clone());

    match cli.command {
        Command::Rollout(args) => cmd_rollout(&config, &args, out_dir.as_deref()),
        Command::Solve => cmd_solve(&config, out_dir.as_deref()),
        Command::CheckAssumptions => cmd_check(&config, out_dir.as_deref()),
        Command::GammaSweep(args) => cmd_gamma_sweep(config, &args, out_dir.as_deref()),
    }
}

fn require_out(out_dir: Option<&Path>) -> Result<&Path> {
    out_dir.ok_or_else(|| {
        Error::input("an output directory is required: pass --out or set output_dir in the config")
    })
}

/// Atomic write: the file appears under its final name only when complete.
fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::input(format!("cannot create {}: {e}", dir.display())))?;
    let tmp = dir.join(format!(".{name}.tmp"));
    let path = dir.join(name);
    fs::write(&tmp, content)
        .map_err(|e| Error::input(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, &path)
        .map_err(|e| Error::input(format!("cannot move artifact into {}: {e}", path.display())))?;
    Ok(())
}

fn pretty_json<T: serde::Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("artifact serialises");
    out.push('\n');
    out
}

fn parse_u_file(path: &Path, input_dim: usize) -> Result<ControlSequence> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::input(format!("cannot read u file {}: {e}", path.display())))?;
    let mut steps = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>> = line
            .split(',')
            .map(|field| {
                field.trim().parse::<f64>().map_err(|_| {
                    Error::input(format!(
                        "u file line {}: {field:?} is not a number",
                        idx + 1
                    ))
                })
            })
            .collect();
        let row = row?;
        if row.len() != input_dim {
            return Err(Error::input(format!(
                "u file line {}: expected {input_dim} columns, got {}",
                idx + 1,
                row.len()
            )));
        }
        steps.push(row);
    }
    if steps.is_empty() {
        return Err(Error::input("u file contains no input rows"));
    }
    ControlSequence::new(steps)
}

fn csv_row(fields: &[String]) -> String {
    fields.join(",")
}

fn trajectory_csv(states: &[Vec<f64>]) -> String {
    let dim = states[0].len();
    let mut header = vec!["n".to_string()];
    header.extend((1..=dim).map(|j| format!("x_{j}")));
    let mut lines = vec![csv_row(&header)];
    for (n, state) in states.iter().enumerate() {
        let mut fields = vec![n.to_string()];
        fields.extend(state.iter().map(|v| fmt_f64(*v)));
        lines.push(csv_row(&fields));
    }
    lines.join("\n") + "\n"
}

fn control_csv(u: &ControlSequence) -> String {
    let mut header = vec!["n".to_string()];
    header.extend((1..=u.input_dim()).map(|j| format!("u_{j}")));
    let mut lines = vec![csv_row(&header)];
    for (n, step) in u.steps().iter().enumerate() {
        let mut fields = vec![n.to_string()];
        fields.extend(step.iter().map(|v| fmt_f64(*v)));
        lines.push(csv_row(&fields));
    }
    lines.join("\n") + "\n"
}

fn cmd_rollout(config: &RunConfig, args: &RolloutArgs, out_dir: Option<&Path>) -> Result<ExitCode> {
    let problem = config.problem()?;
    let u = parse_u_file(&args.u, problem.input_dim())?;
    let breakdown = cost_breakdown(&problem, &u, &args.theta)?;
    let trajectory = problem.system().rollout(problem.x0_map(), &u, &args.theta)?;

    write_artifact(
        require_out(out_dir)?,
        "trajectory.csv",
        &trajectory_csv(trajectory.states()),
    )?;
    println!(
        "{}",
        serde_json::json!({
            "J_N": breakdown.total,
            "J_N0": breakdown.without_input_penalty,
        })
    );
    Ok(ExitCode::SUCCESS)
}

fn refusal(report: &CheckReport) -> Result<ExitCode> {
    println!("{}", pretty_json(report));
    eprintln!("check {:?} failed; refusing to run", report.check_id);
    Ok(ExitCode::from(EXIT_REFUSED))
}

fn cmd_solve(config: &RunConfig, out_dir: Option<&Path>) -> Result<ExitCode> {
    let problem = config.problem()?;
    if config.require_checks {
        let reports = preflight_checks(&problem, config.check_settings()?, config.lsc_seq_len())?;
        if let Some(failing) = reports.iter().find(|r| !r.passed()) {
            return refusal(failing);
        }
    }
    let mu = config.resolve_measure()?;
    let report = solve(&problem, &mu, &config.solver)?;

    let dir = require_out(out_dir)?;
    write_artifact(dir, "report.json", &pretty_json(&report))?;
    write_artifact(dir, "u_star.csv", &control_csv(&report.minimiser))?;
    println!("{}", pretty_json(&report));
    Ok(match report.termination {
        Termination::ToleranceMet => ExitCode::SUCCESS,
        Termination::MaxIter | Termination::Stagnation => ExitCode::from(EXIT_NOT_CONVERGED),
    })
}

fn cmd_check(config: &RunConfig, out_dir: Option<&Path>) -> Result<ExitCode> {
    let problem = config.problem()?;
    let settings = config.check_settings()?;
    let mut reports = preflight_checks(&problem, settings, config.lsc_seq_len())?;
    // preflight_checks already guaranteed the declarations exist.
    let state_moduli = problem.system().declared_moduli().expect("checked");
    let cost_moduli = problem.cost().declared_moduli().expect("checked");
    reports.push(check_lemma2_bound(
        problem.system(),
        state_moduli,
        problem.horizon(),
        settings,
    )?);
    reports.push(check_lemma3_bound(
        &problem,
        state_moduli,
        cost_moduli,
        problem.horizon(),
        settings,
    )?);

    let json = pretty_json(&reports);
    if let Some(dir) = out_dir {
        write_artifact(dir, "checks.json", &json)?;
    }
    println!("{json}");
    Ok(if reports.iter().all(CheckReport::passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_REFUSED)
    })
}

fn values_csv(result: &GammaSweepResult) -> String {
    let mut lines = vec!["seed,k,value,value_gap,w1".to_string()];
    for cell in &result.cells {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        lines.push(csv_row(&[
            cell.seed_index.to_string(),
            cell.k.to_string(),
            opt(cell.value),
            opt(cell.value_gap),
            if cell.w1.is_finite() { fmt_f64(cell.w1) } else { String::new() },
        ]));
    }
    lines.join("\n") + "\n"
}

fn minimisers_csv(result: &GammaSweepResult) -> String {
    let width = result.reference_minimiser.to_flat().len();
    let mut header = vec!["seed".to_string(), "k".to_string(), "minimiser_gap".to_string()];
    header.extend((1..=width).map(|j| format!("u_{j}")));
    let mut lines = vec![csv_row(&header)];
    for cell in &result.cells {
        let mut fields = vec![
            cell.seed_index.to_string(),
            cell.k.to_string(),
            cell.minimiser_gap.map(fmt_f64).unwrap_or_default(),
        ];
        match &cell.minimiser {
            Some(flat) => fields.extend(flat.iter().map(|v| fmt_f64(*v))),
            None => fields.extend(std::iter::repeat(String::new()).take(width)),
        }
        lines.push(csv_row(&fields));
    }
    lines.join("\n") + "\n"
}

/// summary.json carries everything except the per-cell table, which lives
/// in the CSVs.
fn summary_json(outcome: &SweepOutcome) -> String {
    let mut value = serde_json::to_value(outcome).expect("sweep outcome serialises");
    if let Some(map) = value.as_object_mut() {
        map.remove("cells");
    }
    let mut out = serde_json::to_string_pretty(&value).expect("summary serialises");
    out.push('\n');
    out
}

fn cmd_gamma_sweep(
    mut config: RunConfig,
    args: &SweepArgs,
    out_dir: Option<&Path>,
) -> Result<ExitCode> {
    if let Some(k_grid) = &args.k_grid {
        let sweep = config
            .sweep
            .as_mut()
            .ok_or_else(|| Error::input("config has no sweep section"))?;
        sweep.k_grid = k_grid.clone();
    }
    let sweep_config = config.sweep_config()?;
    let outcome = run_gamma_sweep(&sweep_config)?;
    let dir = require_out(out_dir)?;
    write_artifact(dir, "summary.json", &summary_json(&outcome))?;

    match &outcome {
        SweepOutcome::Refused(report) => {
            eprintln!("check {:?} failed; sweep refused", report.check_id);
            println!("{}", summary_json(&outcome));
            Ok(ExitCode::from(EXIT_REFUSED))
        }
        SweepOutcome::Ran(result) => {
            write_artifact(dir, "values.csv", &values_csv(result))?;
            write_artifact(dir, "minimisers.csv", &minimisers_csv(result))?;
            println!("{}", summary_json(&outcome));
            Ok(if result.value_converged && result.minimiser_converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_NOT_CONVERGED)
            })
        }
    }
}
