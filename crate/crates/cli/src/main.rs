//! `vc`: solve, certify and compare variance-constrained insurance contracts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use varcontract::{
    brute_solve_with, compare_variance, compare_wealth, solve_with, Compare, ContractSolution, Error, Exec, Scenario,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    /// Solve one scenario and write its schedule.
    Solve,
    /// Solve, run the brute-force oracle and the KKT check, report agreement.
    Certify,
    /// Compare two initial wealth levels (`compare: {w1, w2}`).
    CompareWealth,
    /// Compare two variance bounds (`compare: {nu1, nu2}`).
    CompareVariance,
    /// Solve the scenario for each value of `sweep.parameter`.
    Sweep,
}

#[derive(Debug, Parser)]
#[command(name = "vc", version, about = "Optimal indemnity under an insurer variance bound")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Scenario JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output path; side files are written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Override the scenario's grid size.
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug)]
enum Failure {
    Core(Error),
    Io(String),
    /// Output was written but the run did not meet its own acceptance test.
    Rejected(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn category(&self) -> &'static str {
        match self {
            Failure::Core(e) => e.category(),
            Failure::Io(_) => "io",
            Failure::Rejected(_) => "rejected",
        }
    }

    fn code(&self) -> u8 {
        match self.category() {
            "validation" => 2,
            "domain" | "tail" => 3,
            "solver" => 4,
            "unsupported" => 5,
            "io" => 6,
            "precondition" => 7,
            "inconsistent" => 8,
            _ => 9,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Core(e) => e.to_string(),
            Failure::Io(m) | Failure::Rejected(m) => m.clone(),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// `%.12g`-style formatting: 12 significant digits, trailing zeros removed.
fn fmt_g(x: f64) -> String {
    const SIG: i32 = 12;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", (SIG - 1) as usize, x);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..SIG).contains(&exp) {
        format!("{}e{}{:02}", trim(mant), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        trim(&format!("{:.*}", (SIG - 1 - exp) as usize, x))
    }
}

fn side_file(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write(path: &Path, text: &str) -> Outcome<()> {
    fs::write(path, text).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write(path, &text)
}

const SCHEDULE_HEADER: &str = "x,indemnity,retention,marginal,exposure,phi_kkt";

/// One CSV row per grid node, each prefixed by `prefix`.
fn schedule_rows(sol: &ContractSolution, prefix: &str, buf: &mut String) -> Outcome<()> {
    let marginal = sol.marginals()?;
    let phi = sol.kkt_profile()?;
    let exposure = sol.exposure();
    for (k, (x, i)) in sol.nodes().iter().zip(sol.indemnity()).enumerate() {
        let phi = phi[k].map(fmt_g).unwrap_or_default();
        writeln!(
            buf,
            "{prefix}{},{},{},{},{},{}",
            fmt_g(*x),
            fmt_g(*i),
            fmt_g(x - i),
            fmt_g(marginal[k]),
            fmt_g(exposure[k]),
            phi
        )
        .expect("string write");
    }
    Ok(())
}

fn summary(sol: &ContractSolution) -> Outcome<serde_json::Value> {
    let kkt = if sol.regime.is_interior() { Some(sol.certify_kkt()?) } else { None };
    Ok(json!({
        "regime": sol.regime.label(),
        "parameters": sol.regime,
        "premium": sol.premium,
        "expected_indemnity": sol.expected_indemnity(),
        "indemnity_variance": sol.indemnity_variance(),
        "expected_utility": sol.expected_utility()?,
        "diagnostics": sol.diagnostics,
        "arrow": sol.arrow,
        "bracket": sol.bracket,
        "kkt": kkt,
        "vajda_ratio_monotone": sol.vajda_ratio(),
    }))
}

fn load(cli: &Cli) -> Outcome<Scenario> {
    let text = fs::read_to_string(&cli.config)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", cli.config.display())))?;
    let mut scenario = Scenario::from_json(&text)?;
    if let Some(n) = cli.grid_n {
        scenario.grid_n = n;
    }
    scenario.validate()?;
    Ok(scenario)
}

fn run_solve(cli: &Cli, scenario: &Scenario) -> Outcome<String> {
    let problem = scenario.problem()?;
    let sol = solve_with(&problem, &scenario.solver_config(Exec::Parallel))?;
    let mut csv = format!("{SCHEDULE_HEADER}\n");
    schedule_rows(&sol, "", &mut csv)?;
    write(&cli.out, &csv)?;
    write_json(&side_file(&cli.out, ".summary.json"), &summary(&sol)?)?;
    Ok(format!("{} (premium {})", sol.regime.label(), fmt_g(sol.premium)))
}

fn run_certify(cli: &Cli, scenario: &Scenario) -> Outcome<String> {
    let problem = scenario.problem()?;
    let sol = solve_with(&problem, &scenario.solver_config(Exec::Parallel))?;
    let oracle = brute_solve_with(&problem, &scenario.oracle_config())?;
    let gap = sol.indemnity().iter().zip(&oracle.schedule).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let threshold = 3.0 * problem.measure.support_max() / problem.measure.len() as f64;
    let kkt = if sol.regime.is_interior() { Some(sol.certify_kkt()?) } else { None };
    let solver_objective = sol.expected_utility()?;
    let agree = gap <= threshold && oracle.converged && kkt.is_none_or(|k| k.passed);
    write_json(
        &cli.out,
        &json!({
            "regime": sol.regime.label(),
            "sup_norm_gap": gap,
            "threshold": threshold,
            "solver_objective": solver_objective,
            "oracle_objective": oracle.objective,
            "objective_gap": oracle.objective - solver_objective,
            "oracle_converged": oracle.converged,
            "oracle_iterations": oracle.iterations,
            "oracle_kkt_residual": oracle.kkt_residual,
            "kkt": kkt,
            "agree": agree,
        }),
    )?;
    let line = format!("sup-norm gap {} (threshold {})", fmt_g(gap), fmt_g(threshold));
    if agree {
        Ok(line)
    } else {
        Err(Failure::Rejected(format!("certification failed: {line}")))
    }
}

fn run_compare(cli: &Cli, scenario: &Scenario, command: Command) -> Outcome<String> {
    let problem = scenario.problem()?;
    let config = scenario.solver_config(Exec::Parallel);
    let report = match (command, scenario.compare) {
        (Command::CompareWealth, Some(Compare::Wealth { w1, w2 })) => compare_wealth(&problem, w1, w2, &config)?,
        (Command::CompareVariance, Some(Compare::Variance { nu1, nu2 })) => compare_variance(&problem, nu1, nu2, &config)?,
        _ => {
            let want = if command == Command::CompareWealth { "{w1, w2}" } else { "{nu1, nu2}" };
            return Err(Error::Validation(format!("config needs a \"compare\": {want} entry for this command")).into());
        }
    };
    write_json(&cli.out, &report)?;
    let mut csv = format!("case,{SCHEDULE_HEADER}\n");
    for (k, sol) in report.contracts.iter().enumerate() {
        schedule_rows(sol, &format!("{},", k + 1), &mut csv)?;
    }
    write(&side_file(&cli.out, ".schedules.csv"), &csv)?;
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    Ok(if failed.is_empty() { "all checks passed".into() } else { format!("failed checks: {}", failed.join(", ")) })
}

fn run_sweep(cli: &Cli, scenario: &Scenario) -> Outcome<String> {
    let sweep = scenario
        .sweep
        .clone()
        .ok_or_else(|| Error::Validation("config needs a \"sweep\": {parameter, values} entry".into()))?;
    let name = sweep.parameter.name();
    // scenarios run concurrently; each solve is sequential so the pool is not oversubscribed
    let results: Vec<(Scenario, Outcome<ContractSolution>)> = sweep
        .values
        .par_iter()
        .map(|v| {
            let point = scenario.with_parameter(sweep.parameter, *v);
            let sol = point
                .problem()
                .and_then(|p| solve_with(&p, &point.solver_config(Exec::Sequential)))
                .map_err(Failure::from);
            (point, sol)
        })
        .collect();

    let mut csv = format!("parameter,value,regime,{SCHEDULE_HEADER}\n");
    let mut points = Vec::with_capacity(results.len());
    let mut first_error = None;
    for ((point, sol), v) in results.into_iter().zip(&sweep.values) {
        match sol {
            Ok(sol) => {
                schedule_rows(&sol, &format!("{name},{},{},", fmt_g(*v), sol.regime.label()), &mut csv)?;
                points.push(json!({ "value": v, "scenario": point, "summary": summary(&sol)? }));
            }
            Err(f) => {
                points.push(json!({ "value": v, "scenario": point, "error": { "category": f.category(), "message": f.message() } }));
                first_error.get_or_insert(f);
            }
        }
    }
    write(&cli.out, &csv)?;
    write_json(&side_file(&cli.out, ".meta.json"), &json!({ "parameter": name, "base": scenario, "points": points }))?;
    match first_error {
        Some(f) => Err(f),
        None => Ok(format!("{} points over {name}", sweep.values.len())),
    }
}

fn configure_threads() -> Outcome<()> {
    if let Ok(v) = std::env::var("VC_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::Validation(format!("VC_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Io(format!("cannot size thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome<String> {
    configure_threads()?;
    let scenario = load(cli)?;
    match cli.command {
        Command::Solve => run_solve(cli, &scenario),
        Command::Certify => run_certify(cli, &scenario),
        Command::CompareWealth | Command::CompareVariance => run_compare(cli, &scenario, cli.command),
        Command::Sweep => run_sweep(cli, &scenario),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(line) => {
            if !cli.quiet {
                eprintln!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", json!({ "error": f.category(), "message": f.message() }));
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fmt_g;

    #[test]
    fn general_format() {
        assert_eq!(fmt_g(0.0), "0");
        assert_eq!(fmt_g(1.0), "1");
        assert_eq!(fmt_g(0.1), "0.1");
        assert_eq!(fmt_g(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_g(-2.5e-7), "-2.5e-07");
        assert_eq!(fmt_g(123456789012345.0), "1.23456789012e+14");
        assert_eq!(fmt_g(999999999999.5), "1e+12");
        assert_eq!(fmt_g(0.00012345), "0.00012345");
        assert_eq!(fmt_g(f64::NAN), "nan");
    }
}
