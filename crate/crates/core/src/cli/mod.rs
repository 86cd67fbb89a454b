//! The `bflow` command-line front end.
//!
//! Exit codes: 0 when every verdict passes, 1 when a check fails or a
//! runtime error occurs (a report is still written for `run`), 2 for usage,
//! parse and validation errors (nothing is written).

pub mod checks;
pub mod report;
pub mod scenario;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde_json::{json, Value};

use crate::certify::{certify_chain, epsilon_frontier, Interval};
use crate::flow::{integrate, FlowParams};
use crate::{Error, Result};
use report::{num, to_json_string, verdict};
use scenario::{parse_rational, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Version of the report layout.
pub const REPORT_FORMAT: u32 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "bflow",
    version,
    about = "Barycentric flows of finite group actions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the checks listed in a scenario file and write a JSON report.
    Run {
        scenario: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include wall-clock seconds per check (makes reports run-dependent).
        #[arg(long)]
        timing: bool,
    },
    /// Certify the constant chain at a given epsilon and tau.
    Certify {
        #[arg(long, default_value = "1/4000")]
        epsilon: String,
        #[arg(long, default_value = "1/5")]
        tau: String,
        /// Also search for the largest epsilon the chain tolerates.
        #[arg(long)]
        frontier: bool,
        #[arg(long = "target-k", default_value = "999/1000")]
        target_k: String,
    },
    /// Integrate the flow from one point and write the trajectory as CSV.
    ExportTrajectory {
        scenario: PathBuf,
        /// Comma-separated coordinates; rationals such as 1/3 are accepted.
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long)]
        csv: PathBuf,
    },
}

/// Entry point; returns the process exit code.
pub fn main() -> i32 {
    main_with_args(std::env::args_os())
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("bflow: {e}");
        return EXIT_USAGE;
    }
    let outcome = match cli.command {
        Command::Run {
            scenario,
            out,
            timing,
        } => run(&scenario, out.as_deref(), timing),
        Command::Certify {
            epsilon,
            tau,
            frontier,
            target_k,
        } => certify(&epsilon, &tau, &target_k, frontier),
        Command::ExportTrajectory {
            scenario,
            point,
            csv,
        } => export_trajectory(&scenario, &point, &csv),
    };
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAIL,
        Err(e) => {
            eprintln!("bflow: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Validation(_) => EXIT_USAGE,
        _ => EXIT_FAIL,
    }
}

/// Sizes the global rayon pool from `BF_THREADS` when set.
fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("BF_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Validation(format!("BF_THREADS must be a positive integer, got {v:?}"))
    })?;
    // a pool that already exists (repeated calls in one process) is kept
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

/// Runs a scenario and returns whether every check passed.
pub fn run(path: &Path, out: Option<&Path>, timing: bool) -> Result<bool> {
    let scenario = Scenario::load(path)?;
    let (report, passed) = run_scenario(&scenario, timing)?;
    write_output(out, &to_json_string(&report))?;
    Ok(passed)
}

/// The report document for a parsed scenario and its overall verdict.
pub fn run_scenario(scenario: &Scenario, timing: bool) -> Result<(Value, bool)> {
    let started = Instant::now();
    let mut ctx = checks::Context::new(scenario)?;
    let mut results = Vec::with_capacity(scenario.checks.len());
    for &c in &scenario.checks {
        let t0 = Instant::now();
        let mut outcome = ctx.run(c);
        outcome.seconds = t0.elapsed().as_secs_f64();
        results.push(outcome);
    }
    let passed = results.iter().all(|r| r.passed);
    let mut report = json!({
        "format": REPORT_FORMAT,
        "version": env!("CARGO_PKG_VERSION"),
        "scenario": checks::scenario_json(scenario, &ctx.action),
        "checks": results.iter().map(|r| r.to_json(timing)).collect::<Vec<_>>(),
        "verdict": verdict(passed),
        "passed": passed,
    });
    if timing {
        report["seconds"] = num(started.elapsed().as_secs_f64());
    }
    Ok((report, passed))
}

fn rational_arg(name: &str, s: &str) -> Result<BigRational> {
    parse_rational(s).map_err(|e| match e {
        Error::Validation(msg) => Error::Validation(format!("--{name}: {msg}")),
        other => other,
    })
}

pub(crate) fn certify_inputs(
    epsilon: &BigRational,
    tau: &BigRational,
    target_k: &BigRational,
) -> Value {
    let entry = |q: &BigRational| json!({"exact": q.to_string(), "value": num(q.to_f64().unwrap_or(f64::NAN))});
    json!({
        "epsilon": entry(epsilon),
        "tau": entry(tau),
        "target_k": entry(target_k),
    })
}

/// Certifies the chain and prints the certificate; returns whether it passed.
pub fn certify(epsilon: &str, tau: &str, target_k: &str, frontier: bool) -> Result<bool> {
    let eps = rational_arg("epsilon", epsilon)?;
    let tau = rational_arg("tau", tau)?;
    let k = rational_arg("target-k", target_k)?;
    let (ei, ti, ki) = (
        Interval::from_rational(&eps),
        Interval::from_rational(&tau),
        Interval::from_rational(&k),
    );
    if ei.lo() < 0.0 || ti.hi() <= 0.0 || !(ki.lo() > 0.0 && ki.hi() < 1.0) {
        return Err(Error::Validation(
            "need epsilon >= 0, tau > 0 and target-k in (0, 1)".into(),
        ));
    }
    let chain = certify_chain(ei, ti, ki);
    let mut passed = chain.passed();
    let frontier_json = if frontier {
        match epsilon_frontier(ti, ki.mid()) {
            Ok(e) => {
                passed &= e >= ei.hi();
                Some(json!({"epsilon": num(e)}))
            }
            Err(err) => {
                passed = false;
                Some(json!({"error": err.to_string()}))
            }
        }
    } else {
        None
    };
    let doc = report::certificate_json(&chain, certify_inputs(&eps, &tau, &k), frontier_json);
    write_output(None, &to_json_string(&doc))?;
    Ok(passed)
}

/// Parses `--point`: comma-separated rational or decimal coordinates.
pub fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|c| {
            let q = rational_arg("point", c)?;
            q.to_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Validation(format!("--point: {c:?} out of range")))
        })
        .collect()
}

/// Integrates from `point` with the scenario's flow settings and writes CSV.
pub fn export_trajectory(path: &Path, point: &str, csv: &Path) -> Result<bool> {
    let scenario = Scenario::load(path)?;
    let coords = parse_point(point)?;
    let a = scenario.build_action()?;
    let x = a.manifold().point(coords)?;
    let params = FlowParams {
        tau: scenario.flow.tau,
        step: scenario.flow.step,
        conv_tol: scenario.flow.conv_tol,
        ..FlowParams::default()
    };
    let traj = integrate(&a, &x, &params)?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(csv)?);
    traj.write_csv(&mut file)?;
    file.flush()?;
    eprintln!(
        "bflow: {} samples, status {}, final speed {:e}",
        traj.samples.len(),
        traj.status.name(),
        traj.last().speed
    );
    Ok(true)
}
