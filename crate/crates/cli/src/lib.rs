//! Command runners behind the `oam` binary.
//!
//! Each runner returns a process exit code and writes its report to the
//! given writer, which keeps them testable without spawning processes.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use oam_core::check::{run_checks, CheckOptions};
use oam_core::config::RunConfig;
use oam_core::oracle::{OracleProblem, DEFAULT_ORACLE_TOL};
use oam_core::solver::{Problem, Solver};
use oam_core::trace::{write_trace, RunSummary};
use oam_core::{Error, Vector};

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGENCE: u8 = 3;
pub const EXIT_INVARIANT: u8 = 4;

/// Exit code for an error that aborted a command.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Divergence { .. } | Error::Infeasible(_) | Error::OracleNonConvergence { .. } => {
            EXIT_DIVERGENCE
        }
        Error::Io(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

struct Loaded {
    config: RunConfig,
    base: PathBuf,
    problem: Problem,
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn load(path: &Path) -> Result<Loaded, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
    let config = RunConfig::from_json(&text)?;
    let base = base_dir(path);
    let problem = config.build_problem(&base)?;
    Ok(Loaded {
        config,
        base,
        problem,
    })
}

fn build_solver(loaded: &Loaded) -> Result<Solver, Error> {
    let options = loaded.config.build_options(&loaded.problem)?;
    Solver::new(loaded.problem.clone(), options).map_err(|e| e.within("solver"))
}

fn fail(err: &Error, out: &mut dyn Write) -> u8 {
    let _ = writeln!(out, "error: {err}");
    exit_code(err)
}

/// `oam solve <config>`: writes the trace (if configured) and prints a JSON
/// summary.
pub fn cmd_solve(path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    match solve(path, out) {
        Ok(()) => EXIT_OK,
        Err(e) => fail(&e, err),
    }
}

fn solve(path: &Path, out: &mut dyn Write) -> Result<(), Error> {
    let loaded = load(path)?;
    let solver = build_solver(&loaded)?;
    let output = &loaded.config.output;
    let reference = if output.reference {
        Some(
            OracleProblem::from_problem(&loaded.problem, DEFAULT_ORACLE_TOL)
                .map_err(|e| e.within("output.reference"))?
                .solve()?,
        )
    } else {
        None
    };

    let started = Instant::now();
    let result = solver.solve(reference.as_ref());
    let elapsed = started.elapsed().as_secs_f64();
    let run = match result {
        Ok(run) => run,
        Err(e @ Error::Divergence { .. }) => {
            if let (Error::Divergence { trace, .. }, Some(p)) = (&e, &output.trace_path) {
                // keep the trace up to the failure for diagnosis
                let file = std::fs::File::create(loaded.base.join(p))?;
                write_trace(trace, output.format, std::io::BufWriter::new(file))?;
            }
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    log::info!("{} iterations in {elapsed:.3}s", run.iterations());

    if let Some(p) = &output.trace_path {
        let file = std::fs::File::create(loaded.base.join(p))?;
        write_trace(&run.trace, output.format, std::io::BufWriter::new(file))?;
    }

    let (max_dist_c, max_dist_q) = loaded.problem.residuals(&run.u)?;
    let summary = RunSummary {
        u: run.u.iter().copied().collect(),
        iterations: run.iterations(),
        stop_reason: run.stop_reason,
        max_dist_c,
        max_dist_q,
        dist_to_ref: reference.as_ref().map(|r| (r - &run.u).norm()),
        reference: reference.map(|r| r.iter().copied().collect()),
        degenerate_landweber: run.degenerate_landweber,
        wall_time_secs: elapsed,
        config: loaded.config.clone(),
    };
    serde_json::to_writer_pretty(&mut *out, &summary)?;
    writeln!(out)?;
    Ok(())
}

/// `oam check <config> --samples N`: one line per invariant suite.
pub fn cmd_check(
    path: &Path,
    samples: usize,
    seed: Option<u64>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> u8 {
    let mut run = || -> Result<bool, Error> {
        let loaded = load(path)?;
        let opts = CheckOptions::new(samples, seed.unwrap_or(loaded.config.solver.seed))?;
        let solver = build_solver(&loaded)?;
        let report = run_checks(&solver, &opts)?;
        writeln!(
            out,
            "{} samples, seed {}, {} feasible points",
            report.samples, report.seed, report.feasible_points
        )?;
        for s in &report.suites {
            let status = match (&s.skipped, s.passed) {
                (Some(_), _) => "SKIP",
                (None, true) => "PASS",
                (None, false) => "FAIL",
            };
            let worst = match s.skipped {
                Some(_) => "-".to_string(),
                None => format!("{:.3e}", s.max_violation),
            };
            write!(
                out,
                "{status} {:<20} worst {worst:>12}  tol {:.0e}",
                s.name, s.tolerance
            )?;
            if let Some(why) = &s.skipped {
                write!(out, "  ({why})")?;
            }
            writeln!(out)?;
        }
        Ok(report.passed())
    };
    match run() {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_INVARIANT,
        Err(e) => fail(&e, err),
    }
}

/// `oam oracle <config>`: prints `P_S(a)` as a JSON array.
pub fn cmd_oracle(path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let run = || -> Result<Vector, Error> {
        let loaded = load(path)?;
        OracleProblem::from_problem(&loaded.problem, DEFAULT_ORACLE_TOL)?.solve()
    };
    match run() {
        Ok(p) => {
            let values: Vec<f64> = p.iter().copied().collect();
            match serde_json::to_string(&values) {
                Ok(s) if writeln!(out, "{s}").is_ok() => EXIT_OK,
                _ => EXIT_IO,
            }
        }
        Err(e) => fail(&e, err),
    }
}
