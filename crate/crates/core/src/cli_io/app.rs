use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::config::{parse_config, RunConfig};
use super::output::{write_energy_csv, write_field_vtk, write_rate_csv};
use super::selftest::run_selftest;
use crate::convergence::{spatial_study, temporal_study_detailed, RateRow, StudyConfig, StudyMode};
use crate::diagnostics::{energy, Monitor};
use crate::stepper::{validate_params, ParamWarning, State, Stepper};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_WARNINGS: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser, Debug)]
#[command(name = "chcross", version, about = "Stabilized mixed finite elements for a cross-diffusion Cahn-Hilliard system")]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Write a VTK snapshot every K steps (overrides `snapshot_every`).
    #[arg(long, global = true, value_name = "K")]
    snapshot_every: Option<usize>,
    /// Treat parameter warnings as errors (exit 1).
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Single simulation with energy CSV and optional VTK snapshots.
    Run,
    /// Time-step refinement study.
    TemporalStudy,
    /// Mesh refinement study.
    SpatialStudy,
    /// Long run with mobility 0.01 from noisy data, snapshots at t = 0, 0.4, 0.8, 1.
    Morphology,
    /// Quick invariant checks.
    Selftest,
}

/// Runs the command line and returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Ok(n) = std::env::var("CHCROSS_THREADS") {
        match n.trim().parse::<usize>() {
            Ok(n) => crate::linalg::set_thread_count(n),
            Err(_) => {
                eprintln!("error: CHCROSS_THREADS must be a non-negative integer, got `{n}`");
                return EXIT_USAGE;
            }
        }
    } else {
        crate::linalg::set_thread_count(1);
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn load_config(cli: &Cli, base: RunConfig) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            base.merge(&text)?
        }
        None => base,
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(k) = cli.snapshot_every {
        cfg.snapshot_every = k;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match cli.command {
        Command::Run => simulate(&load_config(cli, parse_config("")?)?, cli.strict),
        Command::Morphology => simulate(&load_config(cli, RunConfig::morphology_preset())?, cli.strict),
        Command::TemporalStudy => study(&load_config(cli, parse_config("")?)?, StudyMode::Temporal, cli.strict),
        Command::SpatialStudy => study(&load_config(cli, parse_config("")?)?, StudyMode::Spatial, cli.strict),
        Command::Selftest => {
            let checks = run_selftest();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if checks.iter().all(|c| c.passed) { EXIT_OK } else { EXIT_FAILURE })
        }
    }
}

/// Prints warnings; true when `strict` turns them into a failure.
fn escalate(warnings: &[ParamWarning], strict: bool) -> bool {
    for w in warnings {
        eprintln!("warning: {w}");
    }
    if strict && !warnings.is_empty() {
        eprintln!("error: {} warning(s) escalated by --strict", warnings.len());
        return true;
    }
    false
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn simulate(cfg: &RunConfig, strict: bool) -> Result<i32> {
    let params = cfg.scheme_params()?;
    let check = validate_params(&params)?;
    if escalate(&check.warnings, strict) {
        return Ok(EXIT_WARNINGS);
    }
    let n = params.step_count()?;
    let dir = cfg.output_dir.clone();
    create_dir(&dir)?;

    let (phi, c) = cfg.initial_fields(&params.mesh)?;
    let mut stepper = Stepper::new(params.clone())?;
    let initial = stepper.initial_state(phi, c)?;
    let e0 = energy(&initial, &params)?;
    let every = cfg.snapshot_every;
    let snapshot = |s: &State| -> Result<()> {
        if every > 0 && (s.step_index % every == 0 || s.step_index == n) {
            write_field_vtk(s, &dir.join(format!("state_{:06}.vtk", s.step_index)))?;
        }
        Ok(())
    };
    snapshot(&initial)?;
    let mut monitor = Monitor::new(params.clone());
    let report_every = (n / 10).max(1);
    let final_state = stepper.run(initial, |prev, next| {
        let rec = monitor.observe(prev, next)?;
        if next.step_index % report_every == 0 {
            eprintln!("step {}/{n}  t = {:.4}  E = {:.6e}", next.step_index, next.t, rec.energy);
        }
        snapshot(next)
    })?;
    write_energy_csv(&monitor.records, &dir.join("energy.csv"))?;
    let worst = monitor.residuals().into_iter().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "{n} steps to t = {}: E {e0:.6e} -> {:.6e}, max energy residual {worst:.3e}; output in {}",
        final_state.t,
        monitor.records.last().map_or(e0, |r| r.energy),
        dir.display()
    );
    Ok(EXIT_OK)
}

fn study_warnings(sc: &StudyConfig) -> Result<Vec<ParamWarning>> {
    let runs: Vec<(usize, f64)> = match sc.mode {
        StudyMode::Temporal => std::iter::once(sc.reference_tau)
            .chain(sc.taus.iter().copied())
            .map(|t| (sc.reference_cells, t))
            .collect(),
        StudyMode::Spatial => std::iter::once(sc.reference_cells)
            .chain(sc.cells.iter().copied())
            .map(|n| (n, sc.reference_tau))
            .collect(),
    };
    let r = sc.domain;
    let mut out: Vec<ParamWarning> = Vec::new();
    for (cells, tau) in runs {
        let mesh = crate::mesh::Mesh::rectangle(r.x0, r.x1, r.y0, r.y1, cells, cells)?;
        for w in validate_params(&sc.params(mesh, tau))?.warnings {
            if !out.contains(&w) {
                out.push(w);
            }
        }
    }
    Ok(out)
}

fn format_table(rows: &[RateRow]) -> String {
    let rate = |r: Option<f64>| r.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>12} {:>12} {:>6} {:>12} {:>6} {:>12} {:>6}",
        "resolution", "err_phi", "rate", "err_c", "rate", "err_mu", "rate"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>12.4e} {:>12.4e} {:>6} {:>12.4e} {:>6} {:>12.4e} {:>6}",
            r.resolution,
            r.err_phi_h1,
            rate(r.rate_phi),
            r.err_c,
            rate(r.rate_c),
            r.err_mu_h1,
            rate(r.rate_mu)
        );
    }
    s
}

fn study(cfg: &RunConfig, mode: StudyMode, strict: bool) -> Result<i32> {
    let sc = cfg.study_config(mode)?;
    if escalate(&study_warnings(&sc)?, strict) {
        return Ok(EXIT_WARNINGS);
    }
    let dir = cfg.output_dir.clone();
    create_dir(&dir)?;
    let rows = match mode {
        StudyMode::Temporal => {
            let st = temporal_study_detailed(&sc)?;
            let mut csv = String::from("tau,grad_mu_err_L43_L65\n");
            for (tau, m) in &st.mu_monitor {
                let _ = writeln!(csv, "{tau:?},{m:?}");
            }
            let path = dir.join("mu_monitor.csv");
            fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
            write_rate_csv(&st.rows, &dir.join("temporal_rates.csv"))?;
            st.rows
        }
        StudyMode::Spatial => {
            let rows = spatial_study(&sc)?;
            write_rate_csv(&rows, &dir.join("spatial_rates.csv"))?;
            rows
        }
    };
    print!("{}", format_table(&rows));
    Ok(EXIT_OK)
}
