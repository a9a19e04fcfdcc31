//! The `llb` command line: `run`, `rates`, `decay` and `check`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use super::config::{load_config, SchemeKind, SimulationConfig};
use super::output::{balance_csv, energy_csv, snapshot_file_name, vtk_snapshot};
use super::AppError;
use crate::harness::{
    decay_fit, default_dissipation_tol, dissipation_check, spatial_rate_study, temporal_rate_study, HarnessError,
    RateTable, TemporalMode,
};
use crate::mesh::Mesh;
use crate::model::check_boundary_compat;
use crate::schemes::{RunStatus, Simulation, SimulationResult};

/// Output directory used when neither the config nor `--out-dir` names one.
pub const DEFAULT_OUT_DIR: &str = "llb_output";

#[derive(Debug, Parser)]
#[command(
    name = "llb",
    version,
    about = "Finite-element solver for the Landau-Lifshitz-Bloch equation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write the energy trace, snapshots and resolved config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Exit with code 3 if a current-free nonlinear run loses energy dissipation.
        #[arg(long)]
        strict: bool,
    },
    /// Extrapolated convergence rates over successively refined meshes.
    Rates {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: RateMode,
        #[arg(long)]
        levels: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Fit the energy decay of a current-free run against the theoretical envelope.
    Decay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Validate a config and report boundary compatibility of the current.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RateMode {
    Spatial,
    TemporalL2,
    TemporalH1,
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
    move |source| AppError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), AppError> {
    std::fs::write(path, contents).map_err(io_error(path))
}

fn out_dir(config: &SimulationConfig, flag: Option<PathBuf>) -> Result<PathBuf, AppError> {
    let dir = flag
        .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    std::fs::create_dir_all(&dir).map_err(io_error(&dir))?;
    Ok(dir)
}

/// Writes `energy.csv`, `resolved_config.json`, the snapshots and, when
/// recorded, `balance.csv`.
pub fn write_run_outputs(result: &SimulationResult, dir: &Path) -> Result<(), AppError> {
    write_file(&dir.join("energy.csv"), &energy_csv(result.trace.rows()))?;
    write_file(
        &dir.join("resolved_config.json"),
        &(result.config.to_json_pretty() + "\n"),
    )?;
    for s in &result.snapshots {
        write_file(
            &dir.join(snapshot_file_name(s.time)),
            &vtk_snapshot(&result.mesh, &s.field),
        )?;
    }
    if !result.balance.is_empty() {
        write_file(&dir.join("balance.csv"), &balance_csv(&result.balance))?;
    }
    Ok(())
}

fn run_to_end(config: &SimulationConfig) -> Result<SimulationResult, AppError> {
    Ok(Simulation::new(config)?.run())
}

fn cmd_run(config: PathBuf, out: Option<PathBuf>, strict: bool, stdout: &mut dyn Write) -> Result<(), AppError> {
    let config = load_config(&config)?;
    let dir = out_dir(&config, out)?;
    let result = run_to_end(&config)?;
    write_run_outputs(&result, &dir)?;
    if let RunStatus::Aborted { .. } = result.status {
        let err = result.error.expect("aborted runs carry their error");
        return Err(AppError::Solver(err));
    }
    let last = result.trace.last().expect("trace has the initial row");
    let _ = writeln!(
        stdout,
        "completed {} steps to t = {:e}; energy {:e}; outputs in {}",
        last.step,
        last.time,
        last.energy.total,
        dir.display()
    );
    if config.scheme == SchemeKind::Nonlinear && config.current.is_zero() {
        let report = dissipation_check(&result.trace, default_dissipation_tol(&result.trace));
        if !report.passed() {
            log::warn!(
                "energy increased at {} step(s), first at step {} (largest increase {:e})",
                report.violations.len(),
                report.violations[0],
                report.max_increase
            );
            if strict {
                return Err(AppError::Dissipation {
                    count: report.violations.len(),
                    first: report.violations[0],
                });
            }
        }
    }
    Ok(())
}

fn cmd_rates(
    config: PathBuf,
    mode: RateMode,
    levels: usize,
    out: Option<PathBuf>,
    stdout: &mut dyn Write,
) -> Result<(), AppError> {
    let config = load_config(&config)?;
    let dir = out_dir(&config, out)?;
    let outcome = match mode {
        RateMode::Spatial => spatial_rate_study(&config, levels),
        RateMode::TemporalL2 => temporal_rate_study(&config, TemporalMode::L2Coupled, levels),
        RateMode::TemporalH1 => temporal_rate_study(&config, TemporalMode::H1Coupled, levels),
    };
    let write = |table: &RateTable| write_file(&dir.join("rates.csv"), &table.to_csv());
    match outcome {
        Ok(table) => {
            write(&table)?;
            let _ = write!(stdout, "{}", table.to_csv());
            if table.any_degenerate() {
                log::warn!("some errors are at rounding level; their rates are reported as inf");
            }
            Ok(())
        }
        Err(e) => {
            if let HarnessError::Run { partial, .. } = &e {
                write(partial)?;
            }
            Err(e.into())
        }
    }
}

fn cmd_decay(config: PathBuf, out: Option<PathBuf>, stdout: &mut dyn Write) -> Result<(), AppError> {
    let config = load_config(&config)?;
    if !config.current.is_zero() {
        return Err(AppError::Usage("the decay fit needs a run without current".into()));
    }
    let dir = out_dir(&config, out)?;
    let result = run_to_end(&config)?;
    write_run_outputs(&result, &dir)?;
    if let Some(err) = result.error {
        return Err(AppError::Solver(err));
    }
    let report = decay_fit(&result.trace, &config.params)?;
    let text = report.to_text();
    write_file(&dir.join("decay_report.txt"), &text)?;
    let _ = write!(stdout, "{text}");
    Ok(())
}

fn cmd_check(config: PathBuf, stdout: &mut dyn Write) -> Result<(), AppError> {
    let config = load_config(&config)?;
    let mesh =
        Mesh::build_structured(config.mesh_divisions, config.bounds).map_err(|e| AppError::Usage(e.to_string()))?;
    let report = check_boundary_compat(&config.current, &mesh, 0.0);
    if !report.compatible {
        eprintln!(
            "WARNING: current density violates nu·n=0 on boundary (max |nu·n| = {:e})",
            report.max_normal_flux
        );
    }
    let _ = writeln!(
        stdout,
        "config ok: {:?} scheme, {} divisions, k = {:e}, {} steps",
        config.scheme,
        config.mesh_divisions,
        config.time_step,
        config.num_steps()
    );
    Ok(())
}

pub fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<(), AppError> {
    match cli.command {
        Command::Run {
            config,
            out_dir,
            strict,
        } => cmd_run(config, out_dir, strict, stdout),
        Command::Rates {
            config,
            mode,
            levels,
            out_dir,
        } => cmd_rates(config, mode, levels, out_dir, stdout),
        Command::Decay { config, out_dir } => cmd_decay(config, out_dir, stdout),
        Command::Check { config } => cmd_check(config, stdout),
    }
}

/// Parses `args`, runs the command and returns the process exit code. Errors
/// go to stderr as `ERROR <code>: <message>`.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("ERROR 1: {first}");
            return 1;
        }
    };
    let mut stdout = std::io::stdout();
    match dispatch(cli, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("ERROR {code}: {e}");
            code
        }
    }
}
