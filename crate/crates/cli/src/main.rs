//! Command line front end.
//!
//! Exit status: 0 success, 2 configuration error, 3 invariant failure,
//! 4 numerical failure (non-finite values), 5 comparison failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use selfprop_core::config::{load_config, OracleKind, RunConfig};
use selfprop_core::experiment::{
    cmd_compare_oracle, cmd_extract, cmd_run, cmd_sweep_alpha, cmd_sweep_epsilon, initial_phase,
    ExperimentError, SweepReport,
};
use selfprop_core::output::read_vtk_field;

#[derive(Parser, Debug)]
#[command(
    name = "selfprop",
    version,
    about = "Phase-field runs of a self-propelled deformable object"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (defaults to output.directory, then ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override a config entry, e.g. `model.alpha=1000`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Oracle {
    Mcf,
    Forced,
    Coupled,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one simulation and write series.csv.
    Run,
    /// Sweep epsilon (grid refined with it) against the configured oracle.
    SweepEps {
        /// Comma-separated values; defaults to sweep.epsilon.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Sweep the nonlocal weight alpha.
    SweepAlpha {
        /// Comma-separated values; defaults to sweep.alpha.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Compare the extracted radius with a sharp-interface oracle.
    CompareOracle {
        /// Defaults to compare.oracle.
        #[arg(long, value_enum)]
        oracle: Option<Oracle>,
    },
    /// Extract the interface of a VTK snapshot (or of the initial state).
    Extract {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "phi")]
        field: String,
        #[arg(long, default_value_t = 0.5)]
        level: f64,
    },
}

fn load(cli: &Cli) -> Result<RunConfig, ExperimentError> {
    let Some(path) = &cli.config else {
        return Err(ExperimentError::Setup("--config is required".into()));
    };
    Ok(load_config(path, &cli.overrides)?)
}

fn out_dir(cli: &Cli, cfg: Option<&RunConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| {
            cfg.and_then(|c| c.output.directory.clone())
                .map(PathBuf::from)
        })
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn print_sweep(report: &SweepReport, file: &Path) {
    for v in &report.verdicts {
        println!(
            "{}: {} ({})",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        );
    }
    println!("report written to {}", file.display());
}

fn sweep_verdict(report: &SweepReport) -> Result<(), ExperimentError> {
    if report.pass() {
        Ok(())
    } else {
        Err(ExperimentError::Comparison("sweep verdicts failed".into()))
    }
}

fn execute(cli: &Cli) -> Result<(), ExperimentError> {
    match &cli.command {
        Command::Run => {
            let cfg = load(cli)?;
            let out = out_dir(cli, Some(&cfg));
            let rec = cmd_run(&cfg, &out)?;
            println!(
                "{} steps of dt = {:e}, {} rows written to {}",
                rec.steps,
                rec.dt,
                rec.rows.len(),
                out.join("series.csv").display()
            );
            Ok(())
        }
        Command::SweepEps { values } => {
            let cfg = load(cli)?;
            let out = out_dir(cli, Some(&cfg));
            let list = if values.is_empty() {
                cfg.sweep.epsilon.clone()
            } else {
                values.clone()
            };
            let report = cmd_sweep_epsilon(&cfg, &list, &out)?;
            print_sweep(&report, &out.join("sweep_epsilon.csv"));
            sweep_verdict(&report)
        }
        Command::SweepAlpha { values } => {
            let cfg = load(cli)?;
            let out = out_dir(cli, Some(&cfg));
            let list = if values.is_empty() {
                cfg.sweep.alpha.clone()
            } else {
                values.clone()
            };
            let report = cmd_sweep_alpha(&cfg, &list, &out)?;
            print_sweep(&report, &out.join("sweep_alpha.csv"));
            sweep_verdict(&report)
        }
        Command::CompareOracle { oracle } => {
            let mut cfg = load(cli)?;
            if let Some(o) = oracle {
                cfg.compare.oracle = match o {
                    Oracle::Mcf => OracleKind::Mcf,
                    Oracle::Forced => OracleKind::Forced,
                    Oracle::Coupled => OracleKind::Coupled,
                };
            }
            let out = out_dir(cli, Some(&cfg));
            let rep = cmd_compare_oracle(&cfg, Some(&out))?;
            println!(
                "max deviation {:e}, terminal deviation {:e}, tolerance {:e}",
                rep.max_deviation, rep.terminal_deviation, rep.tolerance
            );
            if let Some(t) = rep.window_violation {
                return Err(ExperimentError::Comparison(format!(
                    "radius left the comparison window at t = {t}"
                )));
            }
            if !rep.pass {
                return Err(ExperimentError::Comparison(format!(
                    "max deviation {} exceeds tolerance {}",
                    rep.max_deviation, rep.tolerance
                )));
            }
            Ok(())
        }
        Command::Extract {
            input,
            field,
            level,
        } => {
            let (phi, cfg) = match input {
                Some(path) => {
                    let text =
                        std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
                            path: path.display().to_string(),
                            source,
                        })?;
                    (read_vtk_field(&text, field)?, None)
                }
                None => {
                    let cfg = load(cli)?;
                    (initial_phase(&cfg)?, Some(cfg))
                }
            };
            let out = out_dir(cli, cfg.as_ref());
            let s = cmd_extract(&phi, *level, &out)?;
            println!(
                "{} loop(s), {} vertices, area {}, perimeter {}, radius {}",
                s.loops, s.vertices, s.area, s.perimeter, s.radius
            );
            Ok(())
        }
    }
}

fn configure_threads(threads: Option<usize>) -> Result<(), ExperimentError> {
    let Some(n) = threads else {
        return Ok(());
    };
    if n == 0 {
        return Err(ExperimentError::Setup(
            "--threads must be at least 1".into(),
        ));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ExperimentError::Setup(format!("cannot build thread pool: {e}")))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads(cli.threads).and_then(|()| execute(&cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
