//! `halfline`: bound states, Darboux transformations and reverse
//! Lieb-Thirring checks for half-line matrix Schrodinger operators.
//!
//! Exit codes: 0 when every check passes, 2 when a check fails, 1 on input
//! errors.

mod commands;
mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use halfline::io::Envelope;
use halfline::Error;

use commands::Report;
use config::{RawConfig, RunConfig};

const THREADS_ENV: &str = "HALFLINE_SPECTRAL_THREADS";

#[derive(Parser)]
#[command(name = "halfline", version, about = "Half-line matrix Schrodinger operators: bound states, Darboux transformations, Lieb-Thirring checks")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Potential file or preset name.
    #[arg(long, global = true, value_name = "FILE|PRESET")]
    potential: Option<String>,
    /// Boundary file or preset name; defaults to the preset's own.
    #[arg(long, global = true, value_name = "FILE|PRESET")]
    boundary: Option<String>,
    /// Grid spacing.
    #[arg(long, global = true)]
    h: Option<f64>,
    /// Support length of analytic potentials.
    #[arg(long = "xmax", global = true)]
    x_max: Option<f64>,
    /// Upper end of the kappa scan.
    #[arg(long, global = true)]
    kappa_max: Option<f64>,
    /// Relative singular-value level counted as kernel.
    #[arg(long, global = true)]
    tol_rank: Option<f64>,
    /// Print the versioned JSON report instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Directory for report.json and auxiliary files.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for random instances.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Bound states with their normalization matrices.
    Spectrum,
    /// Remove one bound state and verify the transformation identities.
    Remove {
        /// Position in the spectrum, deepest state first.
        #[arg(long)]
        index: usize,
    },
    /// Add a bound state with C = c on the first `rank` channels.
    Add {
        #[arg(long)]
        kappa: f64,
        #[arg(long, default_value_t = 1)]
        rank: usize,
        #[arg(long)]
        c: f64,
    },
    /// Evaluate the reverse Lieb-Thirring inequality.
    LtCheck {
        /// Run on this many seeded random instances instead.
        #[arg(long)]
        random: Option<usize>,
    },
    /// Ratio table showing that the constant 1/4 is approached.
    Sharpness {
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long, default_value_t = 1)]
        rank: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.2, 0.1, 0.05, 0.02])]
        c_list: Vec<f64>,
    },
    /// Finite-difference negative spectrum.
    Oracle {
        /// Compare with the Jost-matrix spectrum.
        #[arg(long)]
        compare: bool,
        /// Truncation length; chosen from the spectrum when omitted.
        #[arg(long)]
        length: Option<f64>,
        #[arg(long, default_value_t = 0.005)]
        fd_h: f64,
    },
    /// No-bound-state criterion for Dirichlet problems with coupling beta.
    DirichletCheck {
        #[arg(long, value_delimiter = ',', required = true)]
        beta_list: Vec<f64>,
        #[arg(long, default_value_t = 20.0)]
        length: f64,
        #[arg(long, default_value_t = 0.005)]
        fd_h: f64,
    },
    /// List the built-in presets; with --out, write them as JSON files.
    Presets,
}

fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Input(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::InvalidBoundary(_)
            | Error::NotHermitian { .. }
            | Error::DimensionMismatch { .. }
            | Error::InvalidArgument(_)
            | Error::SingularA
            | Error::Precondition(_)
    )
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Input(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Input(format!("cannot configure threads: {e}")))
}

fn run(cli: Cli) -> Result<Report, Error> {
    configure_threads()?;
    let g = cli.global;
    let cfg = RunConfig::resolve(RawConfig {
        potential: g.potential,
        boundary: g.boundary,
        h: g.h,
        x_max: g.x_max,
        kappa_max: g.kappa_max,
        tol_rank: g.tol_rank,
        out: g.out,
        seed: g.seed,
    })?;
    let report = match cli.command {
        Command::Spectrum => commands::spectrum(&cfg),
        Command::Remove { index } => commands::remove(&cfg, index),
        Command::Add { kappa, rank, c } => commands::add(&cfg, kappa, rank, c),
        Command::LtCheck { random } => commands::lt_check(&cfg, random),
        Command::Sharpness { kappa, rank, c_list } => commands::sharpness(&cfg, kappa, rank, &c_list),
        Command::Oracle { compare, length, fd_h } => commands::oracle(&cfg, compare, length, fd_h),
        Command::DirichletCheck { beta_list, length, fd_h } => {
            commands::dirichlet_check(&cfg, &beta_list, length, fd_h)
        }
        Command::Presets => commands::presets(),
    }?;
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir)?;
        let json = Envelope::new(report.command, report.passed, &report.data).to_json()?;
        fs::write(dir.join("report.json"), json + "\n")?;
        for (name, contents) in &report.files {
            fs::write(dir.join(name), contents)?;
        }
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.global.json;
    match run(cli) {
        Ok(report) => {
            if json {
                match Envelope::new(report.command, report.passed, &report.data).to_json() {
                    Ok(s) => println!("{s}"),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(1);
                    }
                }
            } else {
                print!("{}", report.text);
            }
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_input_error(&e) { 1 } else { 2 })
        }
    }
}
