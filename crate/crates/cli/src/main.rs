use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use degenlab::holder::HolderOptions;
use degenlab_cli::commands::{compare, kummer_eval, norms, probe_command, run, solve_command};
use degenlab_cli::config::PROBE_NAMES;
use degenlab_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "degenlab",
    about = "Numerical laboratory for boundary-degenerate elliptic operators"
)]
struct Cli {
    /// Worker thread cap (falls back to DEGENLAB_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every problem, run every probe, write artifacts and a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Kummer-mode solve of a constant-coefficient problem.
    SolveSpectral {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        problem: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Finite-difference solve.
    SolveFdm {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        problem: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Dump the linear system as `row col value` lines.
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
    /// Run the config's probes of one kind.
    Probe {
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PROBE_NAMES))]
        name: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sup, L2 and per-layer differences of two solution CSVs on one grid.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print M, U and their Wronskian.
    KummerEval {
        #[arg(allow_hyphen_values = true)]
        a_re: f64,
        #[arg(allow_hyphen_values = true)]
        a_im: f64,
        b: f64,
        y: f64,
    },
    /// Weighted Hölder norm of a solution CSV.
    Norms {
        field: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        k: usize,
        /// Use the C^{k,2+alpha} norm.
        #[arg(long)]
        two_plus: bool,
        #[arg(long, default_value_t = 4096)]
        cap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn version() -> String {
    let profile = if cfg!(debug_assertions) {
        "debug"
    } else {
        "release"
    };
    format!(
        "{} ({profile}, {}-{})",
        env!("CARGO_PKG_VERSION"),
        std::env::consts::ARCH,
        std::env::consts::OS
    )
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, format!("{text}\n")).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn pretty<T: serde::Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Core(e.into()))
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, out_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let summary = run(&cfg, out_dir.as_deref())?;
            let failed = summary.probes.iter().filter(|p| p["pass"] != true).count();
            eprintln!(
                "{} problem(s) solved, {} probe(s), {failed} failed",
                summary.problems.len(),
                summary.probes.len()
            );
            if failed > 0 {
                return Err(CliError::ProbesFailed(failed));
            }
        }
        Command::SolveSpectral {
            config,
            problem,
            out,
            report,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            solve_command(
                &cfg,
                problem.as_deref(),
                "spectral",
                &out,
                report.as_deref(),
                None,
            )?;
        }
        Command::SolveFdm {
            config,
            problem,
            out,
            report,
            matrix,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            solve_command(
                &cfg,
                problem.as_deref(),
                "fdm",
                &out,
                report.as_deref(),
                matrix.as_deref(),
            )?;
        }
        Command::Probe { name, config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            probe_command(&cfg, &name, &out)?;
        }
        Command::Compare { a, b, out } => emit(out.as_ref(), &pretty(&compare(&a, &b)?)?)?,
        Command::KummerEval { a_re, a_im, b, y } => {
            println!("{}", pretty(&kummer_eval(a_re, a_im, b, y)?)?)
        }
        Command::Norms {
            field,
            alpha,
            k,
            two_plus,
            cap,
            seed,
            out,
        } => {
            let opts = HolderOptions {
                alpha,
                k,
                cap,
                seed,
            };
            let report = norms(&field, &opts, two_plus)?;
            emit(out.as_ref(), &report.to_json().map_err(CliError::Core)?)?;
        }
    }
    Ok(())
}

fn thread_cap(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("DEGENLAB_THREADS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            CliError::Config(format!("DEGENLAB_THREADS = {v:?} is not a thread count"))
        }),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().version(version()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = thread_cap(cli.threads).and_then(|threads| {
        if let Some(n) = threads.filter(|&n| n > 0) {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        execute(cli.command)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
