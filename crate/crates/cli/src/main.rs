use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fofr_core::modelsel::{DEFAULT_FOLDS, DEFAULT_FVE};
use fofr_core::{ErrorKind, FofrError, Method};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "fofr", version, about = "Function-on-function regression via functional PLS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// `--p` value: a fixed component count or cross-validated selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Components {
    Fixed(usize),
    Auto,
}

impl std::fmt::Display for Components {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Components::Fixed(p) => write!(f, "{p}"),
            Components::Auto => f.write_str("auto"),
        }
    }
}

fn parse_components(s: &str) -> Result<Components, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Components::Auto);
    }
    match s.parse::<usize>() {
        Ok(0) => Err("p must be at least 1".into()),
        Ok(p) => Ok(Components::Fixed(p)),
        Err(_) => Err(format!("expected a positive integer or 'auto', got '{s}'")),
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: FofrError| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PlotData {
    Beta,
    Cv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model from predictor and response curve CSVs.
    Fit {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        /// fapls, fapls-explicit or fpcr
        #[arg(long, default_value = "fapls", value_parser = parse_method)]
        method: Method,
        /// Number of components, or `auto` for cross-validation.
        #[arg(long, default_value = "auto", value_parser = parse_components)]
        p: Components,
        #[arg(long, default_value_t = DEFAULT_FVE)]
        fve: f64,
        #[arg(long, default_value_t = DEFAULT_FOLDS)]
        folds: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        model: PathBuf,
    },
    /// Predict response curves for new predictor curves.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the simulation benchmark for one scenario configuration.
    Simulate {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        scenario: u8,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        sigma2: f64,
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long, default_value_t = 101)]
        grid: usize,
        #[arg(long, default_value_t = 50)]
        replicates: usize,
        #[arg(long, value_delimiter = ',', default_value = "fapls,fpcr", value_parser = parse_method)]
        methods: Vec<Method>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Report CSV path; `<stem>.txt` and `<stem>_raw.csv` are written next to it.
        #[arg(long)]
        out: PathBuf,
        /// Fill the seconds column with wall-clock time.
        #[arg(long)]
        timing: bool,
    },
    /// Export a fitted surface or CV curve as long-format CSV.
    ExportPlotdata {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        what: PlotData,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &FofrError) -> u8 {
    match err.kind() {
        ErrorKind::Parse => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Shape => 4,
        ErrorKind::Other => 1,
    }
}

fn configure_threads() -> Result<(), FofrError> {
    let Ok(raw) = std::env::var("FOFR_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| FofrError::Config(format!("FOFR_THREADS must be a count, got '{raw}'")))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| FofrError::Config(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), FofrError> {
    configure_threads()?;
    match cli.command {
        Command::Fit {
            x,
            y,
            method,
            p,
            fve,
            folds,
            seed,
            model,
        } => commands::fit(&commands::FitConfig {
            command: "fit",
            x,
            y,
            method,
            p,
            fve,
            folds,
            seed,
            model,
        }),
        Command::Predict { model, x, out } => commands::predict(&model, &x, &out),
        Command::Simulate {
            scenario,
            rho,
            sigma2,
            n,
            grid,
            replicates,
            methods,
            seed,
            out,
            timing,
        } => commands::simulate(&commands::SimulateConfig {
            scenario,
            rho,
            sigma2,
            n,
            grid,
            replicates,
            methods,
            seed,
            out,
            timing,
        }),
        Command::ExportPlotdata { model, what, out } => commands::export_plotdata(&model, what, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
