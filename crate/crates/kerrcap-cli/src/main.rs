//! `kerrcap`: build coefficient tensors, evaluate capacity corrections,
//! sample optimal inputs and check the analytic model against simulation.
//!
//! Exit codes: 0 success, 1 invalid input, 2 tolerance failure, 3 I/O.

mod commands;
mod output;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kerrcap::coefficients::cache::CACHE_DIR_ENV;

#[derive(Parser, Debug)]
#[command(name = "kerrcap", version, about = "Nonlinear fiber channel capacity corrections")]
struct Cli {
    /// Directory holding cached coefficient tensors.
    #[arg(long, global = true, env = CACHE_DIR_ENV, default_value = "kerrcap-cache")]
    cache_dir: PathBuf,

    /// Log level: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,

    /// Run every loop on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build (or load) the coefficient tensors a1, b1, b2 and the contracted A2 sums.
    Coeffs(TensorArgs),
    /// Build J, J_Lambda and J_I and report J_Sigma.
    Jtensor(TensorArgs),
    /// J_Sigma and mutual information over a grid of dispersions.
    MiCurve(commands::MiCurveArgs),
    /// Optimal-input density curves.
    Pdf(commands::PdfArgs),
    /// Draw symbol sequences from the optimal input density.
    Sample(commands::SampleArgs),
    /// Monte-Carlo channel simulation against the analytic correlators.
    Simulate(commands::SimulateArgs),
    /// Run the invariant suite.
    Validate(validate::ValidateArgs),
}

#[derive(Args, Debug, Clone)]
struct TensorArgs {
    /// Symbols run over -M..=M.
    #[arg(long = "M", short = 'M')]
    m: usize,
    /// Dimensionless dispersion.
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    /// Pulse envelope: sinc, rect, gauss or gauss:<width>.
    #[arg(long, default_value = "sinc")]
    envelope: String,
    /// Which second-order entries to evaluate.
    #[arg(long, value_enum, default_value_t = CoverageArg::Full)]
    coverage: CoverageArg,
    /// Where to write the summary JSON (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum CoverageArg {
    Full,
    Crossed,
}

impl From<CoverageArg> for kerrcap::coefficients::Coverage {
    fn from(c: CoverageArg) -> Self {
        match c {
            CoverageArg::Full => kerrcap::coefficients::Coverage::Full,
            CoverageArg::Crossed => kerrcap::coefficients::Coverage::CrossedDiagonal,
        }
    }
}

/// Shared settings passed to every command.
pub struct Context {
    pub cache_dir: PathBuf,
    pub policy: kerrcap::ExecPolicy,
}

/// A check that ran but missed its tolerance.
#[derive(Debug)]
pub struct ToleranceFailure(pub String);

impl std::fmt::Display for ToleranceFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "tolerance failure: {}", self.0)
    }
}

impl std::error::Error for ToleranceFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ToleranceFailure>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<kerrcap::Error>() {
            return match e {
                kerrcap::Error::InvalidArgument(_) => 1,
                kerrcap::Error::QuadratureTolerance { .. } | kerrcap::Error::Unstable(_) => 2,
                kerrcap::Error::CacheMismatch(_)
                | kerrcap::Error::Io(_)
                | kerrcap::Error::Csv(_)
                | kerrcap::Error::Json(_) => 3,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() || cause.is::<serde_json::Error>() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level).init();
    let ctx = Context {
        cache_dir: cli.cache_dir,
        policy: if cli.sequential {
            kerrcap::ExecPolicy::Sequential
        } else {
            kerrcap::ExecPolicy::Parallel
        },
    };
    let result = match cli.command {
        Command::Coeffs(a) => commands::coeffs(&ctx, &a),
        Command::Jtensor(a) => commands::jtensor(&ctx, &a),
        Command::MiCurve(a) => commands::mi_curve(&ctx, &a),
        Command::Pdf(a) => commands::pdf(&ctx, &a),
        Command::Sample(a) => commands::sample(&ctx, &a),
        Command::Simulate(a) => commands::simulate(&ctx, &a),
        Command::Validate(a) => validate::run(&ctx, &a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
