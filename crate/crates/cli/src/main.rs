use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tranche_bounds::model::MARGINAL_TOL;
use tranche_bounds_cli::io::StrikeDoc;
use tranche_bounds_cli::{load_model, load_spec, run_job, CliError, Command, JobOptions, DEFAULT_PATHS};

/// Upper and lower price bounds for CDO tranche loss options.
#[derive(Debug, Parser)]
#[command(name = "tranche-bounds", version)]
struct Args {
    command: Command,

    /// Model document (portfolio, factor lattice, chains, discount curve).
    #[arg(long)]
    model: PathBuf,

    /// Job document (tranches, horizons, strikes, trigger).
    #[arg(long)]
    spec: PathBuf,

    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Generator seed; required by `mc`.
    #[arg(long)]
    seed: Option<u64>,

    /// Monte Carlo path count.
    #[arg(long, default_value_t = DEFAULT_PATHS)]
    paths: usize,

    /// Marginal tolerance for coupling fits and validation.
    #[arg(long, default_value_t = MARGINAL_TOL)]
    tol: f64,

    /// Single strike overriding the spec: a number or itm, atm, otm.
    #[arg(long)]
    strike: Option<StrikeDoc>,
}

fn run(args: &Args) -> Result<(), CliError> {
    if !(args.tol > 0.0 && args.tol < 1.0) {
        return Err(CliError::Validation(vec![format!("--tol must lie in (0, 1), got {}", args.tol)]));
    }
    if args.paths < 2 {
        return Err(CliError::Validation(vec!["--paths must be at least 2".into()]));
    }
    let model = load_model(&args.model, args.tol)?;
    let spec = load_spec(&args.spec)?;
    let opts = JobOptions {
        seed: args.seed,
        paths: args.paths,
        tol: args.tol,
        strike: args.strike,
    };
    let report = run_job(args.command, &model, &spec, &opts)?;
    let io_err = |path: String| move |source| CliError::Io { path, source };
    match &args.out {
        Some(path) => {
            let shown = path.display().to_string();
            let file = File::create(path).map_err(io_err(shown.clone()))?;
            let mut w = BufWriter::new(file);
            report.write_to(&mut w).map_err(io_err(shown.clone()))?;
            w.flush().map_err(io_err(shown))?;
        }
        None => {
            let stdout = std::io::stdout();
            report.write_to(&mut stdout.lock()).map_err(io_err("stdout".into()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
