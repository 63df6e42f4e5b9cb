use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pdm::harness::{run_experiment, ExperimentConfig, ExperimentKind, RunOptions};

#[derive(Parser)]
#[command(name = "pdm", version, about = "Convergence experiments for path-dependent SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Exit with status 4 when a configured threshold fails.
    #[arg(long)]
    check: bool,
    /// Worker threads; overrides the config.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Strong L^p sup-norm error against a fine reference.
    StrongRate(RunArgs),
    /// Strong error of the scheme and its Malliavin derivative.
    DerivativeRate(RunArgs),
    /// IBP density of the terminal value against a reference density.
    IbpCheck(RunArgs),
    /// Density convergence over the 4^n step ladder.
    DensityRate(RunArgs),
    /// Localized density differences in the Hölder norm.
    HolderNorm(RunArgs),
    /// Ellipticity and Malliavin covariance nondegeneracy.
    EllipticityCheck(RunArgs),
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::StrongRate(a) => (ExperimentKind::StrongRate, a),
            Command::DerivativeRate(a) => (ExperimentKind::DerivativeRate, a),
            Command::IbpCheck(a) => (ExperimentKind::IbpCheck, a),
            Command::DensityRate(a) => (ExperimentKind::DensityRate, a),
            Command::HolderNorm(a) => (ExperimentKind::HolderNorm, a),
            Command::EllipticityCheck(a) => (ExperimentKind::EllipticityCheck, a),
        }
    }
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<bool, pdm::Error> {
    let config = ExperimentConfig::load(&args.config)?;
    if config.experiment != kind {
        return Err(pdm::Error::Config(format!(
            "{} names experiment \"{}\", not \"{kind}\"",
            args.config.display(),
            config.experiment
        )));
    }
    let options = RunOptions {
        workers: args.workers,
        output_dir: args.out,
    };
    let bundle = run_experiment(&config, &options)?;
    let dir = options.output_dir(&config);
    bundle.write(&dir)?;
    let s = &bundle.summary;
    println!(
        "{} {} config {} seed {} workers {} in {:.2}s",
        s.experiment, s.version, s.config_hash, s.seed, s.workers, s.wall_clock_seconds
    );
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
    if s.exact {
        println!("exact: every error is at or below 1e-10");
    }
    for c in &s.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("{tag} {} = {} (want {})", c.name, c.value, c.threshold);
    }
    println!("wrote {}", dir.display());
    Ok(s.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    let check = args.check;
    match run(kind, args) {
        Ok(passed) if check && !passed => ExitCode::from(4),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
