use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cracklab::config::ExperimentConfig;
use cracklab::experiment::{Command, Experiment};

/// Numerical laboratory for elliptic problems on cracked balls.
#[derive(Parser)]
#[command(name = "cracklab", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed of probe-field sampling; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Ladder, eigenbasis and optional numeric slit-sphere spectrum.
    Spectrum,
    /// Solve and write the mesh and nodal field.
    Solve,
    /// Frequency trace, order fit and doubling audit.
    Frequency,
    /// Blow-up coefficients at the snapped rung.
    Blowup,
    /// Smoothed approximating domains (dimension 2).
    Approx,
    /// Hypotheses, straightening invariants, Pohozaev and doubling audits.
    Audit,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Spectrum => Command::Spectrum,
            Cmd::Solve => Command::Solve,
            Cmd::Frequency => Command::Frequency,
            Cmd::Blowup => Command::Blowup,
            Cmd::Approx => Command::Approx,
            Cmd::Audit => Command::Audit,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("audit failed; see the report in the output directory");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> cracklab::Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| cracklab::Error::Config(format!("cannot start {n} threads: {e}")))?;
    }
    let path = cli.config.ok_or_else(|| cracklab::Error::Config("--config <path> is required".into()))?;
    let mut config = ExperimentConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli.out.unwrap_or_else(|| config.output_dir.clone());
    let seed = config.seed;
    let experiment = Experiment::new(config)?;
    experiment.run(cli.command.into(), &out, seed)
}
