use std::path::PathBuf;
use std::process::ExitCode;

use balfuse_cli::{preset, run_subcommand, CliError, RunConfig, RunReport, Subcommand};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    /// Simulate, filter, smooth and write the invariant report.
    Run,
    /// Write trajectory.csv only.
    Simulate,
    /// Read trajectory.csv, write forward.csv and backward.csv.
    Filter,
    /// Read forward.csv and backward.csv, write smoothed.csv.
    Smooth,
    /// Full run plus the Monte Carlo and convergence suite; nonzero exit on any failure.
    Verify,
}

#[derive(Debug, Parser)]
#[command(name = "balfuse", version, about = "Two-filter smoothing of intermittently observed linear systems")]
struct Args {
    command: Command,
    /// JSON run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: paper-example or paper-example-coarse.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo replications for verify.
    #[arg(long)]
    replications: Option<usize>,
}

fn load(args: &Args) -> Result<RunConfig, CliError> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => preset("paper-example")?,
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn summarize(report: &RunReport) {
    for (name, c) in &report.checks {
        let tol = c.tolerance.map_or("-".to_string(), |t| format!("{t:.1e}"));
        let mark = if c.pass { "pass" } else { "FAIL" };
        println!("{mark}  {name:<36} {:>12.4e}  tol {tol}", c.residual);
    }
    for path in &report.files {
        println!("wrote {}", path.display());
    }
    for (stage, secs) in &report.timings {
        eprintln!("{stage:<20} {secs:>8.3} s");
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cmd = match args.command {
        Command::Run => Subcommand::Run,
        Command::Simulate => Subcommand::Simulate,
        Command::Filter => Subcommand::Filter,
        Command::Smooth => Subcommand::Smooth,
        Command::Verify => Subcommand::Verify,
    };
    let result = load(&args).and_then(|cfg| run_subcommand(cmd, &cfg));
    match result {
        Ok(report) => {
            summarize(&report);
            if matches!(cmd, Subcommand::Verify) && !report.all_pass() {
                eprintln!("failed: {}", report.failures().join(", "));
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
