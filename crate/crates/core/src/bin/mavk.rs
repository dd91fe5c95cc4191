use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mavk::harness::config::parse_grid_size;
use mavk::harness::{run_experiment, Command, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "mavk", version, about = "Convex integration experiments for the 2D Monge-Ampere and von Karman systems")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// flat `key = value` configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory (overrides `out`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// seed for all randomness (overrides `seed`)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// node counts, e.g. 512x512 (overrides `grid.size`)
    #[arg(long, global = true, value_parser = grid_arg)]
    grid: Option<[usize; 2]>,
}

fn grid_arg(s: &str) -> Result<[usize; 2], String> {
    parse_grid_size(s).map_err(|e| e.to_string())
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Run the invariant suite
    Verify,
    /// Decompose random compactly supported fields
    Decompose,
    /// Apply one step and check its metric identity
    Step,
    /// Run one stage on the configured target
    Stage,
    /// Run the outer iteration
    Nk,
    /// Tabulate exponent thresholds and rate budgets
    Exponents,
    /// Sweep stage parameters and fit decay slopes
    Sweep,
    /// Subsolution from f, then the outer iteration, with residuals
    MaPipeline,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Command {
        match c {
            Cmd::Verify => Command::Verify,
            Cmd::Decompose => Command::Decompose,
            Cmd::Step => Command::Step,
            Cmd::Stage => Command::Stage,
            Cmd::Nk => Command::Nk,
            Cmd::Exponents => Command::Exponents,
            Cmd::Sweep => Command::Sweep,
            Cmd::MaPipeline => Command::MaPipeline,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ov = Overrides { out: cli.out, seed: cli.seed, grid: cli.grid };
    let result = ExperimentConfig::load(cli.config.as_deref(), &ov).and_then(|cfg| {
        let ledger = run_experiment(&cfg, cli.cmd.into())?;
        Ok((cfg, ledger))
    });
    match result {
        Ok((cfg, ledger)) => {
            let passed = ledger.checks.iter().filter(|c| c.pass).count();
            println!(
                "{}: {} artifacts in {}, {passed}/{} checks passed",
                ledger.command,
                ledger.artifacts.len(),
                cfg.out.display(),
                ledger.checks.len()
            );
            for c in ledger.checks.iter().filter(|c| !c.pass) {
                println!("FAIL {}: {:e} (bound {:e})", c.name, c.value, c.bound);
            }
            for f in &ledger.fits {
                println!("fit {}: slope {:.4} (R2 {:.4})", f.name, f.fit.slope, f.fit.r2);
            }
            if ledger.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("mavk: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
