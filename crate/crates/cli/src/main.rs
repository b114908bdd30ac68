use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use bergmc_cli::runner::{run, Command, RunOptions};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    Oracle,
    Kernel,
    Matelem,
    Extrap,
    Kato,
    Validate,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Oracle => Command::Oracle,
            Sub::Kernel => Command::Kernel,
            Sub::Matelem => Command::Matelem,
            Sub::Extrap => Command::Extrap,
            Sub::Kato => Command::Kato,
            Sub::Validate => Command::Validate,
        }
    }
}

/// Berezin-Toeplitz semigroup kernels from Brownian path integrals.
///
/// Exit status: 0 on success, 1 when validation fails, 2 on config errors.
#[derive(Debug, Parser)]
#[command(name = "bergmc", version)]
struct Cli {
    #[arg(value_enum)]
    subcommand: Sub,
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Draw the master seed from the clock instead of the config.
    #[arg(long)]
    fresh_seed: bool,
}

fn set_workers(n: usize) -> Result<(), String> {
    if n == 0 {
        return Err("--workers must be at least 1".into());
    }
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        eprintln!("warning: built without the parallel feature, --workers {n} is ignored");
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = set_workers(n) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let cmd = Command::from(cli.subcommand);
    match run(cmd, &cli.config, RunOptions { fresh_seed: cli.fresh_seed }) {
        Ok(out) => {
            for m in &out.messages {
                println!("{m}");
            }
            for a in &out.artifacts {
                println!("wrote {}", a.display());
            }
            if cli.fresh_seed {
                println!("seed {:#x}", out.seed);
            }
            ExitCode::from(out.exit)
        }
        Err(e) => {
            eprintln!("bergmc {}: {e}", cmd.name());
            ExitCode::from(e.exit_code())
        }
    }
}
