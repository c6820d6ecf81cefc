use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use wulffgraph_cli::{config, execute};

/// Run one anisotropic-minimal-graph experiment described by a TOML file.
#[derive(Parser, Debug)]
#[command(name = "wulffgraph", version)]
struct Args {
    /// Configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Only report failures.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = if args.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let mut cfg = match config::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("config error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    }

    match execute(&cfg, Some(&args.config), &args.out) {
        Ok(run) => {
            let failures = &run.outcome.failures;
            for f in failures {
                eprintln!("FAILED {f}");
            }
            if !args.quiet {
                println!(
                    "{}: {} in {:.1}s; artifacts in {}",
                    cfg.command.name(),
                    if failures.is_empty() { "all checks passed" } else { "checks failed" },
                    run.wall_time,
                    args.out.display()
                );
            }
            if failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("FAILED {e}");
            ExitCode::from(1)
        }
    }
}
