//! `shortlab --config run.ini [--seed N] [--out-dir DIR] [--threads N|auto]`

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use shortlab::config::{parse_config, Threads};
use shortlab::run::run_exit_code;

#[derive(Parser, Debug)]
#[command(name = "shortlab", version, about = "Non-autonomous basins, potentials and boundary graphs in C^k")]
struct Args {
    /// INI run configuration
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides `[run] seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `[run] out_dir`
    #[arg(long)]
    out_dir: Option<String>,
    /// Overrides `[run] threads` (positive integer or "auto")
    #[arg(long)]
    threads: Option<String>,
    /// Print the fully resolved configuration and exit
    #[arg(long)]
    print_config: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(s) = args.seed {
        cfg.set_seed(s);
    }
    if let Some(d) = &args.out_dir {
        cfg.set_out_dir(d);
    }
    if let Some(t) = &args.threads {
        match Threads::parse(t) {
            Some(t) => cfg.set_threads(t),
            None => {
                eprintln!("error: --threads expects a positive integer or \"auto\"");
                return ExitCode::from(2);
            }
        }
    }
    if args.print_config {
        print!("{}", cfg.to_ini());
        return ExitCode::SUCCESS;
    }
    ExitCode::from(run_exit_code(&cfg) as u8)
}
