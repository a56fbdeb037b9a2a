//! Experiment driver. Flags only select the subcommand, the config file and
//! the output directory; everything else lives in the config so that a run
//! is pinned by one JSON document.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for numerical
//! errors, 1 for anything else (I/O, usage of this wrapper itself).

use std::path::PathBuf;
use std::process::ExitCode;

use ggcond::config::ExperimentConfig;
use ggcond::error::Error;
use ggcond::runner::{self, Subcommand};

const USAGE: &str = "\
usage: ggcond <greedy|condition|rates|oracle> --config <path> [--outdir <path>]

Runs the experiment described by the JSON config. Outputs land in
<outdir>/<subcommand>-<run-id>/ where the run id hashes the config.
Environment: GG_THREADS caps internal parallelism.
";

struct Args {
    cmd: Subcommand,
    config_path: PathBuf,
    outdir: Option<PathBuf>,
}

fn parse_args() -> Result<Args, Error> {
    let mut it = std::env::args().skip(1);
    let cmd_name = it.next().ok_or_else(|| Error::Config(USAGE.to_string()))?;
    if cmd_name == "--help" || cmd_name == "-h" || cmd_name == "help" {
        return Err(Error::Config(USAGE.to_string()));
    }
    let cmd = Subcommand::parse(&cmd_name)?;
    let mut config_path = None;
    let mut outdir = None;
    while let Some(flag) = it.next() {
        match flag.as_str() {
            "--config" => {
                config_path = Some(PathBuf::from(it.next().ok_or_else(|| {
                    Error::Config("--config needs a path".to_string())
                })?));
            }
            "--outdir" => {
                outdir = Some(PathBuf::from(it.next().ok_or_else(|| {
                    Error::Config("--outdir needs a path".to_string())
                })?));
            }
            other => {
                return Err(Error::Config(format!("unknown flag '{other}'\n{USAGE}")));
            }
        }
    }
    let config_path = config_path
        .ok_or_else(|| Error::Config(format!("missing --config <path>\n{USAGE}")))?;
    Ok(Args { cmd, config_path, outdir })
}

fn main() -> ExitCode {
    // Validation phase: argument and config problems exit with 2.
    let args = match parse_args() {
        Ok(a) => a,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let text = match std::fs::read_to_string(&args.config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", args.config_path.display());
            return ExitCode::from(2);
        }
    };
    let config = match ExperimentConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let outdir = args
        .outdir
        .unwrap_or_else(|| PathBuf::from(&config.outputs.directory));

    // Computation phase: anything the data throws exits with 3.
    match runner::run(args.cmd, &config, &outdir) {
        Ok(output) => {
            println!("{}", output.dir.display());
            for f in &output.files {
                println!("  {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(Error::Io(e)) => {
            eprintln!("io error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
    }
}
