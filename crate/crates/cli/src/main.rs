mod config;
mod output;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgMatches, Command};

use config::{ExperimentConfig, Format, Overrides, UsageError};
use tasks::{CliResult, Run};

fn cli() -> Command {
    let global = [
        Arg::new("config")
            .long("config")
            .global(true)
            .value_name("FILE")
            .value_parser(value_parser!(PathBuf))
            .help("JSON experiment config"),
        Arg::new("seed")
            .long("seed")
            .global(true)
            .value_parser(value_parser!(u64))
            .help("Master seed (overrides run.seed)"),
        Arg::new("threads")
            .long("threads")
            .global(true)
            .value_parser(value_parser!(usize))
            .help("Worker threads (default: all cores)"),
        Arg::new("out-dir")
            .long("out-dir")
            .global(true)
            .value_name("DIR")
            .value_parser(value_parser!(PathBuf))
            .help("Output directory (overrides output.dir)"),
        Arg::new("format")
            .long("format")
            .global(true)
            .value_parser(value_parser!(Format))
            .help("Table format (overrides output.format)"),
    ];
    Command::new("seplab")
        .about("Solvers, Monte Carlo and acceptance checks for the open partial exclusion process")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .args(global)
        .subcommands(tasks::registry().iter().map(|t| Command::new(t.name()).about(t.about())))
}

fn execute(name: &str, m: &ArgMatches) -> CliResult<()> {
    let task = tasks::find(name).expect("subcommands come from the registry");
    let o = Overrides {
        seed: m.get_one::<u64>("seed").copied(),
        out_dir: m.get_one::<PathBuf>("out-dir").cloned(),
        format: m.get_one::<Format>("format").copied(),
    };
    let cfg = ExperimentConfig::load(m.get_one::<PathBuf>("config").map(PathBuf::as_path), &o)?;
    if let Some(&n) = m.get_one::<usize>("threads") {
        if n == 0 {
            return Err(UsageError::new("--threads", "must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| UsageError::new("--threads", e.to_string()))?;
    }
    let r = Run { params: cfg.validate()?, cfg: &cfg };
    let artifacts = task.run(&r)?;
    for p in output::write_all(&cfg, name, &artifacts)? {
        eprintln!("wrote {}", p.display());
    }
    task.verdict(&artifacts)
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    match execute(name, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("seplab {name}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
