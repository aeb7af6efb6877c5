use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use wavekin::config::{self, Experiment};
use wavekin::runner;

#[derive(Parser)]
#[command(name = "wavekin", version, about = "Run a configured experiment and write CSV/JSON results with a manifest")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Scenario file (TOML, or JSON; a run manifest also works).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for random phases (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dotted-key override, e.g. `params.l=32`. Repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VAL")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    Propagate,
    Resonances,
    CrOp,
    WkOp,
    Expansion,
    Mc,
    OracleCompare,
    Decay,
    Validate,
}

impl Cmd {
    fn experiment(self) -> Experiment {
        match self {
            Cmd::Propagate => Experiment::Propagate,
            Cmd::Resonances => Experiment::Resonances,
            Cmd::CrOp => Experiment::CrOp,
            Cmd::WkOp => Experiment::WkOp,
            Cmd::Expansion => Experiment::Expansion,
            Cmd::Mc => Experiment::Mc,
            Cmd::OracleCompare => Experiment::OracleCompare,
            Cmd::Decay => Experiment::Decay,
            Cmd::Validate => Experiment::Validate,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let Some(path) = cli.config.as_ref() else {
        eprintln!("error: --config is required");
        return ExitCode::from(2);
    };
    let mut overrides = vec![format!("experiment=\"{}\"", cli.cmd.experiment().name())];
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    overrides.extend(cli.overrides.iter().cloned());
    let code = match config::load(path, &overrides).and_then(|cfg| runner::run(&cfg, &cli.out)) {
        Ok(outcome) => {
            for v in &outcome.violations {
                eprintln!("guard violation: {v}");
            }
            for f in &outcome.failures {
                eprintln!("tolerance failure: {f}");
            }
            for a in &outcome.artifacts {
                println!("{}  {}", a.sha256, a.file);
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            runner::error_exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
