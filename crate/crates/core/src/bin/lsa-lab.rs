use clap::{Args, Parser, Subcommand};
use lsa_lab::cli::{run, ExperimentKind, Overrides};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lsa-lab", version, about = "Experiments for linear stochastic approximation with Markov noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Master seed; replaces `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override any leaf key, e.g. `--set schedule.alpha=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Moments of the random matrix products.
    Stability(Common),
    /// Error decomposition of the LSA recursion.
    Lsa(Common),
    /// TD(λ) on a finite reward process.
    Td(Common),
    /// Exact dynamic program for the forward recurrence counterexample.
    Counterexample(Common),
    /// Report of every explicit constant.
    Constants(Common),
    /// Verify a drift certificate on test states.
    DriftCheck(Common),
    /// Step-size schedule conditions and identities.
    ScheduleCheck(Common),
    /// Run whatever experiment the config names.
    Run {
        #[command(flatten)]
        common: Common,
        /// Alternative to the subcommands, e.g. `--experiment constants`.
        #[arg(long)]
        experiment: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, kind) = match cli.command {
        Command::Stability(c) => (c, Some(ExperimentKind::Stability)),
        Command::Lsa(c) => (c, Some(ExperimentKind::Lsa)),
        Command::Td(c) => (c, Some(ExperimentKind::Td)),
        Command::Counterexample(c) => (c, Some(ExperimentKind::Counterexample)),
        Command::Constants(c) => (c, Some(ExperimentKind::Constants)),
        Command::DriftCheck(c) => (c, Some(ExperimentKind::DriftCheck)),
        Command::ScheduleCheck(c) => (c, Some(ExperimentKind::ScheduleCheck)),
        Command::Run { common, experiment } => match experiment.as_deref().map(ExperimentKind::parse) {
            Some(None) => {
                eprintln!("error: unknown experiment `{}`", experiment.unwrap_or_default());
                return ExitCode::from(3);
            }
            Some(k) => (common, k),
            None => (common, None),
        },
    };
    let overrides = Overrides {
        experiment: kind,
        seed: common.seed,
        replicas: common.replicas,
        out: common.out,
        set: common.set,
    };
    match run(&common.config, &overrides) {
        Ok((cfg, outcome)) => {
            let mut stdout = std::io::stdout().lock();
            let _ = write!(stdout, "{}", outcome.summary);
            let _ = writeln!(stdout, "output: {}", cfg.resolve_out().display());
            for f in &outcome.failures {
                eprintln!("FAILED: {f}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
