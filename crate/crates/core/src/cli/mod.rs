//! Command-line front end: argument parsing, run configuration, command
//! pipelines and artifact persistence.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use artifacts::{check_output_dir, slug, ArtifactSet, Header, TOOL_NAME};
pub use commands::{
    demo_config, run, Outcome, Overrides, DEFAULT_OUT_DIR, DEMO_B_STAR, DEMO_MITIGATION_PROMPT, DEMO_PRIORITY,
    EXIT_NOT_CONVERGED,
};
pub use config::{Command, ModeName, OutputFormat, ProviderConfig, RunConfig, ScenarioName, SweepConfig};

#[derive(Debug, Parser)]
#[command(name = "biasengine", version, about = "Intersectional bias auditing and mitigation for text-to-image models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Per-axis CAS scores and normalized MAD.
    Evaluate,
    /// Intersectionality matrix per prompt.
    Connect,
    /// Significant cross-axis edges, per prompt or across the corpus.
    Graph,
    /// Priority-driven iterative mitigation.
    Mitigate,
    /// Metric drift under answer errors or smaller image sets.
    Sensitivity,
    /// Full pipeline on the bundled occupation scenario.
    Demo,
}

impl From<&CliCommand> for Command {
    fn from(c: &CliCommand) -> Self {
        match c {
            CliCommand::Evaluate => Command::Evaluate,
            CliCommand::Connect => Command::Connect,
            CliCommand::Graph => Command::Graph,
            CliCommand::Mitigate => Command::Mitigate,
            CliCommand::Sensitivity => Command::Sensitivity,
            CliCommand::Demo => Command::Demo,
        }
    }
}

#[derive(Debug, Args)]
pub struct Flags {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Base seed for sampling and error injection
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for provider calls and metric computation.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Write into a non-empty output directory.
    #[arg(long, global = true)]
    pub force: bool,
    /// Chi-square p-value below which an edge is kept
    #[arg(long, global = true)]
    pub p_threshold: Option<f64>,
    /// Mitigation stops once the weighted bias falls below this
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Write only artifacts of this format (text tables are always written).
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            out: self.flags.out.clone(),
            seed: self.flags.seed,
            jobs: self.flags.jobs,
            force: self.flags.force,
            p_threshold: self.flags.p_threshold,
            epsilon: self.flags.epsilon,
            format: self.flags.format,
        }
    }

    /// Runs the parsed command; returns the process exit code.
    pub fn execute(&self) -> i32 {
        match run((&self.command).into(), self.flags.config.as_deref(), &self.overrides()) {
            Ok(outcome) => {
                print!("{}", outcome.summary);
                for p in &outcome.written {
                    log::info!("wrote {}", p.display());
                }
                outcome.exit_code
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        }
    }
}
