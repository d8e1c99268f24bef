use clap::{Parser, Subcommand};
use scatrec_cli::pipeline::Pipeline;
use scatrec_cli::{CliError, ExperimentConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "scatrec",
    version,
    about = "Scattering-statistics reconstruction experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Override a config field, e.g. `--set process.temperature=1.8`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    n_train: Option<usize>,
    #[arg(long, global = true)]
    n_test: Option<usize>,
    #[arg(long, global = true)]
    outer_iterations: Option<usize>,
    #[arg(long, global = true)]
    inner_iterations: Option<usize>,

    /// Run on one thread (bit-exact reruns).
    #[arg(long, global = true)]
    single_thread: bool,

    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Sample training and test realizations.
    Generate,
    /// Fit one estimator per outer iteration.
    Train,
    /// Reconstruct the test set from its measurements.
    Reconstruct,
    /// Run the configured regularized baselines.
    Baseline,
    /// MSE, patch kurtosis and cokurtosis panels per image set.
    Evaluate,
    /// Table and montages from the evaluation.
    Report,
    /// All steps in order.
    Run,
}

impl Cli {
    fn overrides(&self) -> Vec<String> {
        let mut o = self.overrides.clone();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push(format!("{k}={v}"));
            }
        };
        push(
            "experiment.output",
            self.output.as_ref().map(|p| format!("{:?}", p.display().to_string())),
        );
        push("experiment.seed", self.seed.map(|v| v.to_string()));
        push("experiment.n_train", self.n_train.map(|v| v.to_string()));
        push("experiment.n_test", self.n_test.map(|v| v.to_string()));
        push("solver.outer_iterations", self.outer_iterations.map(|v| v.to_string()));
        push("solver.inner_iterations", self.inner_iterations.map(|v| v.to_string()));
        o
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = ExperimentConfig::load(path, &cli.overrides())?;
    if cli.single_thread {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    let command: Vec<String> = std::env::args().collect();
    let p = Pipeline::new(&cfg, command.join(" "));
    match cli.command {
        Command::Generate => p.generate(),
        Command::Train => p.train(),
        Command::Reconstruct => p.reconstruct(),
        Command::Baseline => p.baseline(),
        Command::Evaluate => p.evaluate().map(|_| ()),
        Command::Report => p.report().map(|t| print!("{t}")),
        Command::Run => p.run().map(|t| print!("{t}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("scatrec: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
