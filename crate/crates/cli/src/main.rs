use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ritz_cli::commands::{self, AnalyzeInput, MetricSelection, Overrides};
use ritz_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "ritz", version, about = "Deep Ritz solver for two-well gradient energies")]
struct Cli {
    /// Worker threads; only independent runs of `reproduce` are spread over them.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunOverrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network from a TOML experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, replacing `outputs.directory`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Export the field of a checkpoint on an nx × ny midpoint grid.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 256)]
        nx: usize,
        #[arg(long, default_value_t = 128)]
        ny: usize,
        /// Domain length for checkpoints without a recorded model.
        #[arg(long)]
        length: Option<f64>,
        #[arg(long, default_value = "field.csv")]
        out: PathBuf,
    },
    /// Compare the loss gradient against central finite differences.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 200)]
        probes: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Microstructure metrics of a field export or checkpoint.
    Analyze {
        #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
        field: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 512)]
        nx: usize,
        #[arg(long, default_value_t = 256)]
        ny: usize,
        #[arg(long)]
        bands: bool,
        #[arg(long)]
        kinks: bool,
        #[arg(long)]
        layer_width: bool,
        #[arg(long)]
        y_independence: bool,
        /// Interface alignment against the laminate normal angle (radians).
        #[arg(long, value_name = "PHI")]
        alignment: Option<f64>,
        /// Horizontal line used for band counting.
        #[arg(long, default_value_t = 0.5)]
        y_line: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named preset and write a summary.
    Reproduce {
        /// Preset name; an unknown name lists the available ones.
        preset: String,
        /// Published iteration budgets and widths instead of desk scale.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: RunOverrides,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    if cli.threads == 0 {
        return Err(CliError::usage("--threads must be >= 1"));
    }
    match cli.command {
        Command::Train { config, out, overrides } => {
            let o = Overrides {
                seed: overrides.seed,
                iterations: overrides.iterations,
                gamma: overrides.gamma,
                out,
            };
            commands::cmd_train(&config, &o).map(drop)
        }
        Command::Eval {
            checkpoint,
            nx,
            ny,
            length,
            out,
        } => commands::cmd_eval(&checkpoint, nx, ny, length, &out).map(drop),
        Command::Gradcheck {
            config,
            probes,
            seed,
            corrupt_gradient,
        } => commands::cmd_gradcheck(&config, probes, seed, corrupt_gradient).map(drop),
        Command::Analyze {
            field,
            checkpoint,
            nx,
            ny,
            bands,
            kinks,
            layer_width,
            y_independence,
            alignment,
            y_line,
            out,
        } => {
            let input = match (&field, &checkpoint) {
                (Some(f), _) => AnalyzeInput::Field(f),
                (None, Some(c)) => AnalyzeInput::Checkpoint { path: c, nx, ny },
                (None, None) => return Err(CliError::usage("one of --field or --checkpoint is required")),
            };
            let metrics = MetricSelection {
                bands,
                kinks,
                layer_width,
                y_independence,
                alignment,
            };
            commands::cmd_analyze(input, metrics, y_line, out.as_deref()).map(drop)
        }
        Command::Reproduce {
            preset,
            full,
            out,
            overrides,
        } => {
            let o = Overrides {
                seed: overrides.seed,
                iterations: overrides.iterations,
                gamma: overrides.gamma,
                out: None,
            };
            let out = out.unwrap_or_else(|| PathBuf::from("runs").join(&preset));
            commands::cmd_reproduce(&preset, full, &o, cli.threads, &out).map(drop)
        }
    }
}

fn main() -> ExitCode {
    ritz_cli::tune_allocator();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { CliError::USAGE as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
