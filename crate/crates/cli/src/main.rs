use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Simulate networks of kinetic automata.
#[derive(Parser, Debug)]
#[command(name = "kinon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario, writing PGM frames and metrics.csv.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Classify the regime reached for each k of a map family.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
        /// gain, gamma or negative_gain
        #[arg(long)]
        family: String,
        #[arg(long)]
        k_min: f64,
        #[arg(long)]
        k_max: f64,
        #[arg(long)]
        k_count: usize,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Assemble frames into a space-time image (1D) or a contact sheet (2D).
    Render {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a scenario to steering clients, paused at step 0.
    Serve {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, default_value = "8700")]
        port: String,
    },
}

#[derive(Args, Debug)]
#[group(required = false, multiple = false)]
struct Source {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Bundled preset, e.g. fig10.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frame_every: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { source, out, overrides } => commands::load(&source, &overrides).and_then(|s| commands::run(&s, &out)),
        Command::Sweep { source, out, family, k_min, k_max, k_count, overrides } => {
            commands::load_or_default(&source, &overrides).and_then(|s| commands::sweep(&s, &family, k_min, k_max, k_count, &out))
        }
        Command::Render { frames, out } => commands::render(&frames, &out),
        Command::Serve { source, bind, port } => commands::load(&source, &Overrides::default()).and_then(|s| commands::serve(s, &bind, &port)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("kinon: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
