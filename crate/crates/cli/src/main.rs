mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hazefield::Error;

use crate::config::{Precision, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "hazefield", version, about = "Haze-free radiance fields from hazy multi-view images")]
struct Cli {
    /// Print the default run configuration as JSON and exit.
    #[arg(long)]
    print_config: bool,

    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render, haze and quantize a procedural scene into a dataset.
    Synth(SynthArgs),
    /// Fit a field and atmosphere parameters to a dataset.
    Train(TrainArgs),
    /// Render views from a checkpoint.
    Render(RenderArgs),
    /// Score a checkpoint or a baseline on the held-out views.
    Eval(EvalArgs),
    /// Evaluate the joint pipeline with each loss term disabled in turn.
    Ablation(AblationArgs),
    /// Build one dataset per beta and compare modes across them.
    Sweep(SweepArgs),
    /// Check every analytic gradient against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value = "fixture")]
    pub preset: String,
    #[arg(long, default_value_t = 0.162)]
    pub beta: f64,
    #[arg(long = "A", default_value_t = 0.8)]
    pub airlight: f64,
    /// `start:stop:step`, inclusive; writes one dataset per value under --out.
    #[arg(long)]
    pub beta_sweep: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub views: usize,
    #[arg(long, default_value_t = 5)]
    pub test_views: usize,
    #[arg(long, default_value_t = 64)]
    pub res: usize,
    #[arg(long, default_value_t = 256)]
    pub levels: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Overrides applied on top of a run config; flags win.
#[derive(Args, Debug)]
pub struct RunOverrides {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
    /// Loss term to disable: smrc (replaced by squared error), cons, cd or tv.
    #[arg(long)]
    pub ablate: Vec<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunOverrides,
    /// Continue from a checkpoint instead of starting fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset whose cameras --camera-index refers to.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub camera_index: Option<usize>,
    /// Use the held-out cameras instead of the training ones.
    #[arg(long)]
    pub test: bool,
    /// Render this many poses on a circular orbit instead.
    #[arg(long)]
    pub orbit: Option<usize>,
    #[arg(long, default_value_t = 64)]
    pub res: usize,
    /// Also write expected depth as PFM.
    #[arg(long)]
    pub depth: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunOverrides,
    /// ours, naive, dcp or all.
    #[arg(long, default_value = "ours")]
    pub baseline: String,
    /// Score this checkpoint instead of training.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AblationArgs {
    #[command(flatten)]
    pub run: RunOverrides,
    /// Comma-separated subset of full,smrc,cons,cd,tv.
    #[arg(long, default_value = "full,smrc,cons,cd,tv")]
    pub terms: String,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunOverrides,
    #[arg(long, default_value = "0.04:0.36:0.08")]
    pub betas: String,
    #[arg(long = "A", default_value_t = 0.8)]
    pub airlight: f64,
    /// Comma-separated subset of ours,naive,dcp.
    #[arg(long, default_value = "ours,naive")]
    pub modes: String,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// 0 success, 1 internal or divergence, 2 invalid input, 3 corrupt artifact.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Corrupt { .. } | Error::Image { .. } => 3,
        Error::Diverged(_) => 1,
        Error::Io { source, .. } if source.kind() != std::io::ErrorKind::NotFound => 1,
        _ => 2,
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
    if cli.print_config {
        println!("{}", serde_json::to_string_pretty(&RunConfig::default()).expect("config serializes"));
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: no command given (see --help)");
        return ExitCode::from(2);
    };
    let result = match command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Render(a) => commands::render(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Ablation(a) => commands::ablation(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
