//! `retarget`: retarget, evaluate, bench and synth subcommands.
//!
//! Exit codes: 0 on success, 1 for invalid input (bad flags, unreadable or
//! inconsistent files, bad configuration), 2 for runtime failures
//! (divergence, non-finite losses, unwritable outputs).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "retarget", version, about = "Optimization-based skinned motion retargeting")]
struct Cli {
    /// Worker threads; 0 or unset uses every available core.
    #[arg(long, global = true, env = "RETARGET_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Retarget a source motion onto a target character.
    Retarget(RetargetArgs),
    /// Compare a predicted motion with ground truth.
    Evaluate(EvaluateArgs),
    /// Time tree-indexed against brute-force penetration loss evaluation.
    Bench(BenchArgs),
    /// Write a synthetic scene as BVH, OBJ and weight sidecars.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Final,
    Curv,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::Final => "final",
            Preset::Curv => "curv",
        }
    }
}

#[derive(Args, Debug)]
struct RetargetArgs {
    /// Source skeleton and motion.
    #[arg(long)]
    source_bvh: PathBuf,
    /// Source mesh in the rest pose.
    #[arg(long)]
    source_obj: PathBuf,
    /// Source skinning weights sidecar.
    #[arg(long)]
    source_weights: PathBuf,
    /// Target mesh in the rest pose.
    #[arg(long)]
    target_obj: PathBuf,
    /// Target skinning weights sidecar; its limb table, if any, overrides the config.
    #[arg(long)]
    target_weights: PathBuf,
    /// Target skeleton (hierarchy only); defaults to the source skeleton.
    #[arg(long)]
    target_bvh: Option<PathBuf>,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Loss-weight preset; overrides the weights in the config.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Output BVH on the target skeleton.
    #[arg(long)]
    out_bvh: PathBuf,
    /// Output JSON report.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    pred_bvh: PathBuf,
    #[arg(long)]
    gt_bvh: PathBuf,
    /// Rest-pose mesh of the evaluated character.
    #[arg(long)]
    obj: PathBuf,
    /// Skinning weights sidecar of the evaluated character.
    #[arg(long)]
    weights: PathBuf,
    /// Output JSON report.
    #[arg(long)]
    report: PathBuf,
    /// Output CSV (header and one row); defaults to the report path with a `.csv` extension.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Signed depth above which a vertex counts as penetrating.
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Scene id: arm_sweep or slim_to_fat.
    #[arg(long, default_value = "slim_to_fat")]
    scene: String,
    /// Comma-separated `queries x references` tiers per limb.
    #[arg(long, default_value = "50x500,100x1000,200x2000,400x4000")]
    sizes: String,
    /// Timed evaluations per method and tier.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Output CSV.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scene id: arm_sweep or slim_to_fat.
    #[arg(long)]
    scene: String,
    /// JSON object overriding scene parameters.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

/// A reported failure and its exit code.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads.filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Retarget(a) => commands::retarget(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Bench(a) => commands::bench(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
