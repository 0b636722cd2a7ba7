use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use acuity_cli::commands;
use acuity_cli::errors::{code_of, render};
use acuity_cli::RunConfig;
use acuity_core::train::Arm;

/// Multimodal ICU acuity fusion: synthetic cohorts, training grid, evaluation and attribution.
#[derive(Parser)]
#[command(name = "acuity", version)]
struct Cli {
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory. Defaults to `$ACUITY_RUN_ROOT/<command>` (run root `runs`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Repeat for more log detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the fully resolved configuration as TOML.
    Config,
    /// Generate a synthetic cohort.
    Synth,
    /// Segment windows and extract features from a cohort directory.
    Extract {
        #[arg(long)]
        cohort: PathBuf,
    },
    /// Patient-level split and training-set normalization.
    Split {
        #[arg(long)]
        features: PathBuf,
    },
    /// Train one experiment arm.
    Train {
        #[arg(long)]
        split: PathBuf,
        /// One of ehr, ehr+accel, ehr+face, ehr+env, ehr+accel+face, all.
        #[arg(long)]
        arm: Arm,
    },
    /// Evaluate training runs that share one split against the baseline arm.
    Eval {
        #[arg(long)]
        split: PathBuf,
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
    },
    /// Integrated-gradients feature rankings for a trained arm.
    Attribute {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        split: PathBuf,
    },
    /// Render the outcome-by-arm tables of an evaluation.
    Report {
        #[arg(long)]
        eval: PathBuf,
    },
    /// Run everything end to end under one directory.
    Pipeline,
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Config => "config",
            Cmd::Synth => "synth",
            Cmd::Extract { .. } => "extract",
            Cmd::Split { .. } => "split",
            Cmd::Train { .. } => "train",
            Cmd::Eval { .. } => "eval",
            Cmd::Attribute { .. } => "attribute",
            Cmd::Report { .. } => "report",
            Cmd::Pipeline => "pipeline",
        }
    }
}

fn out_dir(cli: &Cli) -> PathBuf {
    if let Some(o) = &cli.out {
        return o.clone();
    }
    let root = std::env::var_os("ACUITY_RUN_ROOT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
    match &cli.cmd {
        Cmd::Train { arm, .. } => root.join("train").join(arm.name()),
        c => root.join(c.name()),
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), cli.seed)?;
    let out = out_dir(cli);
    let done = |p: &Path| println!("{}", p.display());
    match &cli.cmd {
        Cmd::Config => print!("{}", cfg.to_toml()?),
        Cmd::Synth => done(&commands::synth(&cfg, &out)?),
        Cmd::Extract { cohort } => done(&commands::extract(&cfg, cohort, &out)?),
        Cmd::Split { features } => done(&commands::split(&cfg, features, &out)?),
        Cmd::Train { split, arm } => done(&commands::train_arm(&cfg, split, *arm, &out)?),
        Cmd::Eval { split, runs } => done(&commands::eval(&cfg, split, runs, &out)?),
        Cmd::Attribute { run, split } => done(&commands::attribute(&cfg, run, split, &out)?),
        Cmd::Report { eval } => print!("{}", commands::report(&cfg, eval, &out)?.1),
        Cmd::Pipeline => print!("{}", commands::pipeline(&cfg, &out)?.1),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", render(&e));
            ExitCode::from(code_of(&e).exit_status() as u8)
        }
    }
}
