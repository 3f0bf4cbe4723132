//! Command-line entry point: prepare / train / reconstruct / evaluate, plus
//! a synthetic-corpus generator for self-contained experiments.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use reband::model::{BottleneckKind, CuabPlacement};
use reband::run::{cmd_evaluate, cmd_prepare, cmd_reconstruct, cmd_synth_corpus, cmd_train, RunConfig};
use reband::RebandError;

#[derive(Copy, Clone, ValueEnum)]
enum CuabArg {
    Standard,
    Every,
    None,
}

#[derive(Copy, Clone, ValueEnum)]
enum BottleneckArg {
    Conformer,
    Transformer,
}

#[derive(Parser)]
#[command(
    name = "reband",
    about = "Reconstruct wideband speech from aliased, noisy low-rate captures"
)]
struct Cli {
    /// JSON run configuration (see RunConfig; corpus_dir, workdir and seed
    /// are mandatory, everything else has defaults).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the simulated sensor rate.
    #[arg(long, global = true, value_parser = ["500", "1000", "2000"])]
    capture_rate: Option<String>,

    /// Override attention-block placement.
    #[arg(long, global = true, value_enum)]
    cuab: Option<CuabArg>,

    /// Override the bottleneck variant.
    #[arg(long, global = true, value_enum)]
    bottleneck: Option<BottleneckArg>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic speech-like corpus.
    SynthCorpus {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        speakers: usize,
        #[arg(long, default_value_t = 8)]
        clips_per_speaker: usize,
    },
    /// Degrade the corpus into training pairs and write the manifest.
    Prepare,
    /// Train (or resume) on the prepared train split.
    Train {
        /// Resume from workdir/checkpoint.bin if present.
        #[arg(long)]
        resume: bool,
    },
    /// Run one WAV through a checkpoint.
    Reconstruct {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score the test split: raw-input baseline row plus model row.
    Evaluate {
        /// Checkpoint path (default: workdir/checkpoint.bin).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Debug flag: score targets against themselves in the model row.
        #[arg(long)]
        oracle: bool,
        /// External PESQ adapter: `<cmd> <ref.wav> <est.wav>` printing one scalar.
        #[arg(long)]
        pesq_cmd: Option<String>,
        /// External NISQA adapter, same contract.
        #[arg(long)]
        nisqa_cmd: Option<String>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, RebandError> {
    let path = cli.config.as_ref().ok_or_else(|| {
        RebandError::InvalidConfig("this subcommand requires --config <file>".into())
    })?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(rate) = &cli.capture_rate {
        cfg.profile.capture_rate = rate.parse().unwrap();
    }
    if let Some(c) = cli.cuab {
        cfg.model.cuab = match c {
            CuabArg::Standard => CuabPlacement::Standard,
            CuabArg::Every => CuabPlacement::Every,
            CuabArg::None => CuabPlacement::None,
        };
    }
    if let Some(b) = cli.bottleneck {
        cfg.model.bottleneck = match b {
            BottleneckArg::Conformer => BottleneckKind::Conformer,
            BottleneckArg::Transformer => BottleneckKind::Transformer,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), RebandError> {
    match &cli.command {
        Command::SynthCorpus {
            dir,
            speakers,
            clips_per_speaker,
        } => cmd_synth_corpus(dir, *speakers, *clips_per_speaker),
        Command::Prepare => {
            let cfg = load_config(cli)?;
            let manifest = cmd_prepare(&cfg)?;
            println!(
                "prepared {} clips ({} skipped) into {}",
                manifest.clips.len(),
                manifest.skipped.len(),
                cfg.workdir.display()
            );
            Ok(())
        }
        Command::Train { resume } => {
            let cfg = load_config(cli)?;
            let path = cmd_train(&cfg, *resume)?;
            println!("checkpoint written to {}", path.display());
            Ok(())
        }
        Command::Reconstruct {
            checkpoint,
            input,
            output,
        } => cmd_reconstruct(checkpoint, input, output),
        Command::Evaluate {
            checkpoint,
            oracle,
            pesq_cmd,
            nisqa_cmd,
        } => {
            let cfg = load_config(cli)?;
            let eval = cmd_evaluate(
                &cfg,
                checkpoint.as_deref(),
                *oracle,
                pesq_cmd.as_deref(),
                nisqa_cmd.as_deref(),
            )?;
            print!("{}", eval.text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
