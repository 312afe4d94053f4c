//! `avse`: synthesize corpora, train mask estimators and evaluate them.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use avse_core::data::{load_wav, make_dataset, CorpusConfig, Manifest};
use avse_core::harness::{
    correlate, evaluate, export_spectrogram, run_training, RunConfig, Selection, System,
};
use avse_core::losses::LossKind;
use avse_core::model::Mode;
use avse_core::{Error, ErrorCategory, StftConfig};
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "avse", version, about = "Audio-visual speech enhancement experiments")]
struct Cli {
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML configuration for the command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic mixture corpus and its manifest.
    SynthData,
    /// Train a mask estimator on a corpus.
    Train {
        /// Manifest file or the directory containing it.
        #[arg(long)]
        manifest: PathBuf,
        /// mse, mae or stoi.
        #[arg(long)]
        loss: Option<LossKind>,
        /// av or ao.
        #[arg(long)]
        mode: Option<Mode>,
        /// Total epochs, counting any already in a resumed checkpoint.
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score the noisy input, trained models and the ideal ratio mask.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// train, val, test or all.
        #[arg(long, default_value = "test")]
        split: Selection,
        /// Checkpoint files to evaluate.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
    },
    /// Correlate the spectrogram-domain STOI variants with the originals.
    Correlate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "all")]
        split: Selection,
    },
    /// Export log-magnitude spectrograms of WAV files.
    Spectrogram {
        #[arg(required = true)]
        wavs: Vec<PathBuf>,
    },
}

fn out_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Error> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::SynthData => {
            let mut cfg = match &cli.config {
                Some(p) => CorpusConfig::load(p)?,
                None => CorpusConfig::default(),
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let out = out_dir(cli, "corpus");
            let ds = make_dataset(&cfg, &out)?;
            println!("wrote {} mixtures to {}", ds.manifest.entries.len(), ds.manifest_path.display());
            if ds.clipped_samples > 0 {
                eprintln!("warning: {} samples clipped while writing WAV files", ds.clipped_samples);
            }
        }
        Command::Train {
            manifest,
            loss,
            mode,
            epochs,
            resume,
        } => {
            let manifest = Manifest::load(manifest)?;
            let mut cfg = match &cli.config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            if let Some(seed) = cli.seed {
                cfg.model.seed = seed;
                cfg.train.seed = seed;
            }
            if let Some(kind) = loss {
                cfg.train.loss.kind = *kind;
            }
            if let Some(mode) = mode {
                cfg.train.mode = *mode;
            }
            if let Some(epochs) = epochs {
                cfg.train.epochs = *epochs;
            }
            let run = run_training(&manifest, &cfg, out_dir(cli, "run"), resume.as_deref(), |r| {
                println!(
                    "epoch {:>3}  train {:>10.6}  val {:>10.6}  val mSTOI {:.4}",
                    r.epoch, r.train_loss, r.val_loss, r.val_modified_stoi
                );
            })?;
            println!("checkpoint: {}", run.checkpoint.display());
            println!("history: {}", run.history.display());
        }
        Command::Evaluate {
            manifest,
            split,
            checkpoints,
        } => {
            let manifest = Manifest::load(manifest)?;
            let systems = checkpoints
                .iter()
                .map(System::from_checkpoint)
                .collect::<Result<Vec<_>, _>>()?;
            let report = evaluate(&manifest, *split, &systems)?;
            let out = out_dir(cli, "eval");
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let table = report.render_table();
            write(&out.join("report.jsonl"), report.to_jsonl()?)?;
            write(&out.join("table.txt"), &table)?;
            print!("{table}");
        }
        Command::Correlate { manifest, split } => {
            let manifest = Manifest::load(manifest)?;
            let report = correlate(&manifest, *split)?;
            let out = out_dir(cli, "correlation");
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write(&out.join("scatter.csv"), report.to_csv())?;
            write(&out.join("summary.txt"), report.summary())?;
            print!("{}", report.summary());
        }
        Command::Spectrogram { wavs } => {
            let out = out_dir(cli, "spectrograms");
            for path in wavs {
                let wav = load_wav(path)?;
                let cfg = if wav.sample_rate() == 16_000 {
                    StftConfig::SPEECH_16K
                } else {
                    let frame = (wav.sample_rate() as usize * 25).div_ceil(1000);
                    StftConfig::new(frame, frame * 2 / 5, frame.next_power_of_two(), avse_core::WindowKind::Hann)?
                };
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("spectrogram");
                let (pgm, _) = export_spectrogram(&wav, &cfg, &out, stem)?;
                println!("{}", pgm.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.category() {
                ErrorCategory::Usage => 2,
                ErrorCategory::Data => 3,
                ErrorCategory::Numeric => 4,
            })
        }
    }
}
