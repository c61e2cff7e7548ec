//! Command-line front end. Defaults follow the published pipeline:
//! 15% pruning with 60 fine-tuning epochs, then 30 epochs of quantization
//! noise (90% ratio) at 6 bits.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hinerv::codec::{self, DecodeMode, EncodeOptions};
use hinerv::video::VideoFormat;
use hinerv::{Error, Result};

#[derive(Parser)]
#[command(name = "hinerv", version, about = "Neural video codec: encode, decode, evaluate and inspect bitstreams")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model on a video, prune, quantize and write a bitstream.
    Encode {
        /// PNG frame directory (%06d.png) or raw RGB8 file with a .dims sidecar.
        video: PathBuf,
        out: PathBuf,
        /// key = value model/training config (training keys use a `train.` prefix).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Video format: png | raw (default: directory → png, file → raw).
        #[arg(long)]
        format: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Training epochs (reference setting: 300; default from config).
        #[arg(long)]
        epochs: Option<usize>,
        /// Share of conv/linear weights to prune (reference setting: 15%).
        #[arg(long, default_value_t = 0.15)]
        prune_ratio: f64,
        /// Fine-tuning epochs after pruning (reference setting: 60).
        #[arg(long, default_value_t = 60)]
        prune_epochs: usize,
        /// Quantization-noise fine-tuning epochs (reference setting: 30).
        #[arg(long, default_value_t = 30)]
        qat_epochs: usize,
        /// Quantization-noise ratio (reference setting: 0.9).
        #[arg(long, default_value_t = 0.9)]
        noise_ratio: f64,
        /// Weight bit width (reference setting: 6).
        #[arg(long, default_value_t = 6)]
        bits: u8,
        /// Write the training log (CSV) here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Write the per-frame report (CSV) here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Reconstruct frames from a bitstream.
    Decode {
        input: PathBuf,
        out: PathBuf,
        /// Frame range a..b (end exclusive).
        #[arg(long)]
        frames: Option<String>,
        /// frame | patch
        #[arg(long, default_value = "frame")]
        mode: String,
        #[arg(long)]
        format: Option<String>,
    },
    /// Compare a reconstruction with the original.
    Eval {
        original: PathBuf,
        reconstructed: PathBuf,
        /// Bitstream, for size and bits per pixel.
        #[arg(long)]
        bitstream: Option<PathBuf>,
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Describe a bitstream.
    Info { input: PathBuf },
}

fn format_arg(f: &Option<String>) -> Result<Option<VideoFormat>> {
    f.as_deref().map(VideoFormat::parse).transpose()
}

fn write_csv(path: &Option<PathBuf>, text: &str) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, text).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Encode {
            video,
            out,
            config,
            format,
            seed,
            epochs,
            prune_ratio,
            prune_epochs,
            qat_epochs,
            noise_ratio,
            bits,
            log,
            csv,
        } => {
            let opts = EncodeOptions {
                seed,
                epochs,
                prune_ratio,
                prune_epochs,
                qat_epochs,
                noise_ratio,
                bits,
                log,
            };
            let report = codec::cmd_encode(&video, format_arg(&format)?, config.as_deref(), &out, &opts)?;
            print!("{}", report.to_text());
            write_csv(&csv, &report.to_csv())
        }
        Cmd::Decode {
            input,
            out,
            frames,
            mode,
            format,
        } => {
            let range = frames.as_deref().map(codec::parse_range).transpose()?;
            let clip = codec::cmd_decode(&input, &out, format_arg(&format)?, range, DecodeMode::parse(&mode)?)?;
            println!("decoded {} frames of {}x{}", clip.len(), clip.width(), clip.height());
            Ok(())
        }
        Cmd::Eval {
            original,
            reconstructed,
            bitstream,
            format,
            csv,
        } => {
            let report = codec::cmd_eval(&original, &reconstructed, bitstream.as_deref(), format_arg(&format)?)?;
            print!("{}", report.to_text());
            write_csv(&csv, &report.to_csv())
        }
        Cmd::Info { input } => {
            print!("{}", codec::cmd_info(&input)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
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
