//! Encode a clip to a bitstream, inspect it, decode it and score it.
//!
//! cargo run --release --example codec_round_trip -- [epochs] [workdir]

use std::path::PathBuf;

use hinerv::codec::{self, DecodeMode, EncodeOptions};
use hinerv::video::{moving_gradient, write_video, VideoFormat};

fn main() -> hinerv::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs = args.first().and_then(|e| e.parse().ok()).unwrap_or(30);
    let dir = args.get(1).map_or_else(|| std::env::temp_dir().join("hinerv-round-trip"), PathBuf::from);
    std::fs::create_dir_all(&dir).map_err(|e| hinerv::Error::io(&dir, e))?;

    let video = dir.join("clip");
    write_video(&moving_gradient(8, 64, 64), &video, VideoFormat::PngDir)?;
    let stream = dir.join("clip.hnrv");
    let opts = EncodeOptions {
        epochs: Some(epochs),
        prune_epochs: epochs / 5,
        qat_epochs: epochs / 10,
        ..EncodeOptions::default()
    };
    let enc = codec::cmd_encode(&video, None, None, &stream, &opts)?;
    print!("{}", enc.to_text());
    print!("{}", codec::cmd_info(&stream)?);

    let recon = dir.join("recon");
    codec::cmd_decode(&stream, &recon, None, None, DecodeMode::Patch)?;
    let eval = codec::cmd_eval(&video, &recon, Some(&stream), None)?;
    print!("{}", eval.to_csv());
    println!("files in {}", dir.display());
    Ok(())
}
