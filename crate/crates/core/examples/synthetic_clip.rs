//! Write the synthetic moving-gradient clip as PNG frames or raw RGB8.
//!
//! cargo run --example synthetic_clip -- <out> [png|raw] [frames] [height] [width]

use std::path::PathBuf;

use hinerv::video::{moving_gradient, write_video, VideoFormat};

fn main() -> hinerv::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = PathBuf::from(args.first().map_or("clip", String::as_str));
    let format = VideoFormat::parse(args.get(1).map_or("png", String::as_str))?;
    let dim = |i: usize, d: usize| args.get(i).and_then(|v| v.parse().ok()).unwrap_or(d);
    let clip = moving_gradient(dim(2, 8), dim(3, 64), dim(4, 64));
    write_video(&clip, &out, format)?;
    println!("wrote {} frames of {}x{} to {}", clip.len(), clip.width(), clip.height(), out.display());
    Ok(())
}
