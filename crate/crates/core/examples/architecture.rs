//! Stage-by-stage shapes, paddings and parameter counts of a preset.
//!
//! cargo run --example architecture -- [size] [uvg|mcl-jcv|bunny] [frames]

use hinerv::model::{Dataset, ModelConfig};
use hinerv::HiNeRV;

fn main() -> hinerv::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let size = args.first().map_or("s", String::as_str);
    let dataset = match args.get(1).map_or("uvg", String::as_str) {
        "uvg" => Dataset::Uvg,
        "mcl-jcv" => Dataset::MclJcv,
        "bunny" => Dataset::Bunny,
        other => return Err(hinerv::Error::usage(format!("unknown dataset {other}"))),
    };
    let frames = args.get(2).and_then(|v| v.parse().ok()).unwrap_or(600);
    let cfg = ModelConfig::preset(size, dataset, frames)?;
    let paddings = cfg.paddings()?;
    println!("{size} on {dataset:?}: {}x{} frames, {} per patch", cfg.width, cfg.height, cfg.patch_size);
    println!("stage  channels  patch  frame        padding");
    for s in 0..=cfg.blocks() {
        let (h, w) = cfg.stage_frame(s);
        let ch = if s == 0 { cfg.channels } else { cfg.stage_channels(s) };
        println!("{s:>5}  {ch:>8}  {:>5}  {w:>5}x{h:<5}  {:>7}", cfg.stage_patch(s), paddings[s]);
    }
    let model = HiNeRV::new(cfg, 0)?;
    let mut by_kind = std::collections::BTreeMap::new();
    for s in model.specs() {
        *by_kind.entry(format!("{:?}", s.kind)).or_insert(0usize) += s.len();
    }
    for (kind, n) in by_kind {
        println!("{kind:>14}: {n}");
    }
    println!("{:>14}: {}", "total", model.param_count());
    Ok(())
}
