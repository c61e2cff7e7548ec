//! Minimal patch padding per stage for a stack of blocks.
//!
//! cargo run --example padding -- [kernel] [depth,depth,..] [scale,scale,..]

use hinerv::model::padding_schedule;

fn list(s: Option<&String>, default: &[usize]) -> Vec<usize> {
    s.map_or_else(|| default.to_vec(), |s| s.split(',').map(|v| v.trim().parse().expect("integer")).collect())
}

fn main() -> hinerv::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kernel = args.first().and_then(|k| k.parse().ok()).unwrap_or(3);
    let depths = list(args.get(1), &[3, 3, 3, 1]);
    let scales = list(args.get(2), &[5, 3, 2, 2]);
    let pads = padding_schedule(&depths, &scales, kernel)?;
    println!("kernel {kernel}, depths {depths:?}, scales {scales:?}");
    println!("padding by stage (stem first): {pads:?}");
    Ok(())
}
