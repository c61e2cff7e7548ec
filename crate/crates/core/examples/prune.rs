//! Iterated global pruning of a model's weights.
//!
//! cargo run --release --example prune -- [ratio] [rounds]

use hinerv::compress::{prune, PruneMask};
use hinerv::{HiNeRV, ModelConfig};

fn main() -> hinerv::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let ratio = args.first().copied().unwrap_or(0.15);
    let rounds = args.get(1).copied().unwrap_or(5.0) as i32;
    let mut model = HiNeRV::new(ModelConfig::tiny(8), 0)?;
    let mut mask: Option<PruneMask> = None;
    for k in 1..=rounds {
        let next = prune(&model, mask.as_ref(), ratio)?;
        next.apply(model.params_mut());
        println!(
            "round {k}: sparsity {:.4} (1 - (1-r)^k = {:.4}), {} of {} weights pruned",
            next.sparsity(),
            1.0 - (1.0 - ratio).powi(k),
            next.pruned(),
            next.total()
        );
        mask = Some(next);
    }
    let mask = mask.expect("at least one round");
    for (k, spec) in model.specs().iter().enumerate() {
        if let Some(keep) = mask.keep(k) {
            let gone = keep.iter().filter(|&&kp| !kp).count();
            println!("  {:<28} {:>6} weights, {:5.1}% pruned", spec.name, keep.len(), 100.0 * gone as f64 / keep.len() as f64);
        }
    }
    Ok(())
}
