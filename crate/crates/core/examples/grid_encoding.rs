//! Shapes of the base and per-block local grids, and the base encoding of
//! one frame.
//!
//! cargo run --example grid_encoding

use hinerv::grid::base_encoding;
use hinerv::tensor::{Graph, Region};
use hinerv::ModelConfig;

fn main() -> hinerv::Result<()> {
    let cfg = ModelConfig::tiny(8);
    println!("base grid levels:");
    for s in cfg.base_grid.shapes() {
        println!("  {s:?}");
    }
    for (n, &scale) in cfg.scales.iter().enumerate() {
        let shapes = cfg.local_grid.shapes(n + 1, scale, cfg.reduction);
        println!("block {} (x{scale}) local grid levels: {shapes:?}", n + 1);
    }

    let mut rng = rand::rng();
    let grids = hinerv::grid::FeatureGridSet::init(&cfg.base_grid.shapes(), &mut rng);
    let mut g = Graph::<f32>::new();
    let vars: Vec<_> = grids.levels.iter().map(|t| g.constant(t.clone())).collect();
    let frame = cfg.stage_frame(0);
    let enc = base_encoding(&mut g, &vars, Region::frame(frame.0, frame.1), 3, frame, cfg.frames)?;
    let v = g.value(enc);
    let (lo, hi) = v.data().iter().fold((f32::MAX, f32::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    println!("base encoding of frame 3: shape {:?}, values in [{lo:.4}, {hi:.4}]", v.shape());
    Ok(())
}
