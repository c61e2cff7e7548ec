//! Renders a random model frame-wise and patch-wise and compares.
//!
//! cargo run --release --example frame_vs_patch -- [seed]

use hinerv::video::to_u8;
use hinerv::{HiNeRV, ModelConfig, PatchCoord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> hinerv::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = ModelConfig::tiny(4);
    let mut model = HiNeRV::new(cfg.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in model.params_mut() {
        for v in t.data_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    let (rows, cols) = cfg.patch_grid();
    let m = cfg.patch_size;
    for t in 0..cfg.frames {
        let frame = model.forward_frame(t)?;
        let mut worst = 0.0f32;
        let mut same8 = true;
        for j in 0..rows {
            for i in 0..cols {
                let patch = model.forward_patch(PatchCoord::new(i, j, t))?;
                let crop = frame.crop(j * m, i * m, m, m)?;
                for (a, b) in patch.data().iter().zip(crop.data()) {
                    worst = worst.max((a - b).abs());
                    same8 &= to_u8(*a) == to_u8(*b);
                }
            }
        }
        println!("frame {t}: {} patches, max |patch - crop| {worst:e}, 8-bit identical {same8}", rows * cols);
    }
    Ok(())
}
