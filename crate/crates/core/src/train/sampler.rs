use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::PatchCoord;

/// Every patch of a `frames x rows x cols` partition, in `(t, j, i)` order.
pub fn all_patches(frames: usize, (rows, cols): (usize, usize)) -> Vec<PatchCoord> {
    let mut v = Vec::with_capacity(frames * rows * cols);
    for t in 0..frames {
        for j in 0..rows {
            for i in 0..cols {
                v.push(PatchCoord::new(i, j, t));
            }
        }
    }
    v
}

/// `count` uniformly drawn patches. Without replacement `count` may not
/// exceed the number of patches, and `count == total` is a shuffled cover.
pub fn sample_patches(
    rng: &mut impl Rng,
    frames: usize,
    partition: (usize, usize),
    count: usize,
    replace: bool,
) -> Result<Vec<PatchCoord>> {
    let total = frames * partition.0 * partition.1;
    if count == 0 || total == 0 {
        return Err(Error::usage("patch sampling needs count >= 1 and a non-empty partition"));
    }
    if replace {
        let (rows, cols) = partition;
        return Ok((0..count)
            .map(|_| {
                let k = rng.random_range(0..total);
                PatchCoord::new(k % cols, k / cols % rows, k / (rows * cols))
            })
            .collect());
    }
    if count > total {
        return Err(Error::usage(format!(
            "cannot draw {count} distinct patches from {total}"
        )));
    }
    let mut all = all_patches(frames, partition);
    all.shuffle(rng);
    all.truncate(count);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn full_count_without_replacement_is_a_cover() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = sample_patches(&mut rng, 4, (2, 3), 24, false).unwrap();
        s.sort_by_key(|p| (p.t, p.j, p.i));
        assert_eq!(s, all_patches(4, (2, 3)));
        assert!(sample_patches(&mut rng, 4, (2, 3), 25, false).is_err());
        assert!(sample_patches(&mut rng, 4, (2, 3), 0, true).is_err());
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let a = sample_patches(&mut ChaCha8Rng::seed_from_u64(9), 8, (2, 2), 100, true).unwrap();
        let b = sample_patches(&mut ChaCha8Rng::seed_from_u64(9), 8, (2, 2), 100, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn frame_marginal_passes_chi_square() {
        let (frames, n) = (8, 100_000);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let s = sample_patches(&mut rng, frames, (3, 2), n, true).unwrap();
        let mut counts = vec![0usize; frames];
        for p in &s {
            counts[p.t] += 1;
        }
        let e = n as f64 / frames as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 7 degrees of freedom: mean 7, sd sqrt(14); mean + 3 sd ≈ 18.2.
        assert!(chi2 < 7.0 + 3.0 * 14f64.sqrt(), "chi2 {chi2}");
    }
}
