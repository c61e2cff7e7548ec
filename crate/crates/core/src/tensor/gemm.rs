//! Register-tiled `C += A·B` where every element of `C` accumulates its `k`
//! terms strictly in ascending order onto its previous value. The result of
//! any element is therefore independent of the matrix sizes and of the tile
//! it lands in, which is what keeps patch-wise and frame-wise outputs
//! bit-identical.

use super::Float;

const MR: usize = 4;
const NR: usize = 32;
/// Lanes per accumulator chunk: one 512-bit register of `f32`.
const L: usize = 16;

/// Strided read-only matrix view.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a, F> {
    pub data: &'a [F],
    pub rs: usize,
    pub cs: usize,
}

impl<'a, F: Copy> Mat<'a, F> {
    pub fn rows(data: &'a [F], cols: usize) -> Self {
        Self { data, rs: cols, cs: 1 }
    }

    /// Transposed view of a row-major matrix with `cols` columns.
    pub fn transposed(data: &'a [F], cols: usize) -> Self {
        Self { data, rs: 1, cs: cols }
    }

    #[inline(always)]
    fn at(&self, r: usize, c: usize) -> F {
        self.data[r * self.rs + c * self.cs]
    }
}

/// `c[m][n] += Σ_k a[m][k] · b[k][n]` with `b` and `c` row-major.
///
/// Ragged edges (fewer than `MR` rows, or a last column block narrower than
/// `L`) run through the same register tiles on zero-padded copies; padded
/// lanes are discarded, so every element still sees the same sequence of
/// operations.
pub(crate) fn gemm_acc<F: Float>(m: usize, n: usize, k: usize, a: Mat<'_, F>, b: &[F], c: &mut [F]) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    debug_assert!(b.len() >= k * n && c.len() >= m * n);
    let b = &b[..k * n];
    let full = n - n % L;
    let rem = n - full;
    // Last `rem` columns of B, widened to `L`.
    let mut bpad = vec![F::zero(); if rem > 0 { k * L } else { 0 }];
    for (dst, src) in bpad.chunks_exact_mut(L).zip(b.chunks_exact(n)) {
        dst[..rem].copy_from_slice(&src[full..]);
    }
    let mut panel = vec![F::zero(); k * MR];
    let mut spare = Vec::new();
    let mut i = 0;
    while i < m {
        let rows = MR.min(m - i);
        // Pack the rows of A as [k][MR] so the kernel streams it.
        for (kk, dst) in panel.chunks_exact_mut(MR).enumerate() {
            for (r, d) in dst.iter_mut().enumerate() {
                *d = if r < rows { a.at(i + r, kk) } else { F::zero() };
            }
        }
        let block = &mut c[i * n..(i + rows) * n];
        if rows == MR {
            row_block(&panel, b, n, full, rem, &bpad, block);
        } else {
            spare.clear();
            spare.extend_from_slice(block);
            spare.resize(MR * n, F::zero());
            row_block(&panel, b, n, full, rem, &bpad, &mut spare);
            block.copy_from_slice(&spare[..rows * n]);
        }
        i += MR;
    }
}

/// One `MR`-row block of C.
#[inline(always)]
fn row_block<F: Float>(panel: &[F], b: &[F], n: usize, full: usize, rem: usize, bpad: &[F], c: &mut [F]) {
    let mut j = 0;
    while j + NR <= full {
        tile_full::<F, NR>(j, n, panel, b, c);
        j += NR;
    }
    if j < full {
        tile_full::<F, L>(j, n, panel, b, c);
    }
    if rem > 0 {
        let mut t = [F::zero(); MR * L];
        for (dst, src) in t.chunks_exact_mut(L).zip(c.chunks_exact(n)) {
            dst[..rem].copy_from_slice(&src[full..]);
        }
        tile_full::<F, L>(0, L, panel, bpad, &mut t);
        for (src, dst) in t.chunks_exact(L).zip(c.chunks_exact_mut(n)) {
            dst[full..].copy_from_slice(&src[..rem]);
        }
    }
}

#[inline(always)]
fn axpy<F: Float>(acc: &mut [F; L], a: F, b: &[F; L]) {
    for (x, &y) in acc.iter_mut().zip(b) {
        *x += a * y;
    }
}

/// `C[.., j..j+W] += panel · B[.., j..j+W]` for one row block, `W` a
/// multiple of `L`, with the accumulators held as `MR · W/L` chunks.
/// Kept out of line so it vectorizes the same way whatever the caller.
#[inline(never)]
fn tile_full<F: Float, const W: usize>(j: usize, n: usize, panel: &[F], b: &[F], c: &mut [F]) {
    const { assert!(W % L == 0 && W <= NR) };
    let h = W / L;
    let k = panel.len() / MR;
    let mut acc = [[[F::zero(); L]; NR / L]; MR];
    for r in 0..MR {
        for q in 0..h {
            acc[r][q] = c[r * n + j + q * L..][..L].try_into().expect("L slice");
        }
    }
    for kk in 0..k {
        let av: [F; MR] = panel[kk * MR..kk * MR + MR].try_into().expect("MR slice");
        let row = &b[kk * n + j..kk * n + j + W];
        for q in 0..h {
            let bv: &[F; L] = row[q * L..(q + 1) * L].try_into().expect("L slice");
            for r in 0..MR {
                axpy(&mut acc[r][q], av[r], bv);
            }
        }
    }
    for r in 0..MR {
        for q in 0..h {
            c[r * n + j + q * L..][..L].copy_from_slice(&acc[r][q]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_sequential_sum_bit_for_bit() {
        for &(m, n, k) in &[(9, 61, 13), (3, 3, 40), (4, 8, 1), (1, 70, 5), (6, 14, 9)] {
            let a: Vec<f32> = (0..m * k).map(|v| ((v * 7919) % 101) as f32 / 37.0 - 1.3).collect();
            let b: Vec<f32> = (0..k * n).map(|v| ((v * 104729) % 89) as f32 / 41.0 - 1.1).collect();
            let c0: Vec<f32> = (0..m * n).map(|v| (v % 5) as f32 * 0.1).collect();
            let mut c = c0.clone();
            gemm_acc(m, n, k, Mat::rows(&a, k), &b, &mut c);
            for r in 0..m {
                for col in 0..n {
                    let mut s = c0[r * n + col];
                    for kk in 0..k {
                        s += a[r * k + kk] * b[kk * n + col];
                    }
                    assert_eq!(c[r * n + col], s, "{m}x{n}x{k} at ({r}, {col})");
                }
            }
            // Transposed A view.
            let at: Vec<f32> = (0..k * m).map(|v| a[(v % m) * k + v / m]).collect();
            let mut c2 = c0.clone();
            gemm_acc(m, n, k, Mat::transposed(&at, m), &b, &mut c2);
            assert_eq!(c, c2);
        }
    }
}

#[cfg(test)]
mod bench {
    use super::*;
    #[test]
    #[ignore]
    fn shapes() {
        let run = |name: &str, m: usize, n: usize, k: usize, trans: bool| {
            let a = vec![0.5f32; m * k];
            let b = vec![0.25f32; k * n];
            let mut c = vec![0f32; m * n];
            let t0 = std::time::Instant::now();
            for _ in 0..100 {
                let av = if trans { Mat::transposed(&a, m) } else { Mat::rows(&a, k) };
                gemm_acc(m, n, k, av, &b, &mut c);
            }
            let dt = t0.elapsed().as_secs_f64() / 100.0;
            println!("{name} {:.3} ms {:.1} GMAC/s", dt * 1e3, (m * n * k) as f64 / dt / 1e9);
        };
        run("fwd", 256, 256, 64, false);
        run("dx ", 256, 64, 256, false);
        run("dw ", 256, 64, 256, true);
    }
}
