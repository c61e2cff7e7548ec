//! PSNR and multi-scale SSIM, both as plain functions (evaluation) and, for
//! MS-SSIM, as a differentiable graph (the training loss).

use crate::error::{Error, Result};
use crate::tensor::{Float, Graph, Tensor, Var};

/// Reported PSNR for identical signals.
pub const PSNR_CAP: f64 = 100.0;

pub const SSIM_WINDOW: usize = 5;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 1e-4; // (0.01 * 1)^2
const C2: f64 = 9e-4; // (0.03 * 1)^2
/// Standard five-scale exponents.
const SCALE_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
/// Floor applied to per-scale terms before the fractional powers.
const TERM_FLOOR: f64 = 1e-8;

pub fn mse(pred: &[f32], target: &[f32]) -> f64 {
    let n = pred.len().max(1) as f64;
    pred.iter()
        .zip(target)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum::<f64>()
        / n
}

/// `10 log10(peak² / mse)`, capped at [`PSNR_CAP`].
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP)
}

pub fn psnr(pred: &[f32], target: &[f32]) -> f64 {
    psnr_from_mse(mse(pred, target), 1.0)
}

/// Number of scales that fit: `min(h, w) >= window · 2^(levels-1)`, at most 5.
pub fn ms_ssim_levels(h: usize, w: usize) -> Result<usize> {
    let side = h.min(w);
    if side < SSIM_WINDOW {
        return Err(Error::usage(format!(
            "MS-SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    Ok((1..=SCALE_WEIGHTS.len())
        .take_while(|&l| side >= SSIM_WINDOW << (l - 1))
        .last()
        .unwrap_or(1))
}

/// Scale exponents renormalised to sum to one over `levels` scales.
pub fn ms_ssim_weights(levels: usize) -> Vec<f64> {
    let w = &SCALE_WEIGHTS[..levels];
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

fn gaussian_1d() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

fn gaussian_2d() -> Vec<f64> {
    let g = gaussian_1d();
    let mut k = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for a in g {
        for b in g {
            k.push(a * b);
        }
    }
    k
}

/// MS-SSIM of two `[h, w, c]` images in `[0, 1]`, averaged over channels.
pub fn ms_ssim(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::usage(format!(
            "MS-SSIM inputs differ in shape: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (h, w, c) = a.hwc()?;
    let levels = ms_ssim_levels(h, w)?;
    let weights = ms_ssim_weights(levels);
    let kernel = gaussian_2d();
    let mut x: Vec<f64> = a.data().iter().map(|&v| v as f64).collect();
    let mut y: Vec<f64> = b.data().iter().map(|&v| v as f64).collect();
    let (mut h, mut w) = (h, w);
    let mut per_channel = vec![1.0f64; c];
    for (l, &wt) in weights.iter().enumerate() {
        let (ssim, cs) = ssim_terms(&x, &y, h, w, c, &kernel);
        let term = if l + 1 == levels { ssim } else { cs };
        for (p, t) in per_channel.iter_mut().zip(term) {
            *p *= t.max(TERM_FLOOR).powf(wt);
        }
        if l + 1 < levels {
            x = pool2(&x, h, w, c);
            y = pool2(&y, h, w, c);
            h /= 2;
            w /= 2;
        }
    }
    Ok(per_channel.iter().sum::<f64>() / c as f64)
}

/// Per-channel mean SSIM and mean contrast-structure over valid windows.
fn ssim_terms(x: &[f64], y: &[f64], h: usize, w: usize, c: usize, k: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut ssim = vec![0.0; c];
    let mut cs = vec![0.0; c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for ky in 0..SSIM_WINDOW {
                    for kx in 0..SSIM_WINDOW {
                        let wgt = k[ky * SSIM_WINDOW + kx];
                        let i = ((oy + ky) * w + ox + kx) * c + ch;
                        let (a, b) = (x[i], y[i]);
                        mx += wgt * a;
                        my += wgt * b;
                        xx += wgt * a * a;
                        yy += wgt * b * b;
                        xy += wgt * a * b;
                    }
                }
                let (sxx, syy, sxy) = (xx - mx * mx, yy - my * my, xy - mx * my);
                let csv = (2.0 * sxy + C2) / (sxx + syy + C2);
                let lum = (2.0 * mx * my + C1) / (mx * mx + my * my + C1);
                cs[ch] += csv;
                ssim[ch] += lum * csv;
            }
        }
    }
    let n = (oh * ow) as f64;
    (ssim.iter().map(|v| v / n).collect(), cs.iter().map(|v| v / n).collect())
}

fn pool2(x: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; ho * wo * c];
    for oy in 0..ho {
        for ox in 0..wo {
            for ch in 0..c {
                let at = |y: usize, x_: usize| x[(y * w + x_) * c + ch];
                out[(oy * wo + ox) * c + ch] = 0.25
                    * (at(2 * oy, 2 * ox) + at(2 * oy, 2 * ox + 1) + at(2 * oy + 1, 2 * ox) + at(2 * oy + 1, 2 * ox + 1));
            }
        }
    }
    out
}

/// Differentiable MS-SSIM of two `[h, w, c]` maps; returns a scalar node.
pub fn ms_ssim_graph<F: Float>(g: &mut Graph<F>, pred: Var, target: Var) -> Result<Var> {
    if g.shape(pred) != g.shape(target) {
        return Err(Error::usage(format!(
            "MS-SSIM inputs differ in shape: {:?} vs {:?}",
            g.shape(pred),
            g.shape(target)
        )));
    }
    let (h, w, c) = g.value(pred).hwc()?;
    let levels = ms_ssim_levels(h, w)?;
    let weights = ms_ssim_weights(levels);
    let k2 = gaussian_2d();
    let kernel = Tensor::from_fn(vec![c, 1, SSIM_WINDOW, SSIM_WINDOW], |i| {
        F::lit(k2[i % (SSIM_WINDOW * SSIM_WINDOW)])
    });
    let kernel = g.constant(kernel);
    let (mut x, mut y) = (pred, target);
    let mut acc: Option<Var> = None;
    for (l, &wt) in weights.iter().enumerate() {
        let blur = |g: &mut Graph<F>, v: Var| g.conv2d(v, kernel, None, 1, 0, c);
        let mx = blur(g, x)?;
        let my = blur(g, y)?;
        let xx = g.mul(x, x)?;
        let yy = g.mul(y, y)?;
        let xy = g.mul(x, y)?;
        let exx = blur(g, xx)?;
        let eyy = blur(g, yy)?;
        let exy = blur(g, xy)?;
        let mx2 = g.mul(mx, mx)?;
        let my2 = g.mul(my, my)?;
        let mxy = g.mul(mx, my)?;
        let sxx = g.sub(exx, mx2)?;
        let syy = g.sub(eyy, my2)?;
        let sxy = g.sub(exy, mxy)?;
        // cs = (2 sxy + C2) / (sxx + syy + C2)
        let num = g.scale(sxy, 2.0);
        let num = g.add_scalar(num, C2);
        let den = g.add(sxx, syy)?;
        let den = g.add_scalar(den, C2);
        let cs_map = g.div(num, den)?;
        let term_map = if l + 1 == levels {
            // luminance = (2 mx my + C1) / (mx² + my² + C1)
            let ln = g.scale(mxy, 2.0);
            let ln = g.add_scalar(ln, C1);
            let ld = g.add(mx2, my2)?;
            let ld = g.add_scalar(ld, C1);
            let lum = g.div(ln, ld)?;
            g.mul(lum, cs_map)?
        } else {
            cs_map
        };
        let term = g.mean_spatial(term_map)?;
        let term = g.clamp_min(term, TERM_FLOOR);
        let term = g.pow_scalar(term, wt);
        acc = Some(match acc {
            None => term,
            Some(a) => g.mul(a, term)?,
        });
        if l + 1 < levels {
            x = g.avg_pool2(x)?;
            y = g.avg_pool2(y)?;
        }
    }
    Ok(g.mean(acc.expect("at least one level")))
}

/// `alpha · L1 + (1 - alpha) · (1 - MS-SSIM)`.
pub fn loss_graph<F: Float>(g: &mut Graph<F>, pred: Var, target: Var, alpha: f64) -> Result<Var> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(format!("loss alpha must be in [0, 1], got {alpha}")));
    }
    let d = g.sub(pred, target)?;
    let d = g.abs(d);
    let l1 = g.mean(d);
    if alpha == 1.0 {
        return Ok(l1);
    }
    let ms = ms_ssim_graph(g, pred, target)?;
    let dis = g.scale(ms, -1.0);
    let dis = g.add_scalar(dis, 1.0);
    let a = g.scale(l1, alpha);
    let b = g.scale(dis, 1.0 - alpha);
    g.add(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(h: usize, w: usize, seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(vec![h, w, 3], |_| rng.random_range(0.0..1.0))
    }

    #[test]
    fn psnr_reference_values() {
        let a = [0.25f32; 12];
        assert_eq!(psnr(&a, &a), PSNR_CAP);
        assert_eq!(psnr(&[1.0], &[0.0]), 0.0);
        let b = [0.75f32; 12];
        assert!((psnr(&a, &b) - 6.0206).abs() < 1e-4);
        assert!(psnr(&a, &[0.3f32; 12]) > psnr(&a, &[0.4f32; 12]));
    }

    #[test]
    fn level_selection_and_weights() {
        assert_eq!(ms_ssim_levels(32, 32).unwrap(), 3);
        assert_eq!(ms_ssim_levels(64, 48).unwrap(), 4);
        assert_eq!(ms_ssim_levels(1080, 1920).unwrap(), 5);
        assert_eq!(ms_ssim_levels(5, 5).unwrap(), 1);
        assert!(ms_ssim_levels(4, 40).is_err());
        let w = ms_ssim_weights(3);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_symmetric_and_graph_agrees() {
        let a = random(32, 32, 1);
        let b = random(32, 32, 2);
        assert!((ms_ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let ab = ms_ssim(&a, &b).unwrap();
        assert!((ab - ms_ssim(&b, &a).unwrap()).abs() < 1e-12);
        assert!(ab < 0.5);
        let mut g = Graph::<f64>::new();
        let (pa, pb) = (g.constant(a.cast()), g.constant(b.cast()));
        let v = ms_ssim_graph(&mut g, pa, pb).unwrap();
        assert!((g.value(v).data()[0] - ab).abs() < 1e-10);
    }

    #[test]
    fn loss_edge_cases() {
        let a = random(16, 16, 3);
        let b = random(16, 16, 4);
        let mut g = Graph::<f64>::new();
        let (pa, pb) = (g.constant(a.cast()), g.constant(b.cast()));
        let same = loss_graph(&mut g, pa, pa, 0.7).unwrap();
        assert!(g.value(same).data()[0].abs() < 1e-12);
        let l1 = loss_graph(&mut g, pa, pb, 1.0).unwrap();
        let mae: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (*x as f64 - *y as f64).abs())
            .sum::<f64>()
            / a.len() as f64;
        assert!((g.value(l1).data()[0] - mae).abs() < 1e-12);
        assert!(loss_graph(&mut g, pa, pb, 1.5).is_err());
    }
}
