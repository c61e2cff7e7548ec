//! The gradient-check cases: every differentiable op, then the composed
//! training loss.

use super::gradcheck::{check, random_tensor, weighted_sum, GradReport};
use hinerv::tensor::{Region, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const OP_TOL: f64 = 1e-4;
pub const LOSS_TOL: f64 = 1e-3;

pub type Cases = Vec<(String, GradReport)>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every op case, in a fixed order.
pub fn ops() -> Cases {
    let mut out = Cases::new();
    conv2d_dense_grouped_and_strided(&mut out);
    linear_layer(&mut out);
    layer_norm_all_inputs(&mut out);
    activations(&mut out);
    bilinear_upsample_and_region_resample(&mut out);
    trilinear_sampling_wrt_grid(&mut out);
    structural_and_arithmetic_ops(&mut out);
    out
}

fn conv2d_dense_grouped_and_strided(out: &mut Cases) {
    let mut r = rng(1);
    for &(cin, cout, groups, stride, pad, k) in &[
        (2, 3, 1, 1, 1, 3),
        (4, 4, 4, 1, 1, 3),
        (4, 6, 2, 2, 1, 3),
        (3, 2, 1, 1, 0, 1),
        (3, 10, 1, 1, 1, 3),
        (3, 3, 3, 1, 0, 3),
        (2, 2, 2, 1, 2, 3),
        (3, 3, 3, 2, 1, 3),
    ] {
        let x = random_tensor(&mut r, &[5, 4, cin], -1.0, 1.0);
        let w = random_tensor(&mut r, &[cout, cin / groups, k, k], -1.0, 1.0);
        let b = random_tensor(&mut r, &[cout], -1.0, 1.0);
        let rep = check(&[x, w, b], |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), stride, pad, groups)?;
            weighted_sum(g, y, 9)
        })
        .unwrap();
        out.push((format!("conv2d {cin}->{cout} k{k} groups={groups} stride={stride} pad={pad}"), rep));
    }
}

fn linear_layer(out: &mut Cases) {
    let mut r = rng(2);
    let x = random_tensor(&mut r, &[3, 3, 4], -1.0, 1.0);
    let w = random_tensor(&mut r, &[5, 4], -1.0, 1.0);
    let b = random_tensor(&mut r, &[5], -1.0, 1.0);
    let rep = check(&[x, w, b], |g, v| {
        let y = g.linear(v[0], v[1], Some(v[2]))?;
        weighted_sum(g, y, 3)
    })
    .unwrap();
    out.push(("linear".to_string(), rep));
}

fn layer_norm_all_inputs(out: &mut Cases) {
    let mut r = rng(3);
    let x = random_tensor(&mut r, &[3, 2, 5], -1.0, 1.0);
    let gamma = random_tensor(&mut r, &[5], 0.5, 1.5);
    let beta = random_tensor(&mut r, &[5], -1.0, 1.0);
    let rep = check(&[x, gamma, beta], |g, v| {
        let y = g.layer_norm(v[0], v[1], v[2], 1e-6)?;
        weighted_sum(g, y, 4)
    })
    .unwrap();
    out.push(("layer_norm".to_string(), rep));
}

fn activations(out: &mut Cases) {
    let mut r = rng(4);
    let x = random_tensor(&mut r, &[4, 4, 3], -1.0, 1.0);
    let rep = check(&[x.clone()], |g, v| {
        let y = g.gelu(v[0]);
        weighted_sum(g, y, 5)
    })
    .unwrap();
    out.push(("gelu".to_string(), rep));
    let rep = check(&[x], |g, v| {
        let y = g.sigmoid(v[0]);
        weighted_sum(g, y, 6)
    })
    .unwrap();
    out.push(("sigmoid".to_string(), rep));
}

fn bilinear_upsample_and_region_resample(out: &mut Cases) {
    let mut r = rng(5);
    let x = random_tensor(&mut r, &[3, 4, 2], -1.0, 1.0);
    for scale in [2, 3, 5] {
        let rep = check(&[x.clone()], |g, v| {
            let y = g.bilinear_upsample(v[0], scale)?;
            weighted_sum(g, y, 7)
        })
        .unwrap();
        out.push((format!("bilinear x{scale}"), rep));
    }
    // Interior window of a 6x8 frame, upsampled by 2 and cropped.
    let part = random_tensor(&mut r, &[4, 5, 2], -1.0, 1.0);
    let rep = check(&[part], |g, v| {
        let y = g.resample(v[0], Region::new(1, 2, 4, 5), (6, 8), 2, Region::new(3, 5, 4, 6))?;
        weighted_sum(g, y, 8)
    })
    .unwrap();
    out.push(("resample region".to_string(), rep));
}

fn trilinear_sampling_wrt_grid(out: &mut Cases) {
    let mut r = rng(6);
    let grid = random_tensor(&mut r, &[3, 3, 4, 2], -1.0, 1.0);
    // Dense coordinates touching every cell, including clamped ones.
    let mut coords = Vec::new();
    for t in 0..5 {
        for y in 0..5 {
            for x in 0..6 {
                coords.push([t as f64 * 0.55 - 0.1, y as f64 * 0.51, x as f64 * 0.63]);
            }
        }
    }
    let n = coords.len();
    let rep = check(&[grid], |g, v| {
        let y = g.trilinear_sample(v[0], &coords, &[n])?;
        weighted_sum(g, y, 10)
    })
    .unwrap();
    out.push(("trilinear".to_string(), rep));
}

fn structural_and_arithmetic_ops(out: &mut Cases) {
    let mut r = rng(7);
    let a = random_tensor(&mut r, &[4, 4, 2], -1.0, 1.0);
    let b = random_tensor(&mut r, &[4, 4, 2], 0.5, 1.5);
    let c = random_tensor(&mut r, &[4, 4, 3], -1.0, 1.0);
    let rep = check(&[a, b, c], |g, v| {
        let s = g.add(v[0], v[1])?;
        let d = g.sub(s, v[1])?;
        let m = g.mul(d, v[1])?;
        let q = g.div(m, v[1])?;
        let sc = g.scale(q, -1.5);
        let sh = g.add_scalar(sc, 0.25);
        let ab = g.abs(sh);
        let p = g.add_scalar(ab, 0.1);
        let p = g.pow_scalar(p, 0.7);
        let cat = g.concat_channels(&[p, v[2]])?;
        let cr = g.crop(cat, 1, 0, 2, 4)?;
        let pooled = g.avg_pool2(cat)?;
        let ms = g.mean_spatial(pooled)?;
        let s1 = weighted_sum(g, cr, 11)?;
        let s2 = weighted_sum(g, ms, 12)?;
        let clamped = g.clamp_min(v[2], -0.5);
        let s3 = g.mean(clamped);
        let t = g.add(s1, s2)?;
        g.add(t, s3)
    })
    .unwrap();
    out.push(("arithmetic chain".to_string(), rep));
}

/// MS-SSIM and the composite training loss.
pub fn composite() -> Cases {
    let mut out = Cases::new();
    // 20x20 supports three scales, so every level of the pyramid is covered.
    let mut r = rng(12);
    let p = random_tensor(&mut r, &[20, 20, 3], 0.2, 0.8);
    let t = random_tensor(&mut r, &[20, 20, 3], 0.2, 0.8);
    let rep = check(&[p.clone(), t.clone()], |g, v| hinerv::train::ms_ssim_graph(g, v[0], v[1])).unwrap();
    out.push(("ms-ssim".to_string(), rep));
    // Keep |p - t| well away from the L1 kink so central differences are valid.
    let offs = random_tensor(&mut r, &[20, 20, 3], 0.05, 0.2);
    let t = Tensor::from_fn(vec![20, 20, 3], |i| {
        let d = if i % 2 == 0 { offs.data()[i] } else { -offs.data()[i] };
        p.data()[i] + d
    });
    let rep = check(&[p, t], |g, v| hinerv::train::loss_graph(g, v[0], v[1], 0.7)).unwrap();
    out.push(("l1 + ms-ssim loss".to_string(), rep));
    out
}
