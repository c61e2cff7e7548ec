//! Pruning, quantization, entropy coding and the container format.

use hinerv::compress::{
    decode_runs, encode_runs, entropy_decode, entropy_encode, prune, quantize_tensor, Bitstream, FreqModel,
    PruneMask, QuantSpec, MAGIC,
};
use hinerv::{Error, HiNeRV, ModelConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_model(seed: u64) -> HiNeRV {
    let mut cfg = ModelConfig::tiny(4);
    cfg.channels = 16;
    let mut m = HiNeRV::new(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in m.params_mut() {
        for v in t.data_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    m
}

fn pruned_stream(seed: u64, ratio: f64, bits: u8) -> (HiNeRV, PruneMask, Bitstream) {
    let mut m = small_model(seed);
    let mask = prune(&m, None, ratio).unwrap();
    mask.apply(m.params_mut());
    let bs = Bitstream::from_model(&m, Some(&mask), bits).unwrap();
    (m, mask, bs)
}

#[test]
fn round_trip_is_bit_exact() {
    for bits in [2, 6, 8] {
        let (_, mask, bs) = pruned_stream(3, 0.3, bits);
        let (bytes, report) = bs.encode().unwrap();
        assert_eq!(report.total(), bytes.len());
        let (back, report2) = Bitstream::decode(&bytes).unwrap();
        assert_eq!(back, bs);
        assert_eq!(report2, report);
        assert_eq!(back.mask(), mask);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let (a, b) = (bs.to_model().unwrap(), back.to_model().unwrap());
        for (x, y) in a.params().iter().zip(b.params()) {
            assert_eq!(x.data(), y.data());
        }
    }
}

#[test]
fn quantization_error_within_half_step_on_every_tensor() {
    let m = small_model(5);
    for bits in 2..=8 {
        let bs = Bitstream::from_model(&m, None, bits).unwrap();
        let dq = bs.to_model().unwrap();
        for ((w, d), t) in m.params().iter().zip(dq.params()).zip(&bs.tensors) {
            let half = t.spec.scale as f64 / 2.0;
            for (&a, &b) in w.data().iter().zip(d.data()) {
                // q·scale is itself rounded to f32: allow one ulp of the result.
                let tol = half + (b.abs() as f64) * f32::EPSILON as f64;
                assert!(((a - b) as f64).abs() <= tol, "bits {bits}: {a} -> {b}, scale {}", t.spec.scale);
            }
        }
    }
}

#[test]
fn pruned_weights_cost_nothing_and_decode_to_zero() {
    let (m, mask, bs) = pruned_stream(7, 0.5, 6);
    // Same weights coded densely: pruned zeros would be symbols too.
    let (_, dense) = Bitstream::from_model(&m, None, 6).unwrap().encode().unwrap();
    let (sparse, report) = bs.encode().unwrap();
    let (mut ps, mut pd) = (0, 0);
    for (k, (s, d)) in report.tensors.iter().zip(&dense.tensors).enumerate() {
        if mask.keep(k).is_some() {
            assert!(s.payload <= d.payload, "tensor {k}: {} vs {}", s.payload, d.payload);
            (ps, pd) = (ps + s.payload, pd + d.payload);
        }
    }
    assert!(ps < pd);
    let back = Bitstream::from_bytes(&sparse).unwrap().to_model().unwrap();
    for (k, p) in back.params().iter().enumerate() {
        if let Some(keep) = mask.keep(k) {
            assert!(p.data().iter().zip(keep).all(|(&v, &kp)| kp || v == 0.0));
        }
    }
    assert!((mask.sparsity() - 0.5).abs() < 1e-3);
}

#[test]
fn corrupt_streams_are_rejected() {
    let (_, _, bs) = pruned_stream(1, 0.15, 6);
    let bytes = bs.to_bytes().unwrap();
    let is_bitstream_err = |b: &[u8]| matches!(Bitstream::from_bytes(b), Err(Error::Bitstream(_)));

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(is_bitstream_err(&bad));

    let mut bad = bytes.clone();
    bad[4] = 9;
    let err = Bitstream::from_bytes(&bad).unwrap_err();
    assert!(err.to_string().contains("version 9"), "{err}");
    assert_eq!(err.exit_code(), 4);

    for pos in [20, bytes.len() / 2, bytes.len() - 5, bytes.len() - 1] {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x10;
        assert!(is_bitstream_err(&bad), "flip at {pos}");
    }
    for len in [0, 3, 10, bytes.len() / 3, bytes.len() - 1] {
        assert!(is_bitstream_err(&bytes[..len]), "truncated to {len}");
    }
    assert_eq!(&bytes[..4], MAGIC);
}

#[test]
fn iterated_pruning_follows_geometric_schedule() {
    let mut m = small_model(9);
    let mut mask: Option<PruneMask> = None;
    for k in 1..=5 {
        let next = prune(&m, mask.as_ref(), 0.15).unwrap();
        next.apply(m.params_mut());
        let want = 1.0 - 0.85f64.powi(k);
        // Flooring loses under one weight per round.
        let slack = k as f64 / next.total() as f64;
        assert!(next.sparsity() <= want + 1e-12 && next.sparsity() >= want - slack, "round {k}");
        mask = Some(next);
    }
}

#[test]
fn entropy_coder_on_random_streams() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for alphabet in [2usize, 16, 64, 256] {
        let skew: f64 = rng.random_range(1.0..8.0);
        let symbols: Vec<u32> = (0..100_000)
            .map(|_| ((rng.random::<f64>().powf(skew)) * alphabet as f64) as u32)
            .collect();
        let model = FreqModel::new(&FreqModel::counts(&symbols, alphabet)).unwrap();
        let bytes = entropy_encode(&symbols, &model).unwrap();
        assert_eq!(entropy_decode(&bytes, &model, symbols.len()).unwrap(), symbols);
        assert!(bytes.len() as f64 <= model.entropy_bits() / 8.0 + 64.0);
    }
}

#[test]
fn six_bit_reference_values() {
    let (q, spec) = quantize_tensor(&[1.0, 0.5], 6).unwrap();
    assert_eq!(spec, QuantSpec::new(6, 1.0 / 31.0).unwrap());
    assert_eq!(q, vec![31, 16]);
    assert!((spec.dequantize(16) - 0.5161).abs() < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coder_round_trips(symbols in proptest::collection::vec(0u32..12, 0..2000)) {
        let model = FreqModel::new(&FreqModel::counts(&symbols, 12)).unwrap();
        let bytes = entropy_encode(&symbols, &model).unwrap();
        prop_assert_eq!(entropy_decode(&bytes, &model, symbols.len()).unwrap(), symbols);
    }

    #[test]
    fn mask_runs_round_trip(keep in proptest::collection::vec(any::<bool>(), 0..500)) {
        prop_assert_eq!(decode_runs(&encode_runs(&keep), keep.len()).unwrap(), keep);
    }
}
