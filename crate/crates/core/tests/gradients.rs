//! Tape gradients against central finite differences in 64-bit.

mod common;

use common::grad_suite::{self, Cases, LOSS_TOL, OP_TOL};
use hinerv::tensor::{Graph, Tensor};

fn assert_all(cases: Cases, tol: f64) {
    for (name, rep) in cases {
        assert!(
            rep.max_rel_err < tol,
            "{name}: max rel err {} over {} elements",
            rep.max_rel_err,
            rep.checked
        );
    }
}

#[test]
fn every_op() {
    assert_all(grad_suite::ops(), OP_TOL);
}

#[test]
fn ms_ssim_and_composite_loss() {
    assert_all(grad_suite::composite(), LOSS_TOL);
}

#[test]
fn tape_rules() {
    let mut g = Graph::<f64>::new();
    let w = g.param(Tensor::from_fn(vec![2, 3], |i| i as f64 - 2.0));
    let s = g.sum(w);
    g.backward(s).unwrap();
    assert_eq!(g.grad(w).unwrap(), &[1.0; 6]);
    assert!(g.backward(s).is_err(), "second backward must be rejected");
    g.zero_grad();
    let sq = g.mul(w, w).unwrap();
    let half = g.sum(sq);
    let half = g.scale(half, 0.5);
    g.backward(half).unwrap();
    assert_eq!(g.grad(w).unwrap(), g.value(w).data());

    let mut g = Graph::<f64>::new();
    let v = g.param(Tensor::zeros(vec![3]));
    assert!(matches!(g.backward(v), Err(hinerv::Error::Usage(_))));
}
