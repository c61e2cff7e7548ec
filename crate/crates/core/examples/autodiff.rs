//! A small graph on the autodiff tape, with its gradient checked against
//! central differences.
//!
//! cargo run --example autodiff

use hinerv::tensor::{Graph, Tensor};

fn loss(x: &Tensor<f64>, w: &Tensor<f64>) -> hinerv::Result<(f64, Vec<f64>)> {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let wv = g.param(w.clone());
    let y = g.linear(xv, wv, None)?;
    let y = g.gelu(y);
    let l = g.mean(y);
    g.backward(l)?;
    Ok((g.value(l).data()[0], g.grad(wv).unwrap().to_vec()))
}

fn main() -> hinerv::Result<()> {
    // Two pixels of three channels, mapped to two outputs.
    let x = Tensor::new(vec![1, 2, 3], vec![0.3, -1.2, 0.8, 1.5, 0.1, -0.4])?;
    let w = Tensor::new(vec![2, 3], vec![0.5, -0.3, 0.2, 0.1, 0.7, -0.6])?;
    let (value, grad) = loss(&x, &w)?;
    println!("loss {value:.6}");
    let h = 1e-6;
    for (k, g) in grad.iter().enumerate() {
        let shifted = |d: f64| {
            let mut data = w.data().to_vec();
            data[k] += d;
            loss(&x, &Tensor::new(w.shape().to_vec(), data).unwrap()).unwrap().0
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        println!("dL/dw[{k}] tape {g:+.8}  finite difference {fd:+.8}");
    }
    Ok(())
}
