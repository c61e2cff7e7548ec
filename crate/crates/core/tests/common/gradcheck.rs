//! Central finite-difference oracle for the autodiff engine (64-bit).

use hinerv::tensor::{Graph, Tensor, Var};
use hinerv::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Worst elementwise `|analytic - fd| / (|fd| + 1e-8)` over every input.
#[derive(Debug, Clone, Copy)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub checked: usize,
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

/// Reduce any output to a scalar with fixed random weights so every output
/// element contributes with an O(1) coefficient.
pub fn weighted_sum(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var> {
    let n = g.value(out).len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let y = g.mul_const(out, w)?;
    Ok(g.sum(y))
}

/// Compare the tape gradient of `f` with central differences for every
/// element of every input. `f` receives the input leaves in order and must
/// return a scalar node.
pub fn check<G>(inputs: &[Tensor<f64>], f: G) -> Result<GradReport>
where
    G: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).data()[0])
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).map(|d| d.to_vec()).unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();

    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        for k in 0..input.len() {
            let x0 = input.data()[k];
            let eps = 1e-4 * x0.abs().max(1.0);
            work[i].data_mut()[k] = x0 + eps;
            let up = eval(&work)?;
            work[i].data_mut()[k] = x0 - eps;
            let down = eval(&work)?;
            work[i].data_mut()[k] = x0;
            let fd = (up - down) / (2.0 * eps);
            let rel = (analytic[i][k] - fd).abs() / (fd.abs() + 1e-8);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    Ok(GradReport {
        max_rel_err: worst,
        checked,
    })
}
