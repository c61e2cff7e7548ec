use super::interp::{AxisSampler, TriSample};
use super::{Float, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Recorded operation plus whatever the backward pass needs beyond the input values.
pub(crate) enum Op<F> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        groups: usize,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<F>,
        rstd: Vec<F>,
    },
    Gelu(Var),
    Sigmoid(Var),
    ClampMin(Var, F),
    Abs(Var),
    PowScalar(Var, F),
    Resample {
        x: Var,
        rows: AxisSampler,
        cols: AxisSampler,
    },
    Trilinear {
        grid: Var,
        samples: Vec<TriSample>,
    },
    Concat(Vec<Var>),
    Crop {
        x: Var,
        y0: usize,
        x0: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, F),
    AddScalar(Var),
    MulConst(Var, Vec<F>),
    Sum(Var),
    Mean(Var),
    MeanSpatial(Var),
    AvgPool2(Var),
}

impl<F> Op<F> {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Conv2d { x, w, b, .. } | Linear { x, w, b } => {
                let mut v = vec![*x, *w];
                v.extend(b.iter().copied());
                v
            }
            LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Gelu(x) | Sigmoid(x) | ClampMin(x, _) | Abs(x) | PowScalar(x, _) | Scale(x, _)
            | AddScalar(x) | MulConst(x, _) | Sum(x) | Mean(x) | MeanSpatial(x) | AvgPool2(x) => {
                vec![*x]
            }
            Resample { x, .. } | Crop { x, .. } => vec![*x],
            Trilinear { grid, .. } => vec![*grid],
            Concat(v) => v.clone(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => vec![*a, *b],
        }
    }
}

/// Define-by-run tape. Nodes are appended in evaluation order, so reverse
/// insertion order is a valid topological order for backward.
pub struct Graph<F> {
    pub(crate) values: Vec<Tensor<F>>,
    pub(crate) ops: Vec<Op<F>>,
    pub(crate) requires_grad: Vec<bool>,
    pub(crate) grads: Vec<Option<Vec<F>>>,
    backward_done: bool,
}

impl<F: Float> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Float> Graph<F> {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            ops: Vec::new(),
            requires_grad: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<F>) -> Var {
        self.push_leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> Var {
        self.values.push(value);
        self.ops.push(Op::Leaf);
        self.requires_grad.push(requires_grad);
        self.grads.push(None);
        Var(self.values.len() - 1)
    }

    pub(crate) fn push(&mut self, value: Tensor<F>, op: Op<F>) -> Var {
        let rg = op.inputs().iter().any(|v| self.requires_grad[v.0]);
        self.values.push(value);
        self.ops.push(op);
        self.requires_grad.push(rg);
        self.grads.push(None);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.0].shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.requires_grad[v.0]
    }

    /// Gradient of a node after [`Graph::backward`]. Intermediate nodes drop
    /// their gradients once consumed; leaves keep them.
    pub fn grad(&self, v: Var) -> Option<&[F]> {
        self.grads[v.0].as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<F>> {
        self.grads[v.0].take()
    }

    /// Clear all gradients so `backward` may run again.
    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
        self.backward_done = false;
    }

    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::usage(
                "backward called twice without zero_grad",
            ));
        }
        if self.values[loss.0].len() != 1 {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.values[loss.0].shape()
            )));
        }
        self.backward_done = true;
        if !self.requires_grad[loss.0] {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![F::one()]);

        for i in (0..=loss.0).rev() {
            if matches!(self.ops[i], Op::Leaf) || !self.requires_grad[i] {
                continue;
            }
            let Some(gout) = self.grads[i].take() else {
                continue;
            };
            let ctx = Ctx {
                values: &self.values,
                requires: &self.requires_grad,
                grads: &mut self.grads,
            };
            dispatch(&self.ops[i], &self.values[i], &gout, ctx);
        }
        Ok(())
    }
}

/// View handed to backward kernels: input values are read-only, gradient
/// buffers are allocated lazily on first accumulation.
pub(crate) struct Ctx<'a, F> {
    pub values: &'a [Tensor<F>],
    pub requires: &'a [bool],
    pub grads: &'a mut [Option<Vec<F>>],
}

impl<F: Float> Ctx<'_, F> {
    pub fn val(&self, v: Var) -> &[F] {
        self.values[v.0].data()
    }

    pub fn wants(&self, v: Var) -> bool {
        self.requires[v.0]
    }

    pub fn acc(&mut self, v: Var) -> &mut [F] {
        let n = self.values[v.0].len();
        self.grads[v.0].get_or_insert_with(|| vec![F::zero(); n])
    }

    /// Mutable gradient of `g` alongside the value of `v`.
    pub fn acc_with(&mut self, g: Var, v: Var) -> (&mut [F], &[F]) {
        let n = self.values[g.0].len();
        let grad = self.grads[g.0].get_or_insert_with(|| vec![F::zero(); n]);
        (grad, self.values[v.0].data())
    }
}

fn dispatch<F: Float>(op: &Op<F>, out: &Tensor<F>, gout: &[F], mut ctx: Ctx<'_, F>) {
    use super::{activation, conv, elementwise, interp, linear, norm, reduce};
    match op {
        Op::Leaf => {}
        Op::Conv2d {
            x,
            w,
            b,
            stride,
            pad,
            groups,
        } => conv::backward(&mut ctx, *x, *w, *b, *stride, *pad, *groups, out.shape(), gout),
        Op::Linear { x, w, b } => linear::backward(&mut ctx, *x, *w, *b, gout),
        Op::LayerNorm {
            x,
            gamma,
            beta,
            mean,
            rstd,
        } => norm::backward(&mut ctx, *x, *gamma, *beta, mean, rstd, gout),
        Op::Gelu(x) => activation::gelu_backward(&mut ctx, *x, gout),
        Op::Sigmoid(x) => activation::sigmoid_backward(&mut ctx, *x, out.data(), gout),
        Op::ClampMin(x, m) => activation::clamp_min_backward(&mut ctx, *x, *m, gout),
        Op::Abs(x) => elementwise::abs_backward(&mut ctx, *x, gout),
        Op::PowScalar(x, p) => elementwise::pow_backward(&mut ctx, *x, *p, gout),
        Op::Resample { x, rows, cols } => interp::resample_backward(&mut ctx, *x, rows, cols, gout),
        Op::Trilinear { grid, samples } => {
            interp::trilinear_backward(&mut ctx, *grid, samples, gout)
        }
        Op::Concat(vs) => elementwise::concat_backward(&mut ctx, vs, gout),
        Op::Crop { x, y0, x0 } => elementwise::crop_backward(&mut ctx, *x, *y0, *x0, out.shape(), gout),
        Op::Add(a, b) => elementwise::add_backward(&mut ctx, *a, *b, gout),
        Op::Sub(a, b) => elementwise::sub_backward(&mut ctx, *a, *b, gout),
        Op::Mul(a, b) => elementwise::mul_backward(&mut ctx, *a, *b, gout),
        Op::Div(a, b) => elementwise::div_backward(&mut ctx, *a, *b, out.data(), gout),
        Op::Scale(x, s) => elementwise::scale_backward(&mut ctx, *x, *s, gout),
        Op::AddScalar(x) => elementwise::scale_backward(&mut ctx, *x, F::one(), gout),
        Op::MulConst(x, c) => elementwise::mul_const_backward(&mut ctx, *x, c, gout),
        Op::Sum(x) => reduce::sum_backward(&mut ctx, *x, F::one(), gout),
        Op::Mean(x) => {
            let n = ctx.val(*x).len().max(1);
            reduce::sum_backward(&mut ctx, *x, F::one() / F::lit(n as f64), gout)
        }
        Op::MeanSpatial(x) => reduce::mean_spatial_backward(&mut ctx, *x, gout),
        Op::AvgPool2(x) => reduce::avg_pool2_backward(&mut ctx, *x, out.shape(), gout),
    }
}
