use crate::tensor::Tensor;

/// Linear warmup over the first `warmup · total` steps, then cosine decay
/// to zero at `total`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub base_lr: f64,
    pub warmup: f64,
    pub total_steps: usize,
}

impl Schedule {
    pub fn warmup_steps(&self) -> usize {
        ((self.warmup * self.total_steps as f64).ceil() as usize).min(self.total_steps)
    }

    pub fn lr(&self, step: usize) -> f64 {
        let warm = self.warmup_steps();
        if step < warm {
            return self.base_lr * (step + 1) as f64 / warm as f64;
        }
        let span = (self.total_steps - warm).max(1) as f64;
        let p = ((step - warm) as f64 / span).min(1.0);
        0.5 * self.base_lr * (1.0 + (std::f64::consts::PI * p).cos())
    }
}

/// Scales `grads` so their global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f32>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = (max_norm / norm) as f32;
        for v in grads.iter_mut().flat_map(|g| g.iter_mut()) {
            *v *= s;
        }
    }
    norm
}

/// Adaptive-moment optimizer with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: u64,
}

impl Adam {
    pub fn new(params: &[Tensor<f32>], beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [Tensor<f32>], grads: &[Vec<f32>], lr: f64) {
        self.t += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = (lr / c1) as f32;
        let c2s = c2.sqrt() as f32;
        let eps = self.eps as f32;
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= step * *m / (v.sqrt() / c2s + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_then_cosine_to_zero() {
        let s = Schedule {
            base_lr: 2e-3,
            warmup: 0.1,
            total_steps: 1000,
        };
        assert_eq!(s.warmup_steps(), 100);
        assert!((s.lr(0) - 2e-5).abs() < 1e-12);
        assert!((s.lr(99) - 2e-3).abs() < 1e-12);
        assert!((s.lr(100) - 2e-3).abs() < 1e-12);
        assert!(s.lr(999) < 1e-7);
        assert!((1..1000).all(|i| i <= 100 || s.lr(i) <= s.lr(i - 1)));
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![Tensor::from_fn(vec![5], |i| i as f32 - 2.0)];
        let before = p.clone();
        let mut opt = Adam::new(&p, 0.9, 0.999, 1e-8);
        for _ in 0..10 {
            opt.step(&mut p, &[vec![0.0; 5]], 1e-2);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![vec![3.0f32, 4.0], vec![12.0]];
        let n = clip_global_norm(&mut g, 1.0);
        assert!((n - 13.0).abs() < 1e-9);
        let after: f64 = g.iter().flatten().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        assert!(after <= 1.0 + 1e-6);
        let mut small = vec![vec![0.1f32]];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0][0], 0.1);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(w) = |w|², gradient 2w, 500 scheduled steps at base lr 1e-2.
        let mut p = vec![Tensor::from_fn(vec![8], |i| 0.1 * (i as f32 - 3.5))];
        let sched = Schedule {
            base_lr: 1e-2,
            warmup: 0.1,
            total_steps: 500,
        };
        let mut opt = Adam::new(&p, 0.9, 0.999, 1e-8);
        for s in 0..500 {
            let g: Vec<f32> = p[0].data().iter().map(|w| 2.0 * w).collect();
            opt.step(&mut p, &[g], sched.lr(s));
        }
        let norm = p[0].data().iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!(norm < 1e-3, "|w| = {norm}");
    }
}
