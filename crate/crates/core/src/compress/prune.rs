use crate::error::{Error, Result};
use crate::model::ParamSpec;
use crate::tensor::Tensor;

/// Exponent on the tensor size in the pruning score.
pub const DEFAULT_LAMBDA: f64 = 0.5;

/// Per-tensor keep flags; `None` for tensors that are never pruned.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PruneMask {
    keep: Vec<Option<Vec<bool>>>,
}

impl PruneMask {
    /// Keeps everything; `prunable[k]` marks candidate tensors of length `lens[k]`.
    pub fn full(lens: &[usize], prunable: &[bool]) -> Self {
        Self {
            keep: lens
                .iter()
                .zip(prunable)
                .map(|(&n, &p)| p.then(|| vec![true; n]))
                .collect(),
        }
    }

    pub fn for_specs(specs: &[ParamSpec]) -> Self {
        let lens: Vec<usize> = specs.iter().map(ParamSpec::len).collect();
        let prunable: Vec<bool> = specs.iter().map(|s| s.kind.prunable()).collect();
        Self::full(&lens, &prunable)
    }

    pub fn from_keep(keep: Vec<Option<Vec<bool>>>) -> Self {
        Self { keep }
    }

    pub fn tensors(&self) -> usize {
        self.keep.len()
    }

    pub fn keep(&self, k: usize) -> Option<&[bool]> {
        self.keep.get(k).and_then(|m| m.as_deref())
    }

    /// Elements of the prunable tensors.
    pub fn total(&self) -> usize {
        self.keep.iter().flatten().map(Vec::len).sum()
    }

    pub fn pruned(&self) -> usize {
        self.keep.iter().flatten().flatten().filter(|&&k| !k).count()
    }

    pub fn sparsity(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.pruned() as f64 / n as f64,
        }
    }

    /// Zero every pruned weight.
    pub fn apply(&self, params: &mut [Tensor<f32>]) {
        for (p, m) in params.iter_mut().zip(&self.keep) {
            if let Some(m) = m {
                for (w, &k) in p.data_mut().iter_mut().zip(m) {
                    if !k {
                        *w = 0.0;
                    }
                }
            }
        }
    }

    /// Zero the gradient of every pruned weight.
    pub fn mask_grads(&self, grads: &mut [Vec<f32>]) {
        for (g, m) in grads.iter_mut().zip(&self.keep) {
            if let Some(m) = m {
                for (v, &k) in g.iter_mut().zip(m) {
                    if !k {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    fn check(&self, tensors: &[&[f32]]) -> Result<()> {
        let ok = self.keep.len() == tensors.len()
            && self.keep.iter().zip(tensors).all(|(m, t)| m.as_ref().is_none_or(|m| m.len() == t.len()));
        if ok {
            Ok(())
        } else {
            Err(Error::usage("prune mask does not match the parameter layout"))
        }
    }
}

/// `|θ| / P^λ` per element, with `P` the element count of its own tensor.
pub fn prune_scores(tensors: &[&[f32]], lambda: f64) -> Vec<Vec<f64>> {
    tensors
        .iter()
        .map(|t| {
            let d = (t.len() as f64).powf(lambda);
            t.iter().map(|&w| (w as f64).abs() / d).collect()
        })
        .collect()
}

/// Masks `⌊ratio · remaining⌋` more weights: the lowest-scoring among the
/// prunable elements `mask` still keeps, ties broken by (tensor, index).
pub fn prune_tensors(tensors: &[&[f32]], mask: &PruneMask, ratio: f64, lambda: f64) -> Result<PruneMask> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::config(format!("prune ratio must be in [0, 1), got {ratio}")));
    }
    mask.check(tensors)?;
    let scores = prune_scores(tensors, lambda);
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (k, m) in mask.keep.iter().enumerate() {
        if let Some(m) = m {
            cand.extend(m.iter().enumerate().filter(|(_, &keep)| keep).map(|(i, _)| (scores[k][i], k, i)));
        }
    }
    let n = (ratio * cand.len() as f64).floor() as usize;
    let mut out = mask.clone();
    if n == 0 {
        return Ok(out);
    }
    cand.select_nth_unstable_by(n - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for &(_, k, i) in &cand[..n] {
        out.keep[k].as_mut().expect("candidate tensor is prunable")[i] = false;
    }
    Ok(out)
}

/// One global pruning round over a model's conv and linear weights.
pub fn prune(model: &crate::HiNeRV, mask: Option<&PruneMask>, ratio: f64) -> Result<PruneMask> {
    let base = mask.cloned().unwrap_or_else(|| PruneMask::for_specs(model.specs()));
    let tensors: Vec<&[f32]> = model.params().iter().map(|t| t.data()).collect();
    prune_tensors(&tensors, &base, ratio, DEFAULT_LAMBDA)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_formula_ranks_large_tensor_lower() {
        let big = vec![0.3f32; 10_000];
        let small = vec![0.4f32; 100];
        let s = prune_scores(&[&big, &small], 0.5);
        assert!((s[0][0] - 0.003).abs() < 1e-9);
        assert!((s[1][0] - 0.04).abs() < 1e-9);
        let plain = prune_scores(&[&big], 0.0);
        assert!((plain[0][0] - 0.3).abs() < 1e-7);
    }

    #[test]
    fn exact_count_and_zero_ratio() {
        let w: Vec<f32> = (0..1000).map(|i| (i as f32 - 500.0) / 100.0).collect();
        let mask = PruneMask::full(&[1000], &[true]);
        let m0 = prune_tensors(&[&w], &mask, 0.0, 0.5).unwrap();
        assert_eq!(m0.pruned(), 0);
        let m = prune_tensors(&[&w], &mask, 0.15, 0.5).unwrap();
        assert_eq!(m.pruned(), 150);
        // The 150 smallest magnitudes go first; of the tied pair at distance
        // 75 the lower index goes.
        let keep = m.keep(0).unwrap();
        assert!((0..1000).all(|i| keep[i] == ((i as i64 - 500).abs() > 75 || i == 575)));
        assert!(prune_tensors(&[&w], &mask, 1.0, 0.5).is_err());
    }

    #[test]
    fn equal_magnitudes_smaller_tensor_survives() {
        let a = vec![0.5f32; 400];
        let b = vec![0.5f32; 100];
        let mask = PruneMask::full(&[400, 100], &[true, true]);
        let m = prune_tensors(&[&a, &b], &mask, 0.5, 0.5).unwrap();
        assert_eq!(m.keep(0).unwrap().iter().filter(|&&k| !k).count(), 250);
        assert!(m.keep(1).unwrap().iter().all(|&k| k));
    }

    #[test]
    fn exempt_tensors_untouched_and_masks_apply() {
        let a = vec![0.01f32; 10];
        let b = vec![1.0f32; 10];
        let mask = PruneMask::full(&[10, 10], &[false, true]);
        let m = prune_tensors(&[&a, &b], &mask, 0.5, 0.5).unwrap();
        assert!(m.keep(0).is_none());
        assert_eq!(m.pruned(), 5);
        // Ties resolved by index: the first five go.
        assert_eq!(m.keep(1).unwrap(), &[false, false, false, false, false, true, true, true, true, true]);
        let mut params = vec![Tensor::new(vec![10], a).unwrap(), Tensor::new(vec![10], b).unwrap()];
        m.apply(&mut params);
        assert_eq!(params[1].data()[..5], [0.0; 5]);
        let mut g = vec![vec![1.0; 10], vec![1.0; 10]];
        m.mask_grads(&mut g);
        assert_eq!(g[0], vec![1.0; 10]);
        assert_eq!(g[1].iter().sum::<f32>(), 5.0);
    }
}
