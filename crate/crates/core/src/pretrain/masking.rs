use rand::seq::index;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{self, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskSpec {
    /// Fraction of timesteps drawn as span starts.
    pub mask_prob: f64,
    pub span_len: usize,
}

impl Default for MaskSpec {
    fn default() -> Self {
        Self {
            mask_prob: 0.08,
            span_len: 10,
        }
    }
}

/// Number of span starts for `t` frames: `ceil(mask_prob * T)`, capped by
/// the number of admissible start positions.
pub fn mask_start_count(t: usize, spec: &MaskSpec) -> usize {
    // the small offset keeps 0.08 * 100 from rounding up to 9
    let n = (spec.mask_prob * t as f64 - 1e-9).ceil().max(0.0) as usize;
    n.min(start_range(t, spec))
}

/// Starts are drawn from `0..=T - span_len` so that every span fits; when a
/// span is at least as long as the sequence the only start is 0.
fn start_range(t: usize, spec: &MaskSpec) -> usize {
    if t > spec.span_len {
        t - spec.span_len + 1
    } else {
        t.min(1)
    }
}

/// Span starts drawn without replacement, in ascending order.
pub fn sample_span_starts(t: usize, spec: &MaskSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if t == 0 {
        return Vec::new();
    }
    let mut starts = index::sample(rng, start_range(t, spec), mask_start_count(t, spec)).into_vec();
    starts.sort_unstable();
    starts
}

/// Sorted union of `[s, min(s + span_len, T))` over `starts`.
pub fn spans_to_mask(t: usize, starts: &[usize], span_len: usize) -> Vec<usize> {
    let mut masked = vec![false; t];
    for &s in starts {
        for m in masked.iter_mut().take((s + span_len).min(t)).skip(s) {
            *m = true;
        }
    }
    (0..t).filter(|&i| masked[i]).collect()
}

/// Masked frame indices for one utterance of `t` frames.
pub fn sample_span_mask(t: usize, spec: &MaskSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
    spans_to_mask(t, &sample_span_starts(t, spec, rng), spec.span_len)
}

/// Replaces the masked frames of `x: [T, d]` with the mask embedding.
pub fn apply_mask(x: &Tensor, masked: &[usize], mask_emb: &Tensor) -> Result<Tensor> {
    tensor::replace_rows(x, masked, mask_emb)
}
