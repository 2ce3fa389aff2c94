//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use speechcode::decode::PrefixScorer;
use speechcode::tensor::{no_grad, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Central finite differences of a scalar `loss` against the analytic
/// gradient. `coords` picks which coordinates of each input to probe (all
/// when `None`). Returns the worst relative error and the number of probes.
pub fn grad_check(
    loss: &dyn Fn() -> Tensor,
    inputs: &[Tensor],
    step: f64,
    floor: f64,
    coords: Option<(usize, &mut ChaCha8Rng)>,
) -> (f64, usize) {
    for t in inputs {
        t.zero_grad();
    }
    loss().backward().expect("backward");
    let grads: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();
    let mut picks: Vec<Vec<usize>> = Vec::new();
    match coords {
        None => picks.extend(inputs.iter().map(|t| (0..t.numel()).collect())),
        Some((k, rng)) => {
            for t in inputs {
                let n = t.numel();
                picks.push(if n <= k {
                    (0..n).collect()
                } else {
                    rand::seq::index::sample(rng, n, k).into_vec()
                });
            }
        }
    }
    let mut worst: f64 = 0.0;
    let mut probes = 0;
    for ((t, g), idx) in inputs.iter().zip(&grads).zip(&picks) {
        for &i in idx {
            let orig = t.data()[i];
            t.data_mut()[i] = orig + step;
            let up = no_grad(|| loss().item());
            t.data_mut()[i] = orig - step;
            let down = no_grad(|| loss().item());
            t.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            worst = worst.max(rel_err(g[i], numeric, floor));
            probes += 1;
        }
    }
    for t in inputs {
        t.zero_grad();
    }
    (worst, probes)
}

/// CTC collapse: merge repeats, then drop blanks.
pub fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != blank {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// Probability of every labeling reachable from `T x V` frame distributions,
/// by enumerating all `V^T` paths.
pub fn ctc_enumerate(log_probs: &[f64], v: usize, blank: usize) -> HashMap<Vec<usize>, f64> {
    let t_len = log_probs.len() / v;
    let mut out: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut path = vec![0usize; t_len];
    loop {
        let p: f64 = path
            .iter()
            .enumerate()
            .map(|(t, &k)| log_probs[t * v + k])
            .sum::<f64>()
            .exp();
        *out.entry(collapse(&path, blank)).or_insert(0.0) += p;
        let mut t = 0;
        loop {
            if t == t_len {
                return out;
            }
            path[t] += 1;
            if path[t] < v {
                break;
            }
            path[t] = 0;
            t += 1;
        }
    }
}

/// Random row-normalized log-probabilities `[T, V]`.
pub fn random_log_probs(rng: &mut ChaCha8Rng, t: usize, v: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(t * v);
    for _ in 0..t {
        let logits: Vec<f64> = (0..v).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        out.extend(logits.iter().map(|x| x - lse));
    }
    out
}

/// Next-token distributions fixed in advance for every prefix up to a length.
pub struct TableScorer {
    pub table: HashMap<Vec<usize>, Vec<f64>>,
}

impl TableScorer {
    /// Random distributions over `vocab` ids for all prefixes over the first
    /// `n_chars` ids of length at most `max_len`.
    pub fn random(rng: &mut ChaCha8Rng, n_chars: usize, vocab: usize, max_len: usize) -> Self {
        let mut table = HashMap::new();
        for prefix in all_sequences(n_chars, max_len) {
            table.insert(prefix, random_log_probs(rng, 1, vocab));
        }
        Self { table }
    }
}

impl PrefixScorer for TableScorer {
    fn next_log_probs(&self, prefix: &[usize]) -> speechcode::Result<Vec<f64>> {
        Ok(self.table[prefix].clone())
    }
}

/// Every sequence over `0..n` of length `0..=max_len`, shortest first.
pub fn all_sequences(n: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for c in 0..n {
                let mut e: Vec<usize> = s.clone();
                e.push(c);
                next.push(e);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}
