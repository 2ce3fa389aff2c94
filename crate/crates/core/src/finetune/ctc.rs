use std::rc::Rc;

use crate::tensor::Tensor;
use crate::{Error, Result};

fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Fewest frames that can emit `target`: one per label plus a blank between
/// each pair of equal neighbours.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

fn extended(target: &[usize], blank: usize) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(blank);
    for &l in target {
        ext.push(l);
        ext.push(blank);
    }
    ext
}

// Whether state `s` may be entered from `s - 2` (skipping a blank).
fn can_skip(ext: &[usize], s: usize, blank: usize) -> bool {
    s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]
}

struct Lattice {
    ext: Vec<usize>,
    alpha: Vec<f64>,
    log_p: f64,
}

fn check(lp_len: usize, v: usize, target: &[usize], blank: usize) -> Result<usize> {
    if v == 0 || !lp_len.is_multiple_of(v) {
        return Err(Error::Argument(format!("{lp_len} log-probs do not form rows of {v}")));
    }
    if blank >= v {
        return Err(Error::Argument(format!("blank id {blank} outside vocabulary of {v}")));
    }
    if let Some(&bad) = target.iter().find(|&&l| l >= v || l == blank) {
        return Err(Error::Argument(format!("target label {bad} is blank or outside vocabulary of {v}")));
    }
    let t = lp_len / v;
    let needed = min_frames(target);
    if t < needed {
        return Err(Error::InfeasibleAlignment { frames: t, needed });
    }
    Ok(t)
}

fn forward(lp: &[f64], t_len: usize, v: usize, target: &[usize], blank: usize) -> Lattice {
    let ext = extended(target, blank);
    let s_len = ext.len();
    let mut alpha = vec![f64::NEG_INFINITY; t_len * s_len];
    alpha[0] = lp[blank];
    if s_len > 1 {
        alpha[1] = lp[ext[1]];
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let prev = &alpha[(t - 1) * s_len..t * s_len];
            let mut a = prev[s];
            if s >= 1 {
                a = lse2(a, prev[s - 1]);
            }
            if can_skip(&ext, s, blank) {
                a = lse2(a, prev[s - 2]);
            }
            alpha[t * s_len + s] = a + lp[t * v + ext[s]];
        }
    }
    let last = &alpha[(t_len - 1) * s_len..];
    let log_p = if s_len > 1 {
        lse2(last[s_len - 1], last[s_len - 2])
    } else {
        last[0]
    };
    Lattice { ext, alpha, log_p }
}

/// `log p(target | frames)` for row-major `[T, V]` log-probabilities.
pub fn ctc_log_likelihood(log_probs: &[f64], v: usize, target: &[usize], blank: usize) -> Result<f64> {
    let t = check(log_probs.len(), v, target, blank)?;
    Ok(forward(log_probs, t, v, target, blank).log_p)
}

/// CTC negative log-likelihood of `target` under per-frame log-probabilities
/// `[T, V]`. The gradient with respect to the log-probabilities is the
/// negated state occupancy from the forward-backward recursion.
pub fn ctc_loss(log_probs: &Tensor, target: &[usize], blank: usize) -> Result<Tensor> {
    if log_probs.shape().len() != 2 {
        return Err(Error::Argument(format!(
            "ctc_loss expects [T, V] log-probs, got {:?}",
            log_probs.shape()
        )));
    }
    let v = log_probs.cols();
    let lp = log_probs.to_vec();
    let t_len = check(lp.len(), v, target, blank)?;
    let lat = Rc::new(forward(&lp, t_len, v, target, blank));
    let lp = Rc::new(lp);
    let target_len = target.len();
    let fwd = Rc::clone(&lat);
    Ok(Tensor::from_op(
        vec![-lat.log_p],
        vec![1],
        vec![log_probs.clone()],
        Box::new(move |g, p| {
            let Lattice { ext, alpha, log_p } = &*fwd;
            if !log_p.is_finite() {
                return;
            }
            let s_len = ext.len();
            let mut grad = vec![0.0; t_len * v];
            // beta[s] at frame t excludes the emission at t.
            let mut beta = vec![f64::NEG_INFINITY; s_len];
            beta[s_len - 1] = 0.0;
            if target_len > 0 {
                beta[s_len - 2] = 0.0;
            }
            for t in (0..t_len).rev() {
                for s in 0..s_len {
                    let occ = alpha[t * s_len + s] + beta[s] - log_p;
                    if occ > f64::NEG_INFINITY {
                        grad[t * v + ext[s]] -= g[0] * occ.exp();
                    }
                }
                if t == 0 {
                    break;
                }
                let emit: Vec<f64> = (0..s_len).map(|s| beta[s] + lp[t * v + ext[s]]).collect();
                for s in 0..s_len {
                    let mut b = emit[s];
                    if s + 1 < s_len {
                        b = lse2(b, emit[s + 1]);
                    }
                    if s + 2 < s_len && can_skip(ext, s + 2, blank) {
                        b = lse2(b, emit[s + 2]);
                    }
                    beta[s] = b;
                }
            }
            p[0].accumulate_grad(&grad);
        }),
    ))
}
