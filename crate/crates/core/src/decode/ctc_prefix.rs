use std::collections::HashMap;

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

/// Per-frame CTC log-probabilities, row-major `[T, V]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CtcFrames {
    pub log_probs: Vec<f64>,
    pub vocab: usize,
    pub blank: usize,
}

impl CtcFrames {
    pub fn new(log_probs: Vec<f64>, vocab: usize, blank: usize) -> Result<Self> {
        if vocab == 0 || log_probs.is_empty() || !log_probs.len().is_multiple_of(vocab) || blank >= vocab {
            return Err(Error::Argument(format!(
                "{} log-probs with vocabulary {vocab} and blank {blank}",
                log_probs.len()
            )));
        }
        Ok(Self {
            log_probs,
            vocab,
            blank,
        })
    }

    pub fn frames(&self) -> usize {
        self.log_probs.len() / self.vocab
    }

    fn at(&self, t: usize, k: usize) -> f64 {
        self.log_probs[t * self.vocab + k]
    }
}

// Forward variables of one prefix: paths ending in its last label (`r_n`) or
// in a blank (`r_b`), for every frame.
#[derive(Debug, Clone)]
struct PrefixState {
    r_n: Vec<f64>,
    r_b: Vec<f64>,
}

/// Prefix scores `log Σ p(prefix·…)` computed incrementally, one label at a
/// time, with the forward variables of every scored prefix kept for reuse.
#[derive(Debug, Clone)]
pub struct CtcPrefixCache {
    frames: CtcFrames,
    states: HashMap<Vec<usize>, PrefixState>,
}

impl CtcPrefixCache {
    pub fn new(frames: CtcFrames) -> Self {
        let t_len = frames.frames();
        let mut r_b = vec![0.0; t_len];
        let mut acc = 0.0;
        for (t, rb) in r_b.iter_mut().enumerate() {
            acc += frames.at(t, frames.blank);
            *rb = acc;
        }
        let root = PrefixState {
            r_n: vec![f64::NEG_INFINITY; t_len],
            r_b,
        };
        let mut states = HashMap::new();
        states.insert(Vec::new(), root);
        Self { frames, states }
    }

    pub fn frames(&self) -> &CtcFrames {
        &self.frames
    }

    pub fn contains(&self, prefix: &[usize]) -> bool {
        self.states.contains_key(prefix)
    }

    /// `log p(prefix)` as a complete labeling.
    pub fn final_score(&self, prefix: &[usize]) -> Result<f64> {
        let st = self.state(prefix)?;
        let t = self.frames.frames() - 1;
        Ok(lse2(st.r_n[t], st.r_b[t]))
    }

    fn state(&self, prefix: &[usize]) -> Result<&PrefixState> {
        self.states
            .get(prefix)
            .ok_or_else(|| Error::Contract(format!("prefix {prefix:?} has no cached forward variables")))
    }

    /// Log-probability of all labelings that start with `prefix·c`. The
    /// prefix must already be cached (the empty prefix always is); the
    /// extended prefix is added to the cache.
    pub fn extend(&mut self, prefix: &[usize], c: usize) -> Result<f64> {
        if c >= self.frames.vocab || c == self.frames.blank {
            return Err(Error::Argument(format!("label {c} is blank or outside the vocabulary")));
        }
        let g = self.state(prefix)?;
        let fr = &self.frames;
        let t_len = fr.frames();
        let last = prefix.last().copied();
        let mut r_n = vec![f64::NEG_INFINITY; t_len];
        let mut r_b = vec![f64::NEG_INFINITY; t_len];
        if prefix.is_empty() {
            r_n[0] = fr.at(0, c);
        }
        let mut psi = r_n[0];
        for t in 1..t_len {
            let phi = if last == Some(c) {
                g.r_b[t - 1]
            } else {
                lse2(g.r_b[t - 1], g.r_n[t - 1])
            };
            r_n[t] = lse2(r_n[t - 1], phi) + fr.at(t, c);
            r_b[t] = lse2(r_b[t - 1], r_n[t - 1]) + fr.at(t, fr.blank);
            psi = lse2(psi, phi + fr.at(t, c));
        }
        let mut key = prefix.to_vec();
        key.push(c);
        self.states.insert(key, PrefixState { r_n, r_b });
        Ok(psi)
    }
}
