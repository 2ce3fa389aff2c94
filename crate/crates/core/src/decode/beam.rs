use std::cmp::Ordering;

use super::ctc_prefix::{CtcFrames, CtcPrefixCache};
use crate::finetune::{AsrModel, CharVocab};
use crate::tensor::{self, Tensor};
use crate::{Error, Result};

/// Anything that gives next-token log-probabilities over the full character
/// vocabulary after a prefix of character ids.
pub trait PrefixScorer {
    fn next_log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>>;
}

/// The attention decoder of an ASR model conditioned on one utterance.
pub struct AttentionScorer<'a> {
    pub model: &'a AsrModel,
    pub enc_out: &'a Tensor,
}

impl PrefixScorer for AttentionScorer<'_> {
    fn next_log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        self.model.next_token_log_probs(prefix, self.enc_out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub beam: usize,
    pub ctc_weight: f64,
    pub lm_weight: f64,
    /// Maximum number of characters before EOS is forced.
    pub max_len: usize,
    /// Added once per emitted character.
    pub length_penalty: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            beam: 4,
            ctc_weight: 0.3,
            lm_weight: 0.0,
            max_len: 64,
            length_penalty: 0.0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam == 0 {
            return Err(Error::Argument("beam must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.ctc_weight) {
            return Err(Error::Argument(format!("ctc weight {} outside [0, 1]", self.ctc_weight)));
        }
        if !(self.lm_weight >= 0.0) {
            return Err(Error::Argument(format!("lm weight {} is negative", self.lm_weight)));
        }
        Ok(())
    }
}

// A zero weight silences its term even when the term is -inf.
fn weighted(w: f64, x: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * x
    }
}

/// A (partial or finished) hypothesis. `tokens` holds character ids; a
/// finished hypothesis has had EOS scored but does not store it.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub att_logp: f64,
    /// Prefix score while active, full-labeling score once finished.
    pub ctc_logp: f64,
    pub lm_logp: f64,
    pub score: f64,
    pub finished: bool,
    /// EOS was appended because `max_len` was reached.
    pub forced: bool,
}

impl Hypothesis {
    pub fn combine(cfg: &SearchConfig, att: f64, ctc: f64, lm: f64, len: usize) -> f64 {
        weighted(1.0 - cfg.ctc_weight, att)
            + weighted(cfg.ctc_weight, ctc)
            + weighted(cfg.lm_weight, lm)
            + cfg.length_penalty * len as f64
    }

    pub fn recompute(&self, cfg: &SearchConfig) -> f64 {
        Self::combine(cfg, self.att_logp, self.ctc_logp, self.lm_logp, self.tokens.len())
    }
}

fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.tokens.cmp(&b.tokens))
        .then_with(|| a.finished.cmp(&b.finished))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// Best first, at most `beam` entries.
    pub nbest: Vec<Hypothesis>,
    /// Some hypothesis had EOS forced at `max_len`.
    pub forced: bool,
}

impl SearchResult {
    pub fn best(&self) -> Option<&Hypothesis> {
        self.nbest.first()
    }
}

/// Beam search over characters with the joint score
/// `(1-λ_ctc)·att + λ_ctc·ctc + λ_lm·lm`. Each step expands every active
/// hypothesis by all characters and EOS, keeps the `beam` best candidates
/// and retires those ending in EOS. Search stops once no active hypothesis
/// can beat the `beam`-th finished one; without a positive length penalty
/// every term only decreases as a prefix grows, so this is exact.
pub fn joint_beam_search(
    att: &dyn PrefixScorer,
    ctc: Option<&CtcFrames>,
    lm: Option<&dyn PrefixScorer>,
    vocab: &CharVocab,
    cfg: &SearchConfig,
) -> Result<SearchResult> {
    cfg.validate()?;
    if cfg.ctc_weight > 0.0 && ctc.is_none() {
        return Err(Error::Argument("ctc weight is positive but no CTC frames were given".into()));
    }
    if cfg.lm_weight > 0.0 && lm.is_none() {
        return Err(Error::Argument("lm weight is positive but no language model was given".into()));
    }
    let mut cache = ctc.map(|f| CtcPrefixCache::new(f.clone()));
    let eos = vocab.eos();
    let mut active = vec![Hypothesis {
        tokens: Vec::new(),
        att_logp: 0.0,
        ctc_logp: 0.0,
        lm_logp: 0.0,
        score: 0.0,
        finished: false,
        forced: false,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    let mut any_forced = false;

    while !active.is_empty() {
        let mut candidates = Vec::new();
        for hyp in &active {
            let att_lp = att.next_log_probs(&hyp.tokens)?;
            let lm_lp = match lm {
                Some(m) => Some(m.next_log_probs(&hyp.tokens)?),
                None => None,
            };
            for len_check in [att_lp.len()].into_iter().chain(lm_lp.as_ref().map(Vec::len)) {
                if len_check != vocab.size() {
                    return Err(Error::Contract(format!(
                        "scorer returned {len_check} log-probs for a vocabulary of {}",
                        vocab.size()
                    )));
                }
            }
            let at_limit = hyp.tokens.len() >= cfg.max_len;
            let labels: Vec<usize> = if at_limit {
                vec![eos]
            } else {
                (0..vocab.n_chars()).chain([eos]).collect()
            };
            for c in labels {
                let is_eos = c == eos;
                let ctc_logp = match cache.as_mut() {
                    Some(cache) if is_eos => cache.final_score(&hyp.tokens)?,
                    Some(cache) => cache.extend(&hyp.tokens, c)?,
                    None => 0.0,
                };
                let att_logp = hyp.att_logp + att_lp[c];
                let lm_logp = hyp.lm_logp + lm_lp.as_ref().map_or(0.0, |l| l[c]);
                let mut tokens = hyp.tokens.clone();
                if !is_eos {
                    tokens.push(c);
                }
                let score = Hypothesis::combine(cfg, att_logp, ctc_logp, lm_logp, tokens.len());
                candidates.push(Hypothesis {
                    tokens,
                    att_logp,
                    ctc_logp,
                    lm_logp,
                    score,
                    finished: is_eos,
                    forced: is_eos && at_limit,
                });
            }
        }
        candidates.sort_by(rank);
        candidates.truncate(cfg.beam);
        active.clear();
        for c in candidates {
            if c.finished {
                any_forced |= c.forced;
                finished.push(c);
            } else {
                active.push(c);
            }
        }
        finished.sort_by(rank);
        finished.truncate(cfg.beam);
        if cfg.length_penalty <= 0.0 && finished.len() >= cfg.beam {
            let worst_kept = finished[cfg.beam - 1].score;
            if active.iter().all(|h| h.score <= worst_kept) {
                break;
            }
        }
    }
    if any_forced {
        log::warn!("beam search reached max_len {} and forced EOS", cfg.max_len);
    }
    Ok(SearchResult {
        nbest: finished,
        forced: any_forced,
    })
}

/// Encodes one waveform and runs the joint search with the model's decoder,
/// its CTC head and an optional LM.
pub fn decode_utterance(
    model: &AsrModel,
    lm: Option<&dyn PrefixScorer>,
    samples: &[f64],
    cfg: &SearchConfig,
) -> Result<SearchResult> {
    let (enc, lp) = tensor::no_grad(|| -> Result<(Tensor, Tensor)> {
        let enc = model.encode(samples)?;
        let lp = model.ctc_log_probs(&enc)?;
        Ok((enc, lp))
    })?;
    let frames = CtcFrames::new(lp.to_vec(), lp.cols(), model.vocab.blank())?;
    let scorer = AttentionScorer { model, enc_out: &enc };
    joint_beam_search(&scorer, Some(&frames), lm, &model.vocab, cfg)
}
