use super::beam::PrefixScorer;
use crate::finetune::CharVocab;
use crate::nets::{ArchConfig, Decoder, Linear};
use crate::params::{rng_for, ParamStore};
use crate::tensor::{self, Adam, AdamConfig, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LmConfig {
    pub layers: usize,
    pub d_model: usize,
    pub d_ffn: usize,
    pub n_heads: usize,
    pub rel_pos_max_distance: usize,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            layers: 1,
            d_model: 32,
            d_ffn: 64,
            n_heads: 2,
            rel_pos_max_distance: 16,
            steps: 200,
            lr: 3e-3,
            seed: 0,
        }
    }
}

impl LmConfig {
    fn arch(&self) -> ArchConfig {
        ArchConfig {
            enc_layers: 0,
            dec_layers: self.layers,
            d_model: self.d_model,
            d_ffn: self.d_ffn,
            n_heads: self.n_heads,
            rel_pos_max_distance: self.rel_pos_max_distance,
            n_codes: 2,
            code_embed_dim: 1,
        }
    }
}

/// Character embedding, causal Transformer stack and output projection.
#[derive(Debug, Clone)]
pub struct CharLM {
    pub store: ParamStore,
    pub embed: Tensor,
    pub stack: Decoder,
    pub out: Linear,
    pub vocab: CharVocab,
    pub config: LmConfig,
}

impl CharLM {
    pub fn new(cfg: &LmConfig, vocab: CharVocab) -> Result<Self> {
        let arch = cfg.arch();
        arch.validate().map_err(Error::Config)?;
        let mut rng = rng_for(cfg.seed, "init.lm");
        let mut store = ParamStore::new();
        let v = vocab.size();
        let embed = store.uniform("lm.embed", &[v, cfg.d_model], 1.0, &mut rng)?;
        let stack = Decoder::new(&mut store, "lm.stack", &arch, cfg.layers, false, &mut rng)?;
        let out = Linear::new(&mut store, "lm.out", cfg.d_model, v, true, &mut rng)?;
        Ok(Self {
            store,
            embed,
            stack,
            out,
            vocab,
            config: cfg.clone(),
        })
    }

    /// Logits `[N, V]` for inputs starting with BOS.
    pub fn logits(&self, tokens_in: &[usize]) -> Result<Tensor> {
        let x = tensor::index_rows(&self.embed, tokens_in)?;
        let h = self.stack.forward(&x, None)?;
        Ok(self.out.forward(&h)?)
    }

    /// Mean teacher-forced cross-entropy of `text` followed by EOS.
    pub fn sentence_loss(&self, ids: &[usize]) -> Result<Tensor> {
        let mut tokens_in = vec![self.vocab.bos()];
        tokens_in.extend(ids);
        let mut targets = ids.to_vec();
        targets.push(self.vocab.eos());
        let lp = tensor::log_softmax(&self.logits(&tokens_in)?);
        Ok(tensor::cross_entropy(&lp, &targets, None)?)
    }

    /// Per-character perplexity over `texts`, EOS included.
    pub fn perplexity(&self, texts: &[Vec<usize>]) -> Result<f64> {
        let (mut nll, mut n) = (0.0, 0usize);
        tensor::no_grad(|| -> Result<()> {
            for ids in texts {
                nll += self.sentence_loss(ids)?.item() * (ids.len() + 1) as f64;
                n += ids.len() + 1;
            }
            Ok(())
        })?;
        Ok((nll / n.max(1) as f64).exp())
    }
}

impl PrefixScorer for CharLM {
    fn next_log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        let mut tokens = vec![self.vocab.bos()];
        tokens.extend_from_slice(prefix);
        let logits = tensor::no_grad(|| self.logits(&tokens))?;
        let v = logits.cols();
        let last = logits.data()[(tokens.len() - 1) * v..].to_vec();
        Ok(tensor::log_softmax(&Tensor::new(last, &[v])?).to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmTrainReport {
    pub initial_perplexity: f64,
    pub final_perplexity: f64,
}

/// Trains a fresh LM on every transcript per step (full-batch Adam).
pub fn train_char_lm(transcripts: &[String], vocab: &CharVocab, cfg: &LmConfig) -> Result<(CharLM, LmTrainReport)> {
    if transcripts.is_empty() {
        return Err(Error::Argument("cannot train a language model on an empty corpus".into()));
    }
    let texts = transcripts
        .iter()
        .map(|t| vocab.encode(t))
        .collect::<Result<Vec<_>>>()?;
    let lm = CharLM::new(cfg, vocab.clone())?;
    let initial_perplexity = lm.perplexity(&texts)?;
    let mut opt = Adam::new(AdamConfig::default());
    for step in 0..cfg.steps {
        let mut total: Option<Tensor> = None;
        for ids in &texts {
            let l = lm.sentence_loss(ids)?;
            total = Some(match total {
                Some(t) => tensor::add(&t, &l)?,
                None => l,
            });
        }
        let loss = tensor::scale(&total.expect("corpus is non-empty"), 1.0 / texts.len() as f64);
        if !loss.item().is_finite() {
            return Err(Error::NonFinite {
                step,
                detail: format!("lm loss {}", loss.item()),
            });
        }
        lm.store.zero_grad();
        loss.backward()?;
        opt.step(lm.store.iter(), cfg.lr)?;
        lm.store.zero_grad();
    }
    let final_perplexity = lm.perplexity(&texts)?;
    Ok((
        lm,
        LmTrainReport {
            initial_perplexity,
            final_perplexity,
        },
    ))
}
