use std::path::Path;

use super::config::Config;
use crate::audio::{load_wav, read_manifest, Utterance};
use crate::decode::{decode_utterance, wer, PrefixScorer, SearchConfig, SearchResult, WordErrors};
use crate::finetune::{finetune_step, normalize_transcript, AsrExample, AsrModel, CharVocab, FinetuneMetrics};
use crate::params::{rng_for, sub_seed};
use crate::pretrain::{lr_schedule_pretrain, pretrain_step, PretrainExample, PretrainMetrics, PretrainModel};
use crate::quantizer::{frame_features, kmeans_assign, kmeans_fit, CodeSequence, KMeansFit};
use crate::tensor::Adam;
use crate::{Error, Result};

/// Waveforms with their transcripts, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub samples: Vec<Vec<f64>>,
    pub transcripts: Vec<String>,
}

impl Dataset {
    pub fn load(manifest: &Path) -> Result<Self> {
        let entries = read_manifest(manifest)?;
        let mut ds = Self {
            ids: Vec::new(),
            samples: Vec::new(),
            transcripts: Vec::new(),
        };
        for e in entries {
            ds.samples.push(load_wav(&e.wav)?.samples);
            ds.ids.push(e.id());
            ds.transcripts.push(e.transcript);
        }
        Ok(ds)
    }

    pub fn from_utterances(utts: &[Utterance]) -> Self {
        Self {
            ids: utts.iter().map(|u| u.id.clone()).collect(),
            samples: utts.iter().map(|u| u.waveform.samples.clone()).collect(),
            transcripts: utts.iter().map(|u| u.transcript.clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// The first `n` utterances; `n = 0` keeps all.
    pub fn head(&self, n: usize) -> Self {
        let n = if n == 0 { self.len() } else { n.min(self.len()) };
        Self {
            ids: self.ids[..n].to_vec(),
            samples: self.samples[..n].to_vec(),
            transcripts: self.transcripts[..n].to_vec(),
        }
    }

    pub fn normalized_transcripts(&self) -> Vec<String> {
        self.transcripts.iter().map(|t| normalize_transcript(t)).collect()
    }
}

/// Fits k-means on the pooled frame features and assigns every utterance.
pub fn quantize_dataset(cfg: &Config, ds: &Dataset) -> Result<(KMeansFit, Vec<CodeSequence>)> {
    let fc = cfg.features();
    let per_utt: Vec<Vec<Vec<f64>>> = ds.samples.iter().map(|s| frame_features(s, &fc)).collect();
    let pooled: Vec<Vec<f64>> = per_utt.iter().flatten().cloned().collect();
    let fit = kmeans_fit(
        &pooled,
        cfg.n_codes,
        sub_seed(cfg.seed, "kmeans"),
        cfg.kmeans_iters,
        cfg.kmeans_tol,
        &fc.kind(),
    )?;
    let codes = per_utt
        .iter()
        .map(|f| kmeans_assign(&fit.model, f))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((fit, codes))
}

pub fn pretrain_examples(cfg: &Config, ds: &Dataset, codes: &[CodeSequence]) -> Result<Vec<PretrainExample>> {
    if codes.len() != ds.len() {
        return Err(Error::Argument(format!(
            "{} code sequences for {} utterances",
            codes.len(),
            ds.len()
        )));
    }
    Ok(ds
        .samples
        .iter()
        .zip(codes)
        .map(|(s, c)| PretrainExample::new(s.clone(), c, cfg.codes))
        .collect())
}

// Batch `step` cycles through the examples in order.
fn batch_at<T: Clone>(items: &[T], step: usize, size: usize) -> Vec<T> {
    let size = size.max(1);
    (0..size).map(|j| items[(step * size + j) % items.len()].clone()).collect()
}

/// Runs pre-training from `start_step` to `cfg.pretrain_steps`. The mask
/// sampler of each step is seeded from the master seed and the step number,
/// so a resumed run continues exactly like an uninterrupted one.
pub fn run_pretraining(
    cfg: &Config,
    model: &PretrainModel,
    examples: &[PretrainExample],
    opt: &mut Adam,
    start_step: usize,
    mut on_step: impl FnMut(&PretrainMetrics),
) -> Result<Vec<PretrainMetrics>> {
    if examples.is_empty() {
        return Err(Error::Argument("no pre-training examples".into()));
    }
    let mask = cfg.mask_spec();
    let weights = cfg.loss_weights();
    let mut history = Vec::new();
    for step in start_step..cfg.pretrain_steps {
        let batch = batch_at(examples, step, cfg.pretrain_batch);
        let lr = lr_schedule_pretrain(step, cfg.pretrain_steps, cfg.pretrain_lr);
        let mut rng = rng_for(cfg.seed, &format!("mask.{step}"));
        let m = pretrain_step(model, &batch, opt, weights, &mask, lr, cfg.clip_norm, step, &mut rng)?;
        on_step(&m);
        history.push(m);
    }
    Ok(history)
}

pub fn asr_examples(vocab: &CharVocab, ds: &Dataset) -> Result<Vec<AsrExample>> {
    ds.samples
        .iter()
        .zip(ds.normalized_transcripts())
        .map(|(s, t)| {
            Ok(AsrExample {
                samples: s.clone(),
                tokens: vocab.encode(&t)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOutcome {
    pub history: Vec<FinetuneMetrics>,
    /// `(updates done, training-set WER)` at every evaluation.
    pub evals: Vec<(usize, f64)>,
    /// Updates after which the training-set WER first reached 0.
    pub first_zero_wer: Option<usize>,
}

/// Runs fine-tuning from `start_step` to `cfg.finetune_steps`. With
/// `cfg.eval_every > 0` the training set is decoded with `cfg.search()`
/// after every `eval_every` updates.
pub fn run_finetuning(
    cfg: &Config,
    model: &AsrModel,
    examples: &[AsrExample],
    opt: &mut Adam,
    start_step: usize,
    mut on_step: impl FnMut(&FinetuneMetrics),
) -> Result<FinetuneOutcome> {
    if examples.is_empty() {
        return Err(Error::Argument("no fine-tuning examples".into()));
    }
    let ft = cfg.finetune();
    let refs: Vec<String> = examples.iter().map(|e| model.vocab.decode(&e.tokens)).collect();
    let mut out = FinetuneOutcome {
        history: Vec::new(),
        evals: Vec::new(),
        first_zero_wer: None,
    };
    for step in start_step..cfg.finetune_steps {
        let batch = batch_at(examples, step, cfg.finetune_batch);
        let m = finetune_step(model, &batch, opt, &ft, step)?;
        on_step(&m);
        out.history.push(m);
        let done = step + 1;
        if cfg.eval_every > 0 && done % cfg.eval_every == 0 {
            let samples: Vec<Vec<f64>> = examples.iter().map(|e| e.samples.clone()).collect();
            let res = decode_dataset(model, None, &samples, &refs, &cfg.search())?;
            log::info!("step={done} train_wer={:.4}", res.wer);
            out.evals.push((done, res.wer));
            if res.wer == 0.0 && out.first_zero_wer.is_none() {
                out.first_zero_wer = Some(done);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub results: Vec<SearchResult>,
    pub hypotheses: Vec<String>,
    pub wer: f64,
    pub forced: usize,
}

/// Decodes every waveform and scores against `refs` (already normalized).
pub fn decode_dataset(
    model: &AsrModel,
    lm: Option<&dyn PrefixScorer>,
    samples: &[Vec<f64>],
    refs: &[String],
    search: &SearchConfig,
) -> Result<DecodeOutcome> {
    let mut out = DecodeOutcome {
        results: Vec::new(),
        hypotheses: Vec::new(),
        wer: 0.0,
        forced: 0,
    };
    let mut errs = WordErrors::default();
    for (s, r) in samples.iter().zip(refs) {
        let res = decode_utterance(model, lm, s, search)?;
        let hyp = res.best().map(|h| model.vocab.decode(&h.tokens)).unwrap_or_default();
        errs = errs + wer(&hyp, r);
        out.forced += usize::from(res.forced);
        out.hypotheses.push(hyp);
        out.results.push(res);
    }
    out.wer = errs.rate();
    Ok(out)
}
