use rand_chacha::ChaCha8Rng;

use super::losses::{mlm_loss, reconstruction_loss};
use super::masking::{apply_mask, sample_span_mask, MaskSpec};
use super::model::PretrainModel;
use crate::quantizer::{reduce_codes, CodeSequence};
use crate::tensor::{self, clip_grad_norm, Adam, Tensor};
use crate::{Error, Result};

/// Which code sequence the decoder learns to regenerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeTargets {
    /// Adjacent repeats collapsed (the default).
    Reduced,
    /// One code per frame.
    Repeated,
}

impl std::str::FromStr for CodeTargets {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "reduced" => Ok(Self::Reduced),
            "repeated" => Ok(Self::Repeated),
            other => Err(format!("expected `reduced` or `repeated`, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainExample {
    pub samples: Vec<f64>,
    /// One code per encoder frame.
    pub frame_codes: Vec<usize>,
    /// Sequence the decoder regenerates (without BOS/EOS).
    pub decoder_codes: Vec<usize>,
}

impl PretrainExample {
    pub fn new(samples: Vec<f64>, frame_codes: &CodeSequence, targets: CodeTargets) -> Self {
        let decoder_codes = match targets {
            CodeTargets::Reduced => reduce_codes(frame_codes).codes,
            CodeTargets::Repeated => frame_codes.codes.clone(),
        };
        Self {
            samples,
            frame_codes: frame_codes.codes.clone(),
            decoder_codes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub mlm: f64,
    pub mle: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { mlm: 1.0, mle: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainMetrics {
    pub step: usize,
    pub lmlm: f64,
    pub lmle: f64,
    pub total: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

impl PretrainMetrics {
    pub fn log_line(&self) -> String {
        format!("step={} lmlm={:.6} lmle={:.6} lr={:e}", self.step, self.lmlm, self.lmle, self.lr)
    }
}

impl PretrainModel {
    /// Both pre-training losses for one utterance with a given mask.
    pub fn example_losses(&self, ex: &PretrainExample, masked: &[usize]) -> Result<(Tensor, Tensor)> {
        let x = self.backbone.features(&ex.samples)?;
        if x.rows() != ex.frame_codes.len() {
            return Err(Error::Contract(format!(
                "{} encoder frames but {} frame codes",
                x.rows(),
                ex.frame_codes.len()
            )));
        }
        let x_masked = apply_mask(&x, masked, &self.mask_emb)?;
        let h = self.backbone.encode(&x_masked)?;
        let lmlm = mlm_loss(&h, &ex.frame_codes, masked, &self.post)?;
        let mut codes_in = vec![self.vocab.bos()];
        codes_in.extend(&ex.decoder_codes);
        let mut targets = ex.decoder_codes.clone();
        targets.push(self.vocab.eos());
        let logits = self.decoder_forward(&codes_in, &h)?;
        let lmle = reconstruction_loss(&logits, &targets)?;
        Ok((lmlm, lmle))
    }

    /// Weighted loss averaged over a batch, with the masks used.
    pub fn batch_loss(
        &self,
        batch: &[PretrainExample],
        weights: LossWeights,
        masks: &[Vec<usize>],
    ) -> Result<(Tensor, f64, f64)> {
        let mut total: Option<Tensor> = None;
        let (mut smlm, mut smle) = (0.0, 0.0);
        for (ex, m) in batch.iter().zip(masks) {
            let (lmlm, lmle) = self.example_losses(ex, m)?;
            smlm += lmlm.item();
            smle += lmle.item();
            let l = tensor::add(&tensor::scale(&lmlm, weights.mlm), &tensor::scale(&lmle, weights.mle))?;
            total = Some(match total {
                Some(t) => tensor::add(&t, &l)?,
                None => l,
            });
        }
        let n = batch.len() as f64;
        let total = total.ok_or_else(|| Error::Argument("empty batch".into()))?;
        Ok((tensor::scale(&total, 1.0 / n), smlm / n, smle / n))
    }
}

/// One optimizer update on `batch`: sample masks, compute
/// `λ_mlm·L_mlm + λ_mle·L_mle` averaged over utterances, backpropagate and
/// apply Adam. `clip_norm <= 0` disables gradient clipping.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_step(
    model: &PretrainModel,
    batch: &[PretrainExample],
    opt: &mut Adam,
    weights: LossWeights,
    mask_spec: &MaskSpec,
    lr: f64,
    clip_norm: f64,
    step: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PretrainMetrics> {
    if weights.mlm < 0.0 || weights.mle < 0.0 || (weights.mlm == 0.0 && weights.mle == 0.0) {
        return Err(Error::Argument(format!(
            "loss weights must be non-negative and not both zero, got {weights:?}"
        )));
    }
    let mut masks = Vec::with_capacity(batch.len());
    for ex in batch {
        masks.push(sample_span_mask(ex.frame_codes.len(), mask_spec, rng));
    }
    let (loss, lmlm, lmle) = model.batch_loss(batch, weights, &masks)?;
    if !loss.item().is_finite() {
        return Err(Error::NonFinite {
            step,
            detail: format!("lmlm={lmlm} lmle={lmle}"),
        });
    }
    model.store.zero_grad();
    loss.backward()?;
    let grad_norm = clip_grad_norm(model.store.iter().map(|(_, t)| t), clip_norm);
    opt.step(model.store.iter(), lr)?;
    model.store.zero_grad();
    Ok(PretrainMetrics {
        step,
        lmlm,
        lmle,
        total: loss.item(),
        lr,
        grad_norm,
    })
}
