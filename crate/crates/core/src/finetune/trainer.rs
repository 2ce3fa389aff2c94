use super::ctc::ctc_loss;
use super::model::AsrModel;
use super::schedule::lr_schedule_tristage;
use crate::nets::Backbone;
use crate::tensor::{self, clip_grad_norm, Adam, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinetuneConfig {
    pub ctc_weight: f64,
    pub ce_weight: f64,
    /// Fraction of `total_steps` during which the encoder is frozen.
    pub freeze_frac: f64,
    pub peak_lr: f64,
    pub total_steps: usize,
    /// `<= 0` disables clipping.
    pub clip_norm: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            ctc_weight: 0.5,
            ce_weight: 0.5,
            freeze_frac: 0.4,
            peak_lr: 4e-5,
            total_steps: 25_000,
            clip_norm: 0.0,
        }
    }
}

impl FinetuneConfig {
    /// Freeze fraction for the 100 hour setup (25k of 80k steps).
    pub const FREEZE_FRAC_100H: f64 = 0.3125;

    pub fn validate(&self) -> Result<()> {
        if self.ctc_weight < 0.0 || self.ce_weight < 0.0 || self.ctc_weight + self.ce_weight <= 0.0 {
            return Err(Error::Argument(format!(
                "loss weights must be non-negative with a positive sum, got ctc={} ce={}",
                self.ctc_weight, self.ce_weight
            )));
        }
        if !(0.0..=1.0).contains(&self.freeze_frac) {
            return Err(Error::Argument(format!("freeze_frac {} outside [0, 1]", self.freeze_frac)));
        }
        Ok(())
    }

    pub fn is_frozen(&self, step: usize) -> bool {
        (step as f64) < self.freeze_frac * self.total_steps as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsrExample {
    pub samples: Vec<f64>,
    /// Character ids, no specials.
    pub tokens: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinetuneMetrics {
    pub step: usize,
    pub lctc: f64,
    pub lce: f64,
    pub total: f64,
    pub lr: f64,
    pub grad_norm: f64,
    pub frozen: bool,
}

impl FinetuneMetrics {
    pub fn log_line(&self) -> String {
        format!("step={} lctc={:.6} lce={:.6} lr={:e}", self.step, self.lctc, self.lce, self.lr)
    }
}

impl AsrModel {
    /// CTC negative log-likelihood of the transcript and teacher-forced
    /// decoder cross-entropy (mean over characters plus EOS).
    pub fn example_losses(&self, ex: &AsrExample) -> Result<(Tensor, Tensor)> {
        let h = self.encode(&ex.samples)?;
        let lctc = ctc_loss(&self.ctc_log_probs(&h)?, &ex.tokens, self.vocab.blank())?;
        let mut tokens_in = vec![self.vocab.bos()];
        tokens_in.extend(&ex.tokens);
        let mut targets = ex.tokens.clone();
        targets.push(self.vocab.eos());
        let logits = self.decoder_logits(&tokens_in, &h)?;
        let lce = tensor::cross_entropy(&tensor::log_softmax(&logits), &targets, None)?;
        Ok((lctc, lce))
    }

    /// Weighted loss averaged over the batch, with the mean CTC and CE terms.
    pub fn batch_loss(&self, batch: &[AsrExample], ctc_weight: f64, ce_weight: f64) -> Result<(Tensor, f64, f64)> {
        let mut total: Option<Tensor> = None;
        let (mut sctc, mut sce) = (0.0, 0.0);
        for ex in batch {
            let (lctc, lce) = self.example_losses(ex)?;
            sctc += lctc.item();
            sce += lce.item();
            let l = tensor::add(&tensor::scale(&lctc, ctc_weight), &tensor::scale(&lce, ce_weight))?;
            total = Some(match total {
                Some(t) => tensor::add(&t, &l)?,
                None => l,
            });
        }
        let total = total.ok_or_else(|| Error::Argument("empty batch".into()))?;
        let n = batch.len() as f64;
        Ok((tensor::scale(&total, 1.0 / n), sctc / n, sce / n))
    }
}

/// One update with the tri-stage learning rate. While the step lies in the
/// freeze window the encoder side (pre-net and Transformer encoder) is left
/// untouched: its gradients are dropped before clipping and the optimizer.
pub fn finetune_step(
    model: &AsrModel,
    batch: &[AsrExample],
    opt: &mut Adam,
    cfg: &FinetuneConfig,
    step: usize,
) -> Result<FinetuneMetrics> {
    cfg.validate()?;
    let lr = lr_schedule_tristage(step, cfg.total_steps, cfg.peak_lr);
    let (loss, lctc, lce) = model.batch_loss(batch, cfg.ctc_weight, cfg.ce_weight)?;
    if !loss.item().is_finite() {
        return Err(Error::NonFinite {
            step,
            detail: format!("lctc={lctc} lce={lce}"),
        });
    }
    model.store.zero_grad();
    loss.backward()?;
    let frozen = cfg.is_frozen(step);
    if frozen {
        for (name, t) in model.store.iter() {
            if Backbone::is_encoder_param(name) {
                t.zero_grad();
            }
        }
    }
    let grad_norm = clip_grad_norm(model.store.iter().map(|(_, t)| t), cfg.clip_norm);
    opt.step(model.store.iter(), lr)?;
    model.store.zero_grad();
    Ok(FinetuneMetrics {
        step,
        lctc,
        lce,
        total: loss.item(),
        lr,
        grad_norm,
        frozen,
    })
}
