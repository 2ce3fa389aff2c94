use super::vocab::CharVocab;
use crate::app::Checkpoint;
use crate::audio::ConvStackConfig;
use crate::nets::{ArchConfig, Backbone, Linear};
use crate::params::{rng_for, ParamStore};
use crate::tensor::{self, Tensor};
use crate::{Error, Result};

/// Backbone with a CTC projection on the encoder and a character decoder.
#[derive(Debug, Clone)]
pub struct AsrModel {
    pub store: ParamStore,
    pub backbone: Backbone,
    pub ctc_head: Linear,
    /// Character embedding, `[V, d_model]`.
    pub dec_embed: Tensor,
    pub dec_out: Linear,
    pub vocab: CharVocab,
}

impl AsrModel {
    /// Fresh model; every parameter is drawn from `seed`.
    pub fn new(conv: &ConvStackConfig, arch: &ArchConfig, vocab: CharVocab, seed: u64) -> Result<Self> {
        let mut rng = rng_for(seed, "init.finetune");
        let mut store = ParamStore::new();
        let backbone = Backbone::new(&mut store, conv, arch, &mut rng)?;
        let d = arch.d_model;
        let v = vocab.size();
        let ctc_head = Linear::new(&mut store, "ctc_head", d, v, true, &mut rng)?;
        let dec_embed = store.uniform("dec_pre.embed", &[v, d], 1.0, &mut rng)?;
        let dec_out = Linear::new(&mut store, "dec_post", d, v, true, &mut rng)?;
        Ok(Self {
            store,
            backbone,
            ctc_head,
            dec_embed,
            dec_out,
            vocab,
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.backbone.arch
    }

    pub fn conv(&self) -> &ConvStackConfig {
        &self.backbone.conv
    }

    /// Encoder hidden states `[T, d_model]` for an unmasked waveform.
    pub fn encode(&self, samples: &[f64]) -> Result<Tensor> {
        let x = self.backbone.features(samples)?;
        self.backbone.encode(&x)
    }

    /// Per-frame CTC log-probabilities `[T, V]`.
    pub fn ctc_log_probs(&self, enc_out: &Tensor) -> Result<Tensor> {
        Ok(tensor::log_softmax(&self.ctc_head.forward(enc_out)?))
    }

    /// Decoder logits `[N, V]` for input tokens (starting with BOS).
    pub fn decoder_logits(&self, tokens_in: &[usize], enc_out: &Tensor) -> Result<Tensor> {
        let emb = tensor::index_rows(&self.dec_embed, tokens_in)?;
        let h = self.backbone.decode(&emb, enc_out)?;
        Ok(self.dec_out.forward(&h)?)
    }

    /// Next-token log-probabilities after `prefix` (BOS is prepended).
    pub fn next_token_log_probs(&self, prefix: &[usize], enc_out: &Tensor) -> Result<Vec<f64>> {
        let mut tokens = Vec::with_capacity(prefix.len() + 1);
        tokens.push(self.vocab.bos());
        tokens.extend_from_slice(prefix);
        let logits = tensor::no_grad(|| self.decoder_logits(&tokens, enc_out))?;
        let v = logits.cols();
        let last = logits.data()[(tokens.len() - 1) * v..].to_vec();
        let lp = tensor::log_softmax(&Tensor::new(last, &[v])?);
        Ok(lp.to_vec())
    }
}

/// Human-readable list of architecture fields that differ between `a` and `b`.
pub fn arch_differences(
    conv_a: &ConvStackConfig,
    arch_a: &ArchConfig,
    conv_b: &ConvStackConfig,
    arch_b: &ArchConfig,
) -> Vec<String> {
    let mut diffs = Vec::new();
    let mut cmp = |name: &str, x: String, y: String| {
        if x != y {
            diffs.push(format!("{name}: {x} vs {y}"));
        }
    };
    let fmt_conv = |c: &ConvStackConfig, f: fn(&crate::audio::ConvLayerSpec) -> usize| {
        format!("{:?}", c.layers.iter().map(f).collect::<Vec<_>>())
    };
    cmp("conv_channels", fmt_conv(conv_a, |l| l.channels), fmt_conv(conv_b, |l| l.channels));
    cmp("conv_kernels", fmt_conv(conv_a, |l| l.kernel), fmt_conv(conv_b, |l| l.kernel));
    cmp("conv_strides", fmt_conv(conv_a, |l| l.stride), fmt_conv(conv_b, |l| l.stride));
    cmp("enc_layers", arch_a.enc_layers.to_string(), arch_b.enc_layers.to_string());
    cmp("dec_layers", arch_a.dec_layers.to_string(), arch_b.dec_layers.to_string());
    cmp("d_model", arch_a.d_model.to_string(), arch_b.d_model.to_string());
    cmp("d_ffn", arch_a.d_ffn.to_string(), arch_b.d_ffn.to_string());
    cmp("n_heads", arch_a.n_heads.to_string(), arch_b.n_heads.to_string());
    cmp(
        "rel_pos_max_distance",
        arch_a.rel_pos_max_distance.to_string(),
        arch_b.rel_pos_max_distance.to_string(),
    );
    diffs
}

/// Builds an ASR model whose pre-net, encoder and decoder stacks are copied
/// from a pre-training checkpoint. Code-specific parts of the checkpoint are
/// ignored; the CTC projection and the character decoder pre/post-nets are
/// freshly drawn from `seed`.
pub fn init_from_pretrained(
    ckpt: &Checkpoint,
    conv: &ConvStackConfig,
    arch: &ArchConfig,
    vocab: CharVocab,
    seed: u64,
) -> Result<AsrModel> {
    let (ck_conv, ck_arch) = (ckpt.config.conv(), ckpt.config.arch());
    let diffs = arch_differences(&ck_conv, &ck_arch, conv, arch);
    if !diffs.is_empty() {
        return Err(Error::Incompatible(diffs.join("; ")));
    }
    let model = AsrModel::new(conv, arch, vocab, seed)?;
    for (name, t) in model.store.iter() {
        if !Backbone::is_backbone_param(name) {
            continue;
        }
        let rec = ckpt
            .tensors
            .get(name)
            .ok_or_else(|| Error::Incompatible(format!("checkpoint has no tensor {name}")))?;
        if rec.shape != t.shape() {
            return Err(Error::Incompatible(format!(
                "{name}: shape {:?} vs {:?}",
                rec.shape,
                t.shape()
            )));
        }
        t.data_mut().copy_from_slice(&rec.data);
    }
    Ok(model)
}
