use rand_chacha::ChaCha8Rng;

use super::config::ArchConfig;
use super::layers::{LayerNorm, Linear};
use super::transformer::{Decoder, Encoder};
use crate::audio::{ConvPrenet, ConvStackConfig};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::Result;

/// The parts shared between code pre-training and ASR fine-tuning: waveform
/// pre-net with feature projection, Transformer encoder, Transformer decoder.
/// The task-specific embeddings and output heads live in the task models.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub conv: ConvStackConfig,
    pub arch: ArchConfig,
    pub prenet: ConvPrenet,
    pub feat_ln: LayerNorm,
    pub feat_proj: Linear,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl Backbone {
    /// Parameter name prefixes owned by the backbone.
    pub const PREFIXES: [&'static str; 3] = ["prenet.", "encoder.", "decoder."];

    pub fn new(
        store: &mut ParamStore,
        conv: &ConvStackConfig,
        arch: &ArchConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        arch.validate().map_err(crate::Error::Config)?;
        let prenet = ConvPrenet::new(store, "prenet", conv, rng)?;
        let c = conv.out_channels();
        Ok(Self {
            conv: conv.clone(),
            arch: arch.clone(),
            feat_ln: LayerNorm::new(store, "prenet.ln", c)?,
            feat_proj: Linear::new(store, "prenet.proj", c, arch.d_model, true, rng)?,
            prenet,
            encoder: Encoder::new(store, "encoder", arch, rng)?,
            decoder: Decoder::new(store, "decoder", arch, arch.dec_layers, true, rng)?,
        })
    }

    pub fn is_backbone_param(name: &str) -> bool {
        Self::PREFIXES.iter().any(|p| name.starts_with(p))
    }

    /// Encoder-side parameters: pre-net, projection and Transformer encoder.
    pub fn is_encoder_param(name: &str) -> bool {
        name.starts_with("prenet.") || name.starts_with("encoder.")
    }

    /// Projected frame features `[T, d_model]`.
    pub fn features(&self, samples: &[f64]) -> Result<Tensor> {
        let x = self.prenet.forward(samples)?;
        let x = self.feat_ln.forward(&x)?;
        Ok(self.feat_proj.forward(&x)?)
    }

    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.encoder.forward(x)?)
    }

    /// Decoder stack over embedded inputs, attending to `enc_out`.
    pub fn decode(&self, embedded: &Tensor, enc_out: &Tensor) -> Result<Tensor> {
        Ok(self.decoder.forward(embedded, Some(enc_out))?)
    }
}
