//! Pre-norm Transformer stacks.

use rand_chacha::ChaCha8Rng;

use super::attention::{causal_mask, MultiHeadAttention};
use super::config::ArchConfig;
use super::layers::{FeedForward, LayerNorm};
use crate::params::ParamStore;
use crate::tensor::{self, Result, Tensor};

#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub ln_attn: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln_ffn: LayerNorm,
    pub ffn: FeedForward,
}

impl EncoderLayer {
    fn new(store: &mut ParamStore, name: &str, cfg: &ArchConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            ln_attn: LayerNorm::new(store, &format!("{name}.ln_attn"), cfg.d_model)?,
            attn: MultiHeadAttention::new(
                store,
                &format!("{name}.attn"),
                cfg.d_model,
                cfg.n_heads,
                Some(cfg.rel_pos_max_distance),
                rng,
            )?,
            ln_ffn: LayerNorm::new(store, &format!("{name}.ln_ffn"), cfg.d_model)?,
            ffn: FeedForward::new(store, &format!("{name}.ffn"), cfg.d_model, cfg.d_ffn, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.ln_attn.forward(x)?;
        let x = tensor::add(x, &self.attn.forward(&h, &h, None)?)?;
        let h = self.ln_ffn.forward(&x)?;
        tensor::add(&x, &self.ffn.forward(&h)?)
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub layers: Vec<EncoderLayer>,
    /// Present only when there is at least one layer, so a zero-layer
    /// encoder is the identity.
    pub ln_final: Option<LayerNorm>,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &ArchConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let layers = (0..cfg.enc_layers)
            .map(|i| EncoderLayer::new(store, &format!("{name}.layer{i}"), cfg, rng))
            .collect::<Result<Vec<_>>>()?;
        let ln_final = if layers.is_empty() {
            None
        } else {
            Some(LayerNorm::new(store, &format!("{name}.ln_final"), cfg.d_model)?)
        };
        Ok(Self { layers, ln_final })
    }

    /// `[T, d_model]` in, `[T, d_model]` out.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h)?;
        }
        match &self.ln_final {
            Some(ln) => ln.forward(&h),
            None => Ok(h),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecoderLayer {
    pub ln_self: LayerNorm,
    pub self_attn: MultiHeadAttention,
    /// Absent for decoder-only language models.
    pub cross: Option<(LayerNorm, MultiHeadAttention)>,
    pub ln_ffn: LayerNorm,
    pub ffn: FeedForward,
}

impl DecoderLayer {
    fn new(
        store: &mut ParamStore,
        name: &str,
        cfg: &ArchConfig,
        with_cross: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let ln_self = LayerNorm::new(store, &format!("{name}.ln_self"), cfg.d_model)?;
        let self_attn = MultiHeadAttention::new(
            store,
            &format!("{name}.self_attn"),
            cfg.d_model,
            cfg.n_heads,
            Some(cfg.rel_pos_max_distance),
            rng,
        )?;
        let cross = if with_cross {
            Some((
                LayerNorm::new(store, &format!("{name}.ln_cross"), cfg.d_model)?,
                MultiHeadAttention::new(
                    store,
                    &format!("{name}.cross_attn"),
                    cfg.d_model,
                    cfg.n_heads,
                    None,
                    rng,
                )?,
            ))
        } else {
            None
        };
        Ok(Self {
            ln_self,
            self_attn,
            cross,
            ln_ffn: LayerNorm::new(store, &format!("{name}.ln_ffn"), cfg.d_model)?,
            ffn: FeedForward::new(store, &format!("{name}.ffn"), cfg.d_model, cfg.d_ffn, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor, memory: Option<&Tensor>) -> Result<Tensor> {
        let n = x.rows();
        let mask = causal_mask(n);
        let h = self.ln_self.forward(x)?;
        let mut x = tensor::add(x, &self.self_attn.forward(&h, &h, Some(&mask))?)?;
        if let (Some((ln, attn)), Some(mem)) = (&self.cross, memory) {
            let h = ln.forward(&x)?;
            x = tensor::add(&x, &attn.forward(&h, mem, None)?)?;
        }
        let h = self.ln_ffn.forward(&x)?;
        tensor::add(&x, &self.ffn.forward(&h)?)
    }
}

/// Causal Transformer stack over already-embedded inputs.
#[derive(Debug, Clone)]
pub struct Decoder {
    pub layers: Vec<DecoderLayer>,
    pub ln_final: Option<LayerNorm>,
}

impl Decoder {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cfg: &ArchConfig,
        n_layers: usize,
        with_cross: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let layers = (0..n_layers)
            .map(|i| DecoderLayer::new(store, &format!("{name}.layer{i}"), cfg, with_cross, rng))
            .collect::<Result<Vec<_>>>()?;
        let ln_final = if layers.is_empty() {
            None
        } else {
            Some(LayerNorm::new(store, &format!("{name}.ln_final"), cfg.d_model)?)
        };
        Ok(Self { layers, ln_final })
    }

    pub fn forward(&self, x: &Tensor, memory: Option<&Tensor>) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h, memory)?;
        }
        match &self.ln_final {
            Some(ln) => ln.forward(&h),
            None => Ok(h),
        }
    }
}
