use crate::audio::ConvStackConfig;
use crate::nets::{ArchConfig, Backbone, CodeVocab, EncoderPostNet, Linear};
use crate::params::{rng_for, ParamStore};
use crate::tensor::{self, Tensor};
use crate::Result;

/// Backbone plus the code-specific parts used only during pre-training:
/// mask embedding, encoder post-net, decoder code embedding and code output
/// layer.
#[derive(Debug, Clone)]
pub struct PretrainModel {
    pub store: ParamStore,
    pub backbone: Backbone,
    pub mask_emb: Tensor,
    pub post: EncoderPostNet,
    /// Decoder pre-net, `[C + 3, d_model]`.
    pub dec_embed: Tensor,
    /// Decoder post-net.
    pub dec_out: Linear,
    pub vocab: CodeVocab,
}

impl PretrainModel {
    pub fn new(conv: &ConvStackConfig, arch: &ArchConfig, seed: u64) -> Result<Self> {
        let mut rng = rng_for(seed, "init.pretrain");
        let mut store = ParamStore::new();
        let backbone = Backbone::new(&mut store, conv, arch, &mut rng)?;
        let vocab = arch.code_vocab();
        let d = arch.d_model;
        let mask_emb = store.uniform("mask_emb", &[d], 1.0, &mut rng)?;
        let post = EncoderPostNet::new(&mut store, "enc_post", d, arch.n_codes, arch.code_embed_dim, &mut rng)?;
        let dec_embed = store.uniform("dec_pre.embed", &[vocab.size(), d], 1.0, &mut rng)?;
        let dec_out = Linear::new(&mut store, "dec_post", d, vocab.size(), true, &mut rng)?;
        Ok(Self {
            store,
            backbone,
            mask_emb,
            post,
            dec_embed,
            dec_out,
            vocab,
        })
    }

    /// Logits `[N+1, C+3]` for decoder inputs `BOS, z_1..z_N` given encoder
    /// output.
    pub fn decoder_forward(&self, codes_in: &[usize], enc_out: &Tensor) -> Result<Tensor> {
        let emb = tensor::index_rows(&self.dec_embed, codes_in)?;
        let h = self.backbone.decode(&emb, enc_out)?;
        Ok(self.dec_out.forward(&h)?)
    }

    /// Post-net and decoder pre/post-net parameters.
    pub fn is_code_specific(name: &str) -> bool {
        name.starts_with("enc_post.") || name.starts_with("dec_pre.") || name.starts_with("dec_post.")
    }
}
