//! Encoder post-net: projects hidden states and scores them against learned
//! code embeddings by cosine similarity scaled by `1/τ`, giving
//! `p(c | t) = softmax_c(cos(h_t W, e_c) / τ)`.

use rand_chacha::ChaCha8Rng;

use crate::params::ParamStore;
use crate::tensor::{self, Result, Tensor, COSINE_EPS};

/// Logit temperature τ.
pub const CODE_TEMPERATURE: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct EncoderPostNet {
    /// `[d_model, code_embed_dim]`
    pub proj: Tensor,
    /// `[C, code_embed_dim]`
    pub code_embed: Tensor,
    pub temperature: f64,
}

impl EncoderPostNet {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        n_codes: usize,
        code_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            proj: store.uniform(format!("{name}.proj"), &[d_model, code_dim], 1.0 / (d_model as f64).sqrt(), rng)?,
            code_embed: store.uniform(format!("{name}.codes"), &[n_codes, code_dim], 1.0, rng)?,
            temperature: CODE_TEMPERATURE,
        })
    }

    /// Cosine similarities divided by τ, `[T, C]`.
    pub fn logits(&self, h: &Tensor) -> Result<Tensor> {
        let z = tensor::l2_normalize(&tensor::matmul(h, &self.proj)?, COSINE_EPS);
        let e = tensor::l2_normalize(&self.code_embed, COSINE_EPS);
        let sims = tensor::matmul(&z, &tensor::transpose(&e)?)?;
        Ok(tensor::scale(&sims, 1.0 / self.temperature))
    }

    /// Log code distribution for every frame, `[T, C]`.
    pub fn log_probs(&self, h: &Tensor) -> Result<Tensor> {
        Ok(tensor::log_softmax(&self.logits(h)?))
    }
}

/// Code distribution for a single hidden state `h_t: [d_model]`.
pub fn code_distribution(h_t: &Tensor, post: &EncoderPostNet) -> Result<Tensor> {
    let d = h_t.numel();
    let h = tensor::reshape(h_t, &[1, d])?;
    let z = tensor::l2_normalize(&tensor::matmul(&h, &post.proj)?, COSINE_EPS);
    let e = tensor::l2_normalize(&post.code_embed, COSINE_EPS);
    let sims = tensor::matmul(&z, &tensor::transpose(&e)?)?;
    let p = tensor::softmax(&sims, post.temperature)?;
    tensor::reshape(&p, &[post.code_embed.rows()])
}
