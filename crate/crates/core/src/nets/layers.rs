use rand_chacha::ChaCha8Rng;

use crate::params::ParamStore;
use crate::tensor::{self, Result, Tensor};

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let bound = 1.0 / (d_in as f64).sqrt();
        let weight = store.uniform(format!("{name}.w"), &[d_in, d_out], bound, rng)?;
        let bias = if bias {
            Some(store.constant(format!("{name}.b"), &[d_out], 0.0)?)
        } else {
            None
        };
        Ok(Self { weight, bias })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = tensor::matmul(x, &self.weight)?;
        match &self.bias {
            Some(b) => tensor::add(&y, b),
            None => Ok(y),
        }
    }
}

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: Tensor,
    pub bias: Tensor,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Result<Self> {
        Ok(Self {
            gain: store.constant(format!("{name}.g"), &[d], 1.0)?,
            bias: store.constant(format!("{name}.b"), &[d], 0.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        tensor::layer_norm(x, &self.gain, &self.bias, LN_EPS)
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        d_ffn: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            up: Linear::new(store, &format!("{name}.up"), d_model, d_ffn, true, rng)?,
            down: Linear::new(store, &format!("{name}.down"), d_ffn, d_model, true, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.down.forward(&tensor::gelu(&self.up.forward(x)?))
    }
}
