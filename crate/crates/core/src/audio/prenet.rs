use rand_chacha::ChaCha8Rng;

use super::{AudioError, Result, Waveform};
use crate::params::ParamStore;
use crate::tensor::{self, conv_out_len, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvStackConfig {
    pub layers: Vec<ConvLayerSpec>,
}

const STRIDES: [usize; 7] = [5, 2, 2, 2, 2, 2, 2];
const KERNELS: [usize; 7] = [10, 3, 3, 3, 3, 2, 2];

impl ConvStackConfig {
    pub fn uniform(channels: usize, kernels: &[usize], strides: &[usize]) -> Self {
        Self {
            layers: kernels
                .iter()
                .zip(strides)
                .map(|(&kernel, &stride)| ConvLayerSpec {
                    channels,
                    kernel,
                    stride,
                })
                .collect(),
        }
    }

    /// Seven 512-channel layers.
    pub fn base() -> Self {
        Self::uniform(512, &KERNELS, &STRIDES)
    }

    /// Same geometry as [`base`](Self::base) with 32 channels.
    pub fn desk() -> Self {
        Self::uniform(32, &KERNELS, &STRIDES)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(AudioError::Argument("conv stack needs at least one layer".into()));
        }
        if self
            .layers
            .iter()
            .any(|l| l.channels == 0 || l.kernel == 0 || l.stride == 0)
        {
            return Err(AudioError::Argument(
                "conv channels, kernels and strides must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn out_channels(&self) -> usize {
        self.layers.last().map_or(1, |l| l.channels)
    }

    /// Samples between consecutive output frames.
    pub fn hop(&self) -> usize {
        self.layers.iter().map(|l| l.stride).product()
    }

    /// Samples seen by one output frame; also the shortest usable input.
    pub fn receptive_field(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .fold(1, |r, l| (r - 1) * l.stride + l.kernel)
    }
}

/// Output frame count of the conv stack for `n_samples` inputs; 0 when the
/// input is shorter than the receptive field.
pub fn frame_count(n_samples: usize, cfg: &ConvStackConfig) -> usize {
    cfg.layers
        .iter()
        .fold(n_samples, |t, l| conv_out_len(t, l.kernel, l.stride))
}

/// Waveform encoder: unpadded strided convolutions with GELU between layers.
#[derive(Debug, Clone)]
pub struct ConvPrenet {
    pub cfg: ConvStackConfig,
    pub kernels: Vec<Tensor>,
}

impl ConvPrenet {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        cfg: &ConvStackConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut c_in = 1;
        let mut kernels = Vec::new();
        for (i, l) in cfg.layers.iter().enumerate() {
            let bound = (3.0 / (c_in * l.kernel) as f64).sqrt();
            kernels.push(store.uniform(
                format!("{prefix}.conv{i}"),
                &[l.channels, c_in, l.kernel],
                bound,
                rng,
            )?);
            c_in = l.channels;
        }
        Ok(Self {
            cfg: cfg.clone(),
            kernels,
        })
    }

    pub fn forward(&self, samples: &[f64]) -> Result<Tensor> {
        let minimum = self.cfg.receptive_field();
        if samples.len() < minimum {
            return Err(AudioError::InputTooShort {
                minimum,
                got: samples.len(),
            });
        }
        let mut x = Tensor::new(samples.to_vec(), &[samples.len(), 1])?;
        let last = self.kernels.len() - 1;
        for (i, (k, l)) in self.kernels.iter().zip(&self.cfg.layers).enumerate() {
            x = tensor::conv1d(&x, k, l.stride)?;
            if i < last {
                x = tensor::gelu(&x);
            }
        }
        Ok(x)
    }
}

/// Frame features `[T, channels]` for a waveform.
pub fn feature_encode(w: &Waveform, prenet: &ConvPrenet) -> Result<Tensor> {
    prenet.forward(&w.samples)
}
