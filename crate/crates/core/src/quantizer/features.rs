//! Log band-energy frame features for clustering, framed to match the conv
//! pre-net so that feature frame `t` and encoder frame `t` see the same samples.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::{frame_count, ConvStackConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub n_bands: usize,
    /// Window length in samples; the pre-net receptive field.
    pub window: usize,
    /// Hop in samples; the pre-net total stride.
    pub hop: usize,
    pub conv: ConvStackConfig,
}

impl FeatureConfig {
    pub fn for_conv(conv: &ConvStackConfig, n_bands: usize) -> Self {
        Self {
            n_bands,
            window: conv.receptive_field(),
            hop: conv.hop(),
            conv: conv.clone(),
        }
    }

    pub fn kind(&self) -> String {
        format!("logband{}-w{}-h{}", self.n_bands, self.window, self.hop)
    }
}

/// One feature vector per pre-net frame.
pub fn frame_features(samples: &[f64], cfg: &FeatureConfig) -> Vec<Vec<f64>> {
    let n_frames = frame_count(samples.len(), &cfg.conv);
    let n_fft = cfg.window.next_power_of_two();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let hann: Vec<f64> = (0..cfg.window)
        .map(|i| {
            0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (cfg.window - 1).max(1) as f64).cos()
        })
        .collect();
    let n_bins = n_fft / 2;
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    (0..n_frames)
        .map(|t| {
            let start = t * cfg.hop;
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (i, w) in hann.iter().enumerate() {
                let s = samples.get(start + i).copied().unwrap_or(0.0);
                buf[i] = Complex::new(s * w, 0.0);
            }
            fft.process(&mut buf);
            (0..cfg.n_bands)
                .map(|b| {
                    let lo = 1 + b * n_bins / cfg.n_bands;
                    let hi = (1 + (b + 1) * n_bins / cfg.n_bands).max(lo + 1);
                    let e: f64 = buf[lo..hi].iter().map(|c| c.norm_sqr()).sum::<f64>() / (hi - lo) as f64;
                    (e + 1e-8).ln()
                })
                .collect()
        })
        .collect()
}
