use std::path::Path;

use sha2::{Digest, Sha256};

use crate::audio::{ConvStackConfig, SynthSpec};
use crate::decode::{LmConfig, SearchConfig};
use crate::finetune::FinetuneConfig;
use crate::nets::ArchConfig;
use crate::pretrain::{CodeTargets, LossWeights, MaskSpec};
use crate::quantizer::FeatureConfig;
use crate::tensor::AdamConfig;
use crate::{Error, Result};

/// Values that can appear on the right of `key = value`.
trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! scalar_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("cannot parse {s:?}: {e}"))
            }
            fn render(&self) -> String {
                format!("{self:?}")
            }
        }
    )*};
}
scalar_value!(usize, u64, f64, bool);

impl ConfigValue for String {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        Ok(s.to_string())
    }
    fn render(&self) -> String {
        self.clone()
    }
}

impl<T: ConfigValue> ConfigValue for Vec<T> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s.trim().is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|p| T::parse_value(p.trim())).collect()
    }
    fn render(&self) -> String {
        self.iter().map(T::render).collect::<Vec<_>>().join(",")
    }
}

impl ConfigValue for CodeTargets {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse()
    }
    fn render(&self) -> String {
        match self {
            CodeTargets::Reduced => "reduced".into(),
            CodeTargets::Repeated => "repeated".into(),
        }
    }
}

macro_rules! config {
    ($( $(#[doc = $doc:expr])* $field:ident : $ty:ty = $default:expr ),* $(,)?) => {
        /// Flat run configuration. Every key has a default; files and
        /// command-line overrides may set any subset.
        #[derive(Debug, Clone, PartialEq)]
        pub struct Config {
            $( $(#[doc = $doc])* pub $field: $ty, )*
        }

        impl Default for Config {
            fn default() -> Self {
                Self { $( $field: $default, )* }
            }
        }

        impl Config {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($field)),*];

            /// Sets one key from its text form.
            pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
                match key {
                    $( stringify!($field) => {
                        self.$field = <$ty as ConfigValue>::parse_value(value)
                            .map_err(|e| format!("key `{key}`: {e}"))?;
                        Ok(())
                    } )*
                    _ => Err(format!("unknown key `{key}`")),
                }
            }

            /// `(key, value)` pairs in declaration order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![ $( (stringify!($field), ConfigValue::render(&self.$field)) ),* ]
            }
        }
    };
}

config! {
    seed: u64 = 0,
    sample_rate: usize = 16_000,
    conv_channels: usize = 32,
    conv_kernels: Vec<usize> = vec![10, 3, 3, 3, 3, 2, 2],
    conv_strides: Vec<usize> = vec![5, 2, 2, 2, 2, 2, 2],
    enc_layers: usize = 2,
    dec_layers: usize = 2,
    d_model: usize = 64,
    d_ffn: usize = 128,
    n_heads: usize = 4,
    rel_pos_max_distance: usize = 16,
    n_codes: usize = 32,
    code_embed_dim: usize = 64,
    n_bands: usize = 20,
    kmeans_iters: usize = 100,
    kmeans_tol: f64 = 1e-9,
    mask_prob: f64 = 0.08,
    mask_span: usize = 10,
    /// `reduced` or `repeated` decoder targets.
    codes: CodeTargets = CodeTargets::Reduced,
    lambda_mlm: f64 = 1.0,
    lambda_mle: f64 = 1.0,
    pretrain_steps: usize = 200,
    pretrain_lr: f64 = 2e-3,
    pretrain_batch: usize = 10,
    clip_norm: f64 = 1.0,
    adam_beta1: f64 = 0.9,
    adam_beta2: f64 = 0.98,
    adam_eps: f64 = 1e-8,
    finetune_steps: usize = 300,
    finetune_lr: f64 = 2e-3,
    finetune_batch: usize = 10,
    /// Use only the first N manifest entries for fine-tuning; 0 uses all.
    finetune_utts: usize = 0,
    ctc_weight: f64 = 0.5,
    ce_weight: f64 = 0.5,
    freeze_frac: f64 = 0.4,
    /// Greedy training-set WER is logged every this many steps; 0 disables.
    eval_every: usize = 0,
    beam: usize = 4,
    decode_ctc_weight: f64 = 0.3,
    decode_lm_weight: f64 = 0.0,
    max_len: usize = 64,
    length_penalty: f64 = 0.0,
    sweep_ctc_grid: Vec<f64> = vec![0.0, 0.25, 0.5, 0.75, 1.0],
    sweep_lm_grid: Vec<f64> = vec![0.0, 0.25, 0.5],
    lm_layers: usize = 1,
    lm_d_model: usize = 32,
    lm_d_ffn: usize = 64,
    lm_heads: usize = 2,
    lm_steps: usize = 200,
    lm_lr: f64 = 3e-3,
    synth_utts: usize = 20,
    synth_min_dur: f64 = 0.3,
    synth_max_dur: f64 = 0.6,
    synth_vocab: String = "ABCDEFGH".into(),
    synth_symbol_samples: usize = 1280,
    synth_tail_samples: usize = 80,
}

impl Config {
    /// Defaults updated by `key = value` lines; `#` starts a comment.
    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text, source)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{source} line {}: expected `key = value`", i + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("{source} line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    /// Applies `key=value` override strings.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for (i, o) in overrides.iter().enumerate() {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {} `{o}`: expected key=value", i + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("override {} : {e}", i + 1)))?;
        }
        Ok(())
    }

    /// Resolved configuration, one `key = value` per line.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Hex SHA-256 of [`to_text`](Self::to_text).
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn conv(&self) -> ConvStackConfig {
        ConvStackConfig::uniform(self.conv_channels, &self.conv_kernels, &self.conv_strides)
    }

    pub fn arch(&self) -> ArchConfig {
        ArchConfig {
            enc_layers: self.enc_layers,
            dec_layers: self.dec_layers,
            d_model: self.d_model,
            d_ffn: self.d_ffn,
            n_heads: self.n_heads,
            rel_pos_max_distance: self.rel_pos_max_distance,
            n_codes: self.n_codes,
            code_embed_dim: self.code_embed_dim,
        }
    }

    pub fn mask_spec(&self) -> MaskSpec {
        MaskSpec {
            mask_prob: self.mask_prob,
            span_len: self.mask_span,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            mlm: self.lambda_mlm,
            mle: self.lambda_mle,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig::for_conv(&self.conv(), self.n_bands)
    }

    pub fn finetune(&self) -> FinetuneConfig {
        FinetuneConfig {
            ctc_weight: self.ctc_weight,
            ce_weight: self.ce_weight,
            freeze_frac: self.freeze_frac,
            peak_lr: self.finetune_lr,
            total_steps: self.finetune_steps,
            clip_norm: self.clip_norm,
        }
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            beam: self.beam,
            ctc_weight: self.decode_ctc_weight,
            lm_weight: self.decode_lm_weight,
            max_len: self.max_len,
            length_penalty: self.length_penalty,
        }
    }

    pub fn lm(&self) -> LmConfig {
        LmConfig {
            layers: self.lm_layers,
            d_model: self.lm_d_model,
            d_ffn: self.lm_d_ffn,
            n_heads: self.lm_heads,
            rel_pos_max_distance: self.rel_pos_max_distance,
            steps: self.lm_steps,
            lr: self.lm_lr,
            seed: crate::params::sub_seed(self.seed, "lm"),
        }
    }

    pub fn synth(&self) -> SynthSpec {
        SynthSpec {
            n_utts: self.synth_utts,
            duration_range_s: (self.synth_min_dur, self.synth_max_dur),
            vocab: self.synth_vocab.chars().collect(),
            seed: crate::params::sub_seed(self.seed, "synth"),
            sample_rate: self.sample_rate as u32,
            symbol_samples: self.synth_symbol_samples,
            tail_samples: self.synth_tail_samples,
        }
    }
}

/// Defaults, then the file (if any), then `overrides`.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<Config> {
    let mut cfg = Config::default();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(crate::with_path(p))?;
        cfg.apply_text(&text, &p.display().to_string())?;
    }
    cfg.apply_overrides(overrides)?;
    Ok(cfg)
}
