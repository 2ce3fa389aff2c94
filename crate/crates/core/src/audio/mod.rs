//! Waveform ingestion, the synthetic pseudo-phoneme corpus and the
//! convolutional pre-net that turns raw samples into frame features.

mod corpus;
mod prenet;
mod synth;
mod wav;

pub use corpus::{read_manifest, write_manifest, ManifestEntry};
pub use prenet::{feature_encode, frame_count, ConvLayerSpec, ConvPrenet, ConvStackConfig};
pub use synth::{signature, synth_corpus, SynthSpec, Utterance};
pub use wav::{load_wav, read_pcm16, write_pcm16, write_wav, Waveform};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("wav format error in field `{field}`: {detail}")]
    Format { field: &'static str, detail: String },
    #[error("{0}")]
    Argument(String),
    #[error("input too short: {got} samples, need at least {minimum}")]
    InputTooShort { minimum: usize, got: usize },
    #[error("manifest line {line}: {detail}")]
    Manifest { line: usize, detail: String },
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AudioError>;
