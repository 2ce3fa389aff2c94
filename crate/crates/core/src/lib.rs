//! Encoder-decoder speech pre-training on pseudo codes.
//!
//! Pipeline: waveforms are clustered into discrete pseudo codes with k-means;
//! an encoder-decoder Transformer is pre-trained to predict frame codes at
//! masked positions (encoder side) and to regenerate the de-duplicated code
//! sequence autoregressively (decoder side); the pre-trained network is then
//! fine-tuned for character ASR with CTC + cross-entropy and decoded with
//! joint CTC/attention beam search and optional language-model fusion.
//!
//! Everything runs on the small reverse-mode autodiff engine in [`tensor`].

pub mod app;
pub mod audio;
pub mod decode;
pub mod finetune;
pub mod nets;
pub mod params;
pub mod pretrain;
pub mod quantizer;
pub mod tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] tensor::TensorError),
    #[error(transparent)]
    Audio(#[from] audio::AudioError),
    #[error(transparent)]
    Quantizer(#[from] quantizer::QuantizerError),
    #[error(transparent)]
    Checkpoint(#[from] app::CheckpointError),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Argument(String),
    #[error("{0}")]
    Contract(String),
    #[error("incompatible architecture: {0}")]
    Incompatible(String),
    #[error("infeasible alignment: {frames} frames cannot emit a target that needs {needed}")]
    InfeasibleAlignment { frames: usize, needed: usize },
    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

// Keeps the file name in I/O errors surfaced to the user.
pub(crate) fn with_path(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> std::io::Error + '_ {
    move |e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
}

// The guide's snippets run as doc-tests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/codes.md")]
    mod codes {}
    #[doc = include_str!("../../../book/src/pretraining.md")]
    mod pretraining {}
    #[doc = include_str!("../../../book/src/finetuning.md")]
    mod finetuning {}
    #[doc = include_str!("../../../book/src/decoding.md")]
    mod decoding {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
