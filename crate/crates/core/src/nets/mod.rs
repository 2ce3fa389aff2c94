//! Transformer encoder/decoder with clipped relative-position attention bias,
//! the cosine-similarity code post-net, and the shared speech backbone.

mod attention;
mod backbone;
mod config;
mod layers;
mod postnet;
mod transformer;

pub use attention::{causal_mask, full_mask, mha_forward, MultiHeadAttention, RelPosBias};
pub use backbone::Backbone;
pub use config::{ArchConfig, CodeVocab};
pub use layers::{FeedForward, LayerNorm, Linear};
pub use postnet::{code_distribution, EncoderPostNet, CODE_TEMPERATURE};
pub use transformer::{Decoder, DecoderLayer, Encoder, EncoderLayer};
