//! Inference: CTC prefix scoring, joint CTC/attention beam search with
//! shallow LM fusion, the character LM, the weight sweep and WER.

mod beam;
mod ctc_prefix;
mod lm;
mod sweep;
mod wer;

pub use beam::{
    decode_utterance, joint_beam_search, AttentionScorer, Hypothesis, PrefixScorer, SearchConfig, SearchResult,
};
pub use ctc_prefix::{CtcFrames, CtcPrefixCache};
pub use lm::{train_char_lm, CharLM, LmConfig, LmTrainReport};
pub use sweep::{sweep_grid, sweep_weights, SweepResult};
pub use wer::{corpus_wer, edit_distance, wer, WordErrors};
