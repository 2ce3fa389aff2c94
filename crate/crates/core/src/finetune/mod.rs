//! Character ASR fine-tuning: vocabulary, CTC loss, initialization from a
//! pre-trained checkpoint, and the joint CTC + cross-entropy training step.

mod ctc;
mod model;
mod schedule;
mod trainer;
mod vocab;

pub use ctc::{ctc_log_likelihood, ctc_loss, min_frames};
pub use model::{arch_differences, init_from_pretrained, AsrModel};
pub use schedule::lr_schedule_tristage;
pub use trainer::{finetune_step, AsrExample, FinetuneConfig, FinetuneMetrics};
pub use vocab::{normalize_transcript, CharVocab};
