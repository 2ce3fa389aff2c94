//! Pre-training on pseudo codes: span masking, the masked code prediction
//! loss on the encoder, the reduced-code reconstruction loss on the decoder,
//! and the training step that combines them.

mod losses;
mod masking;
mod model;
mod schedule;
mod trainer;

pub use losses::{mlm_loss, reconstruction_loss, IGNORE};
pub use masking::{apply_mask, mask_start_count, sample_span_mask, sample_span_starts, spans_to_mask, MaskSpec};
pub use model::PretrainModel;
pub use schedule::lr_schedule_pretrain;
pub use trainer::{pretrain_step, CodeTargets, LossWeights, PretrainExample, PretrainMetrics};
