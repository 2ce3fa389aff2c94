//! Configuration, checkpoints, and the experiment drivers behind the CLI.

mod checkpoint;
mod commands;
mod config;
mod runs;

pub use checkpoint::{write_atomic, Checkpoint, CheckpointError, TensorRecord, MAGIC, VERSION};
pub use commands::{
    cmd_analyze, cmd_decode, cmd_finetune, cmd_pretrain, cmd_quantize, cmd_sweep, cmd_synth, cmd_train_lm,
    load_asr_model, load_lm, DecodePaths, FinetunePaths, PretrainPaths,
};
pub use config::{parse_config, Config};
pub use runs::{
    asr_examples, decode_dataset, pretrain_examples, quantize_dataset, run_finetuning, run_pretraining, Dataset,
    DecodeOutcome, FinetuneOutcome,
};
