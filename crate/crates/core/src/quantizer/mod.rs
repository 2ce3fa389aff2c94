//! Offline clustering of frame features into pseudo codes, code reduction,
//! and the code/transcript correlation report.

mod codes;
mod features;
mod kmeans;
mod report;

pub use codes::{read_codes, reduce_codes, write_codes, CodeSequence};
pub use features::{frame_features, FeatureConfig};
pub use kmeans::{kmeans_assign, kmeans_fit, KMeansFit, KMeansModel};
pub use report::{code_text_report, utterance_top_codes, CodeTextReport, SymbolRow};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuantizerError {
    #[error("{0}")]
    Argument(String),
    #[error("dimension mismatch: model has {expected}, features have {got}")]
    Dimension { expected: usize, got: usize },
    #[error("{file} line {line}: {detail}")]
    Parse {
        file: &'static str,
        line: usize,
        detail: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QuantizerError>;
