use std::fs;
use std::path::Path;

use super::{QuantizerError, Result};

/// Pseudo-code labels for one utterance, either one per frame or with
/// adjacent repeats collapsed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CodeSequence {
    pub codes: Vec<usize>,
    pub reduced: bool,
}

impl CodeSequence {
    pub fn frames(codes: Vec<usize>) -> Self {
        Self {
            codes,
            reduced: false,
        }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// Collapses each run of equal adjacent codes to a single occurrence.
pub fn reduce_codes(z: &CodeSequence) -> CodeSequence {
    let mut codes = z.codes.clone();
    codes.dedup();
    CodeSequence {
        codes,
        reduced: true,
    }
}

/// One line per utterance, space-separated decimal codes.
pub fn write_codes(path: impl AsRef<Path>, seqs: &[CodeSequence]) -> Result<()> {
    let mut out = String::new();
    for s in seqs {
        let line: Vec<String> = s.codes.iter().map(|c| c.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a codes file as frame-level sequences.
pub fn read_codes(path: impl AsRef<Path>) -> Result<Vec<CodeSequence>> {
    let text = fs::read_to_string(path.as_ref()).map_err(crate::with_path(path.as_ref()))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            line.split_whitespace()
                .map(|tok| {
                    tok.parse::<usize>().map_err(|e| QuantizerError::Parse {
                        file: "codes",
                        line: i + 1,
                        detail: format!("{tok:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(CodeSequence::frames)
        })
        .collect()
}
