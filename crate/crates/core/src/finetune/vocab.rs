use std::collections::BTreeSet;

use crate::{Error, Result};

/// Uppercases and keeps letters, digits, apostrophes and single spaces.
pub fn normalize_transcript(text: &str) -> String {
    let upper: String = text
        .chars()
        .flat_map(char::to_uppercase)
        .map(|c| if c.is_whitespace() { ' ' } else { c })
        .filter(|c| c.is_alphanumeric() || *c == '\'' || *c == ' ')
        .collect();
    upper.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Characters followed by BOS, EOS, PAD and the CTC blank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocab {
    chars: Vec<char>,
}

impl CharVocab {
    pub fn new(chars: impl IntoIterator<Item = char>) -> Self {
        let set: BTreeSet<char> = chars.into_iter().collect();
        Self {
            chars: set.into_iter().collect(),
        }
    }

    pub fn from_transcripts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        Self::new(texts.into_iter().flat_map(str::chars))
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn n_chars(&self) -> usize {
        self.chars.len()
    }
    pub fn bos(&self) -> usize {
        self.chars.len()
    }
    pub fn eos(&self) -> usize {
        self.chars.len() + 1
    }
    pub fn pad(&self) -> usize {
        self.chars.len() + 2
    }
    pub fn blank(&self) -> usize {
        self.chars.len() + 3
    }
    pub fn size(&self) -> usize {
        self.chars.len() + 4
    }

    pub fn is_char(&self, id: usize) -> bool {
        id < self.chars.len()
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| {
                self.chars
                    .binary_search(&c)
                    .map_err(|_| Error::Argument(format!("character {c:?} not in vocabulary")))
            })
            .collect()
    }

    /// Characters only; special ids are dropped.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter_map(|&i| self.chars.get(i))
            .collect()
    }

    /// Comma-separated code points, used in checkpoint headers.
    pub fn to_header(&self) -> String {
        self.chars
            .iter()
            .map(|&c| (c as u32).to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn from_header(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Ok(Self::new([]));
        }
        s.split(',')
            .map(|t| {
                t.parse::<u32>()
                    .ok()
                    .and_then(char::from_u32)
                    .ok_or_else(|| Error::Argument(format!("bad vocabulary entry {t:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize_transcript("  it's a  test!\n"), "IT'S A TEST");
    }

    #[test]
    fn ids_are_stable() {
        let v = CharVocab::from_transcripts(["BA C", "AB"]);
        assert_eq!(v.chars(), &[' ', 'A', 'B', 'C']);
        assert_eq!(v.encode("CAB").unwrap(), vec![3, 1, 2]);
        assert_eq!(v.blank(), 7);
        let back = CharVocab::from_header(&v.to_header()).unwrap();
        assert_eq!(back, v);
        assert_eq!(v.decode(&[1, v.eos(), 2]), "AB");
        assert!(v.encode("Z").is_err());
    }
}
