//! How consistently each transcript symbol maps onto pseudo codes.
//!
//! Frames are attributed to symbols by splitting each utterance's frames
//! evenly across its transcript characters (spaces included).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::CodeSequence;

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolRow {
    pub symbol: char,
    pub frames: usize,
    /// Probability of each code among the symbol's frames.
    pub distribution: Vec<f64>,
    /// Largest entry of `distribution`.
    pub purity: f64,
    /// Codes sorted by frequency, most frequent first (ties by code).
    pub top_codes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeTextReport {
    pub n_codes: usize,
    pub rows: Vec<SymbolRow>,
    /// Pairs skipped because their code sequence or transcript was empty.
    pub skipped: usize,
}

fn symbol_spans(n_frames: usize, n_symbols: usize) -> impl Iterator<Item = (usize, std::ops::Range<usize>)> {
    (0..n_symbols).map(move |k| (k, k * n_frames / n_symbols..(k + 1) * n_frames / n_symbols))
}

fn ranked(counts: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] > 0).collect();
    idx.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    idx
}

pub fn code_text_report(pairs: &[(CodeSequence, String)], n_codes: usize) -> CodeTextReport {
    let mut counts: BTreeMap<char, Vec<usize>> = BTreeMap::new();
    let mut skipped = 0;
    for (codes, transcript) in pairs {
        let symbols: Vec<char> = transcript.chars().collect();
        if codes.is_empty() || symbols.is_empty() {
            skipped += 1;
            continue;
        }
        for (k, span) in symbol_spans(codes.len(), symbols.len()) {
            let row = counts.entry(symbols[k]).or_insert_with(|| vec![0; n_codes]);
            for &c in &codes.codes[span] {
                if c < n_codes {
                    row[c] += 1;
                }
            }
        }
    }
    let rows = counts
        .into_iter()
        .map(|(symbol, row)| {
            let frames: usize = row.iter().sum();
            let distribution: Vec<f64> = row
                .iter()
                .map(|&n| if frames > 0 { n as f64 / frames as f64 } else { 0.0 })
                .collect();
            let purity = distribution.iter().cloned().fold(0.0, f64::max);
            SymbolRow {
                symbol,
                frames,
                distribution,
                purity,
                top_codes: ranked(&row),
            }
        })
        .collect();
    CodeTextReport {
        n_codes,
        rows,
        skipped,
    }
}

/// The `k` most frequent codes over the frames of `symbol` in one utterance.
pub fn utterance_top_codes(codes: &CodeSequence, transcript: &str, symbol: char, k: usize, n_codes: usize) -> Vec<usize> {
    let symbols: Vec<char> = transcript.chars().collect();
    if codes.is_empty() || symbols.is_empty() {
        return Vec::new();
    }
    let mut row = vec![0usize; n_codes];
    for (i, span) in symbol_spans(codes.len(), symbols.len()) {
        if symbols[i] == symbol {
            for &c in &codes.codes[span] {
                if c < n_codes {
                    row[c] += 1;
                }
            }
        }
    }
    ranked(&row).into_iter().take(k).collect()
}

fn display(symbol: char) -> String {
    if symbol == ' ' {
        "<sp>".into()
    } else {
        symbol.to_string()
    }
}

impl CodeTextReport {
    /// Frame-weighted mean purity across symbols.
    pub fn mean_purity(&self) -> f64 {
        let total: usize = self.rows.iter().map(|r| r.frames).sum();
        if total == 0 {
            return 0.0;
        }
        self.rows
            .iter()
            .map(|r| r.purity * r.frames as f64)
            .sum::<f64>()
            / total as f64
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "code/text correlation over {} codes", self.n_codes);
        for r in &self.rows {
            let top: Vec<String> = r
                .top_codes
                .iter()
                .take(3)
                .map(|&c| format!("{c}({:.2})", r.distribution[c]))
                .collect();
            let _ = writeln!(
                out,
                "  {:>4}  frames={:<6} purity={:.3}  top: {}",
                display(r.symbol),
                r.frames,
                r.purity,
                top.join(" ")
            );
        }
        let _ = writeln!(out, "mean purity {:.3}; skipped pairs {}", self.mean_purity(), self.skipped);
        out
    }

    /// Tab-separated rows: symbol, frames, purity, top codes, full distribution.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("symbol\tframes\tpurity\ttop_codes\tdistribution\n");
        for r in &self.rows {
            let top: Vec<String> = r.top_codes.iter().map(|c| c.to_string()).collect();
            let dist: Vec<String> = r.distribution.iter().map(|p| format!("{p:.6}")).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{}\t{}",
                display(r.symbol),
                r.frames,
                r.purity,
                top.join(","),
                dist.join(",")
            );
        }
        out
    }
}
