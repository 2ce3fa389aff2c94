use super::beam::{decode_utterance, PrefixScorer, SearchConfig};
use super::wer::{wer, WordErrors};
use crate::finetune::AsrModel;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub best_ctc_weight: f64,
    pub best_lm_weight: f64,
    pub best_wer: f64,
    /// `(λ_ctc, λ_lm, WER)` in grid order.
    pub table: Vec<(f64, f64, f64)>,
}

impl SweepResult {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("ctc_weight\tlm_weight\twer\n");
        for (c, l, w) in &self.table {
            s.push_str(&format!("{c}\t{l}\t{w:.6}\n"));
        }
        s
    }
}

/// Evaluates corpus WER for every `(λ_ctc, λ_lm)` pair. `decode(i, cfg)`
/// returns the transcript of utterance `i`. Ties go to the smaller λ_ctc,
/// then the smaller λ_lm.
pub fn sweep_grid(
    references: &[String],
    ctc_grid: &[f64],
    lm_grid: &[f64],
    base: &SearchConfig,
    mut decode: impl FnMut(usize, &SearchConfig) -> Result<String>,
) -> Result<SweepResult> {
    if references.is_empty() {
        return Err(Error::Argument("weight sweep needs a non-empty dev set".into()));
    }
    if ctc_grid.is_empty() || lm_grid.is_empty() {
        return Err(Error::Argument("weight grids must be non-empty".into()));
    }
    if let Some(bad) = ctc_grid.iter().chain(lm_grid).find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::Argument(format!("grid value {bad} outside [0, 1]")));
    }
    let mut table = Vec::new();
    for &c in ctc_grid {
        for &l in lm_grid {
            let cfg = SearchConfig {
                ctc_weight: c,
                lm_weight: l,
                ..*base
            };
            let mut errs = WordErrors::default();
            for (i, r) in references.iter().enumerate() {
                errs = errs + wer(&decode(i, &cfg)?, r);
            }
            table.push((c, l, errs.rate()));
        }
    }
    let &(best_ctc_weight, best_lm_weight, best_wer) = table
        .iter()
        .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.total_cmp(&b.0)).then(a.1.total_cmp(&b.1)))
        .expect("grid is non-empty");
    Ok(SweepResult {
        best_ctc_weight,
        best_lm_weight,
        best_wer,
        table,
    })
}

/// [`sweep_grid`] over a dev set of `(waveform, transcript)` pairs decoded
/// with `model` and an optional LM.
pub fn sweep_weights(
    model: &AsrModel,
    lm: Option<&dyn PrefixScorer>,
    dev: &[(Vec<f64>, String)],
    ctc_grid: &[f64],
    lm_grid: &[f64],
    base: &SearchConfig,
) -> Result<SweepResult> {
    let lm_grid: &[f64] = if lm.is_some() { lm_grid } else { &[0.0] };
    let refs: Vec<String> = dev.iter().map(|(_, t)| t.clone()).collect();
    sweep_grid(&refs, ctc_grid, lm_grid, base, |i, cfg| {
        let res = decode_utterance(model, lm, &dev[i].0, cfg)?;
        Ok(res.best().map(|h| model.vocab.decode(&h.tokens)).unwrap_or_default())
    })
}
