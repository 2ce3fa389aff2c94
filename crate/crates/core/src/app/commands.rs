use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::checkpoint::{write_atomic, Checkpoint};
use super::config::Config;
use super::runs::{
    asr_examples, decode_dataset, pretrain_examples, quantize_dataset, run_finetuning, run_pretraining, Dataset,
    DecodeOutcome, FinetuneOutcome,
};
use crate::audio::{synth_corpus, write_manifest, write_wav, ManifestEntry};
use crate::decode::{sweep_weights, train_char_lm, CharLM, LmTrainReport, PrefixScorer, SweepResult};
use crate::finetune::{init_from_pretrained, AsrModel, CharVocab};
use crate::nets::Backbone;
use crate::pretrain::{PretrainMetrics, PretrainModel};
use crate::quantizer::{code_text_report, read_codes, reduce_codes, write_codes, CodeTextReport, KMeansFit};
use crate::tensor::Adam;
use crate::{Error, Result};

fn kind_of(ck: &Checkpoint) -> &str {
    ck.meta("kind").unwrap_or("")
}

fn expect_kind(ck: &Checkpoint, kind: &str, path: &Path) -> Result<()> {
    if kind_of(ck) != kind {
        return Err(Error::Argument(format!(
            "{} holds a `{}` checkpoint, expected `{kind}`",
            path.display(),
            kind_of(ck)
        )));
    }
    Ok(())
}

fn config_header(cfg: &Config) -> String {
    cfg.to_text().lines().map(|l| format!("# {l}\n")).collect()
}

/// Writes a synthetic corpus (`wav/<id>.wav` plus `manifest.tsv`) under
/// `out_dir` and returns the manifest path.
pub fn cmd_synth(cfg: &Config, out_dir: &Path) -> Result<PathBuf> {
    let utts = synth_corpus(&cfg.synth())?;
    std::fs::create_dir_all(out_dir.join("wav"))?;
    let mut entries = Vec::new();
    for u in &utts {
        let rel = PathBuf::from("wav").join(format!("{}.wav", u.id));
        write_wav(out_dir.join(&rel), &u.waveform)?;
        entries.push(ManifestEntry {
            wav: rel,
            transcript: u.transcript.clone(),
        });
    }
    let manifest = out_dir.join("manifest.tsv");
    write_manifest(&manifest, &entries)?;
    log::info!("wrote {} utterances to {}", utts.len(), out_dir.display());
    Ok(manifest)
}

/// Fits k-means, writes the model and one code line per utterance.
pub fn cmd_quantize(cfg: &Config, manifest: &Path, kmeans_out: &Path, codes_out: &Path) -> Result<KMeansFit> {
    let ds = Dataset::load(manifest)?;
    let (fit, codes) = quantize_dataset(cfg, &ds)?;
    fit.model.save(kmeans_out)?;
    write_codes(codes_out, &codes)?;
    let n = codes.len().max(1) as f64;
    let rep: f64 = codes.iter().map(|c| c.len() as f64).sum::<f64>() / n;
    let red: f64 = codes.iter().map(|c| reduce_codes(c).len() as f64).sum::<f64>() / n;
    log::info!(
        "k-means objective {:?} -> {:?} over {} iterations",
        fit.objectives.first(),
        fit.objectives.last(),
        fit.objectives.len()
    );
    log::info!("average code length: repeated {rep:.2}, reduced {red:.2}");
    Ok(fit)
}

#[derive(Debug, Clone)]
pub struct PretrainPaths {
    pub manifest: PathBuf,
    pub codes: PathBuf,
    pub out: PathBuf,
    pub log: PathBuf,
    /// Copy pre-net and encoder tensors from this checkpoint.
    pub init_encoder: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    /// Resume even if the config fingerprint differs.
    pub force: bool,
}

fn copy_encoder(model: &PretrainModel, src: &Checkpoint) -> Result<usize> {
    let mut n = 0;
    for (name, t) in model.store.iter() {
        if !Backbone::is_encoder_param(name) {
            continue;
        }
        let rec = src
            .tensors
            .get(name)
            .ok_or_else(|| Error::Incompatible(format!("initializing checkpoint lacks {name}")))?;
        if rec.shape != t.shape() {
            return Err(Error::Incompatible(format!("{name}: shape {:?} vs {:?}", rec.shape, t.shape())));
        }
        t.data_mut().copy_from_slice(&rec.data);
        n += 1;
    }
    Ok(n)
}

pub fn cmd_pretrain(cfg: &Config, paths: &PretrainPaths) -> Result<Vec<PretrainMetrics>> {
    let ds = Dataset::load(&paths.manifest)?;
    let codes = read_codes(&paths.codes)?;
    let examples = pretrain_examples(cfg, &ds, &codes)?;
    let n = examples.len().max(1) as f64;
    log::info!(
        "decoder targets: {:?}, average length {:.2} (frame codes {:.2})",
        cfg.codes,
        examples.iter().map(|e| e.decoder_codes.len() as f64).sum::<f64>() / n,
        examples.iter().map(|e| e.frame_codes.len() as f64).sum::<f64>() / n,
    );
    let model = PretrainModel::new(&cfg.conv(), &cfg.arch(), cfg.seed)?;
    let mut opt = Adam::new(cfg.adam());
    let mut start = 0;
    if let Some(p) = &paths.resume {
        let ck = Checkpoint::load(p)?;
        expect_kind(&ck, "pretrain", p)?;
        if !paths.force {
            ck.check_fingerprint(cfg)?;
        }
        ck.load_into(&model.store)?;
        opt = ck.optimizer.clone().unwrap_or(opt);
        start = ck.step as usize;
    } else if let Some(p) = &paths.init_encoder {
        let ck = Checkpoint::load(p)?;
        let n = copy_encoder(&model, &ck)?;
        log::info!("initialized {n} encoder tensors from {}", p.display());
    }
    let mut log_text = config_header(cfg);
    let history = run_pretraining(cfg, &model, &examples, &mut opt, start, |m| {
        log::info!("{}", m.log_line());
        let _ = writeln!(log_text, "{}", m.log_line());
    })?;
    let step = start.max(cfg.pretrain_steps) as u64;
    Checkpoint::from_store(cfg, &model.store, step, Some(&opt))
        .with_meta("kind", "pretrain")
        .save(&paths.out)?;
    write_atomic(&paths.log, log_text.as_bytes())?;
    Ok(history)
}

#[derive(Debug, Clone)]
pub struct FinetunePaths {
    pub manifest: PathBuf,
    /// Pre-training checkpoint; `None` trains from scratch.
    pub init: Option<PathBuf>,
    pub out: PathBuf,
    pub log: PathBuf,
    pub resume: Option<PathBuf>,
    pub force: bool,
}

pub fn load_asr_model(path: &Path) -> Result<AsrModel> {
    let ck = Checkpoint::load(path)?;
    expect_kind(&ck, "asr", path)?;
    let vocab = CharVocab::from_header(ck.meta("vocab").unwrap_or(""))?;
    let model = AsrModel::new(&ck.config.conv(), &ck.config.arch(), vocab, ck.config.seed)?;
    ck.load_into(&model.store)?;
    Ok(model)
}

pub fn load_lm(path: &Path) -> Result<CharLM> {
    let ck = Checkpoint::load(path)?;
    expect_kind(&ck, "lm", path)?;
    let vocab = CharVocab::from_header(ck.meta("vocab").unwrap_or(""))?;
    let lm = CharLM::new(&ck.config.lm(), vocab)?;
    ck.load_into(&lm.store)?;
    Ok(lm)
}

pub fn cmd_finetune(cfg: &Config, paths: &FinetunePaths) -> Result<FinetuneOutcome> {
    let ds = Dataset::load(&paths.manifest)?.head(cfg.finetune_utts);
    let vocab = CharVocab::from_transcripts(ds.normalized_transcripts().iter().map(String::as_str));
    let (model, mut opt, start) = match (&paths.resume, &paths.init) {
        (Some(p), _) => {
            let ck = Checkpoint::load(p)?;
            expect_kind(&ck, "asr", p)?;
            if !paths.force {
                ck.check_fingerprint(cfg)?;
            }
            let model = load_asr_model(p)?;
            let opt = ck.optimizer.clone().unwrap_or_else(|| Adam::new(cfg.adam()));
            (model, opt, ck.step as usize)
        }
        (None, Some(p)) => {
            let ck = Checkpoint::load(p)?;
            expect_kind(&ck, "pretrain", p)?;
            let model = init_from_pretrained(&ck, &cfg.conv(), &cfg.arch(), vocab, cfg.seed)?;
            (model, Adam::new(cfg.adam()), 0)
        }
        (None, None) => (
            AsrModel::new(&cfg.conv(), &cfg.arch(), vocab, cfg.seed)?,
            Adam::new(cfg.adam()),
            0,
        ),
    };
    let examples = asr_examples(&model.vocab, &ds)?;
    let mut log_text = config_header(cfg);
    let outcome = run_finetuning(cfg, &model, &examples, &mut opt, start, |m| {
        log::info!("{}", m.log_line());
        let _ = writeln!(log_text, "{}", m.log_line());
    })?;
    for (step, w) in &outcome.evals {
        let _ = writeln!(log_text, "# step={step} train_wer={w:.6}");
    }
    let step = start.max(cfg.finetune_steps) as u64;
    Checkpoint::from_store(cfg, &model.store, step, Some(&opt))
        .with_meta("kind", "asr")
        .with_meta("vocab", model.vocab.to_header())
        .save(&paths.out)?;
    write_atomic(&paths.log, log_text.as_bytes())?;
    Ok(outcome)
}

/// Trains the character LM on the manifest transcripts.
pub fn cmd_train_lm(cfg: &Config, manifest: &Path, vocab_from: Option<&Path>, out: &Path) -> Result<LmTrainReport> {
    let ds = Dataset::load(manifest)?;
    let texts = ds.normalized_transcripts();
    let vocab = match vocab_from {
        Some(p) => load_asr_model(p)?.vocab,
        None => CharVocab::from_transcripts(texts.iter().map(String::as_str)),
    };
    let (lm, report) = train_char_lm(&texts, &vocab, &cfg.lm())?;
    log::info!(
        "lm perplexity {:.4} -> {:.4}",
        report.initial_perplexity,
        report.final_perplexity
    );
    Checkpoint::from_store(cfg, &lm.store, cfg.lm_steps as u64, None)
        .with_meta("kind", "lm")
        .with_meta("vocab", vocab.to_header())
        .save(out)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct DecodePaths {
    pub manifest: PathBuf,
    pub model: PathBuf,
    pub lm: Option<PathBuf>,
    pub out: PathBuf,
    pub nbest: Option<PathBuf>,
}

fn load_lm_for(model: &AsrModel, path: Option<&Path>) -> Result<Option<CharLM>> {
    let Some(p) = path else { return Ok(None) };
    let lm = load_lm(p)?;
    if lm.vocab != model.vocab {
        return Err(Error::Incompatible(format!(
            "language model {} uses a different character vocabulary",
            p.display()
        )));
    }
    Ok(Some(lm))
}

/// Writes `<id>\t<transcript>` lines and, optionally, the n-best lists.
pub fn cmd_decode(cfg: &Config, paths: &DecodePaths) -> Result<DecodeOutcome> {
    let ds = Dataset::load(&paths.manifest)?;
    let model = load_asr_model(&paths.model)?;
    let lm = load_lm_for(&model, paths.lm.as_deref())?;
    let refs = ds.normalized_transcripts();
    let lm_ref = lm.as_ref().map(|l| l as &dyn PrefixScorer);
    let outcome = decode_dataset(&model, lm_ref, &ds.samples, &refs, &cfg.search())?;
    let mut text = String::new();
    let mut nbest = String::from("id\trank\tscore\tatt\tctc\tlm\tforced\ttranscript\n");
    for ((id, hyp), res) in ds.ids.iter().zip(&outcome.hypotheses).zip(&outcome.results) {
        let _ = writeln!(text, "{id}\t{hyp}");
        for (r, h) in res.nbest.iter().enumerate() {
            let _ = writeln!(
                nbest,
                "{id}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
                r + 1,
                h.score,
                h.att_logp,
                h.ctc_logp,
                h.lm_logp,
                h.forced,
                model.vocab.decode(&h.tokens)
            );
        }
    }
    write_atomic(&paths.out, text.as_bytes())?;
    if let Some(p) = &paths.nbest {
        write_atomic(p, nbest.as_bytes())?;
    }
    log::info!("WER {:.4} over {} utterances", outcome.wer, ds.len());
    if outcome.forced > 0 {
        log::warn!("{} utterances hit max_len", outcome.forced);
    }
    Ok(outcome)
}

/// Sweeps the CTC and LM weights on a dev manifest and writes the table.
pub fn cmd_sweep(cfg: &Config, manifest: &Path, model: &Path, lm: Option<&Path>, out: &Path) -> Result<SweepResult> {
    let ds = Dataset::load(manifest)?;
    let model = load_asr_model(model)?;
    let lm = load_lm_for(&model, lm)?;
    let dev: Vec<(Vec<f64>, String)> = ds.samples.iter().cloned().zip(ds.normalized_transcripts()).collect();
    let res = sweep_weights(
        &model,
        lm.as_ref().map(|l| l as &dyn PrefixScorer),
        &dev,
        &cfg.sweep_ctc_grid,
        &cfg.sweep_lm_grid,
        &cfg.search(),
    )?;
    write_atomic(out, res.to_tsv().as_bytes())?;
    log::info!(
        "best ctc_weight={} lm_weight={} WER {:.4}",
        res.best_ctc_weight,
        res.best_lm_weight,
        res.best_wer
    );
    Ok(res)
}

/// Code/text correlation report.
pub fn cmd_analyze(cfg: &Config, manifest: &Path, codes: &Path, out: &Path) -> Result<CodeTextReport> {
    let ds = Dataset::load(manifest)?;
    let codes = read_codes(codes)?;
    if codes.len() != ds.len() {
        return Err(Error::Argument(format!("{} code lines for {} utterances", codes.len(), ds.len())));
    }
    let pairs: Vec<_> = codes.into_iter().zip(ds.transcripts).collect();
    let report = code_text_report(&pairs, cfg.n_codes);
    write_atomic(out, report.to_text().as_bytes())?;
    log::info!("mean purity {:.4}", report.mean_purity());
    Ok(report)
}
