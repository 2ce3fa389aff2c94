//! Acceptance gate. One test per criterion; each prints a single
//! `criterion N ... PASS|FAIL` line before asserting.

mod common;

use std::collections::HashSet;
use std::rc::Rc;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use speechcode::app::{self, Checkpoint, Config, Dataset, DecodePaths, FinetunePaths, PretrainPaths};
use speechcode::audio::synth_corpus;
use speechcode::decode::{joint_beam_search, CtcFrames, CtcPrefixCache, SearchConfig};
use speechcode::finetune::{
    ctc_log_likelihood, ctc_loss, init_from_pretrained, lr_schedule_tristage, AsrExample, AsrModel, CharVocab,
};
use speechcode::nets::{code_distribution, Backbone, EncoderPostNet, MultiHeadAttention};
use speechcode::params::{rng_for, ParamStore};
use speechcode::pretrain::{
    lr_schedule_pretrain, mask_start_count, mlm_loss, sample_span_starts, spans_to_mask, CodeTargets, LossWeights,
    MaskSpec, PretrainExample, PretrainModel,
};
use speechcode::quantizer::{reduce_codes, CodeSequence};
use speechcode::tensor::{self, no_grad, Adam, Tensor};

use common::*;

// Pinned tolerances.
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-5;
const GRAD_REL_FLOOR: f64 = 1e-5;
const GRAD_INSTANCES: usize = 20;
const CTC_ABS_TOL: f64 = 1e-10;
const CTC_MIN_INSTANCES: usize = 200;
const DIST_SUM_TOL: f64 = 1e-12;
const DIST_SCALE_TOL: f64 = 1e-12;
const ORTHO_CASE_TOL: f64 = 1e-12;
const ORTHO_REFERENCE_VALUE: f64 = 0.99986;
const ORTHO_REFERENCE_TOL: f64 = 5e-6;
const REDUCTION_SEQUENCES: usize = 10_000;
const MASK_T: usize = 1000;
const MASK_SAMPLES: usize = 1000;
const MASK_REL_TOL: f64 = 0.10;
const SCHEDULE_PROBES: usize = 20;
const SEARCH_SCORE_TOL: f64 = 1e-10;
const LOSS_REDUCTION_MIN: f64 = 0.30;
const OVERFIT_SEEDS: [u64; 3] = [0, 1, 2];
const OVERFIT_FINETUNE_UTTS: usize = 10;
const OVERFIT_EVAL_EVERY: usize = 10;
const OVERFIT_RUNTIME_S: f64 = 15.0 * 60.0;

fn report(n: usize, name: &str, ok: bool, detail: String) {
    println!("criterion {n} [{name}]: {} ({detail})", if ok { "PASS" } else { "FAIL" });
}

// ---------------------------------------------------------------- 1

type Instance = (Vec<Tensor>, Box<dyn Fn(&[Tensor]) -> Tensor>);

fn param(rng: &mut rand_chacha::ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::param(random_vec(rng, n, 1.0), shape).unwrap()
}

// Reduces an op output to a scalar with fixed random weights.
fn project(y: Tensor, seed: u64) -> Tensor {
    let mut r = rng(seed);
    let w = Tensor::new(random_vec(&mut r, y.numel(), 1.0), y.shape()).unwrap();
    tensor::sum(&tensor::mul(&y, &w).unwrap())
}

fn op_cases() -> Vec<(&'static str, Box<dyn Fn(&mut rand_chacha::ChaCha8Rng) -> Instance>)> {
    fn dims(r: &mut rand_chacha::ChaCha8Rng) -> (usize, usize) {
        (r.gen_range(1..5), r.gen_range(1..6))
    }
    vec![
        ("matmul", Box::new(|r| {
            let (m, k) = dims(r);
            let n = r.gen_range(1..5);
            (vec![param(r, &[m, k]), param(r, &[k, n])], Box::new(|x| project(tensor::matmul(&x[0], &x[1]).unwrap(), 1)))
        })),
        ("add", Box::new(|r| {
            let (m, n) = dims(r);
            (vec![param(r, &[m, n]), param(r, &[m, n])], Box::new(|x| project(tensor::add(&x[0], &x[1]).unwrap(), 2)))
        })),
        ("add_row_broadcast", Box::new(|r| {
            let (m, n) = dims(r);
            (vec![param(r, &[m, n]), param(r, &[n])], Box::new(|x| project(tensor::add(&x[0], &x[1]).unwrap(), 3)))
        })),
        ("add_scalar", Box::new(|r| {
            let (m, n) = dims(r);
            (vec![param(r, &[m, n]), param(r, &[1])], Box::new(|x| project(tensor::add(&x[0], &x[1]).unwrap(), 4)))
        })),
        ("sub", Box::new(|r| {
            let (m, n) = dims(r);
            (vec![param(r, &[m, n]), param(r, &[m, n])], Box::new(|x| project(tensor::sub(&x[0], &x[1]).unwrap(), 5)))
        })),
        ("mul", Box::new(|r| {
            let (m, n) = dims(r);
            (vec![param(r, &[m, n]), param(r, &[m, n])], Box::new(|x| project(tensor::mul(&x[0], &x[1]).unwrap(), 6)))
        })),
        ("scale", Box::new(|r| {
            let (m, n) = dims(r);
            let c: f64 = r.gen_range(-3.0..3.0);
            (vec![param(r, &[m, n])], Box::new(move |x| project(tensor::scale(&x[0], c), 7)))
        })),
        ("sum", Box::new(|r| {
            let (m, n) = dims(r);
            (vec![param(r, &[m, n])], Box::new(|x| tensor::scale(&tensor::sum(&x[0]), 1.7)))
        })),
        ("mean", Box::new(|r| {
            let (m, n) = dims(r);
            (vec![param(r, &[m, n])], Box::new(|x| tensor::scale(&tensor::mean(&x[0]), -2.3)))
        })),
        ("gelu", Box::new(|r| {
            let (m, n) = dims(r);
            (vec![param(r, &[m, n])], Box::new(|x| project(tensor::gelu(&tensor::scale(&x[0], 3.0)), 8)))
        })),
        ("softmax", Box::new(|r| {
            let (m, n) = dims(r);
            let tau: f64 = r.gen_range(0.1..2.0);
            (vec![param(r, &[m, n])], Box::new(move |x| project(tensor::softmax(&x[0], tau).unwrap(), 9)))
        })),
        ("log_softmax", Box::new(|r| {
            let (m, n) = dims(r);
            (vec![param(r, &[m, n])], Box::new(|x| project(tensor::log_softmax(&x[0]), 10)))
        })),
        ("masked_softmax", Box::new(|r| {
            let (m, n) = dims(r);
            let mut allowed: Vec<bool> = (0..m * n).map(|_| r.gen_bool(0.6)).collect();
            if m > 1 {
                allowed[..n].iter_mut().for_each(|a| *a = false);
            }
            let allowed = Rc::new(allowed);
            (vec![param(r, &[m, n])], Box::new(move |x| project(tensor::masked_softmax(&x[0], &allowed).unwrap(), 11)))
        })),
        ("layer_norm", Box::new(|r| {
            let (m, _) = dims(r);
            let n = r.gen_range(2..7);
            (
                vec![param(r, &[m, n]), param(r, &[n]), param(r, &[n])],
                Box::new(|x| project(tensor::layer_norm(&x[0], &x[1], &x[2], 1e-5).unwrap(), 12)),
            )
        })),
        ("l2_normalize", Box::new(|r| {
            let (m, n) = dims(r);
            (vec![param(r, &[m, n])], Box::new(|x| project(tensor::l2_normalize(&x[0], 1e-8), 13)))
        })),
        ("cosine_sim", Box::new(|r| {
            let n = r.gen_range(1..8);
            (vec![param(r, &[n]), param(r, &[n])], Box::new(|x| tensor::cosine_sim(&x[0], &x[1]).unwrap()))
        })),
        ("cross_entropy", Box::new(|r| {
            let (m, n) = dims(r);
            let targets: Vec<usize> = (0..m).map(|i| if i % 3 == 2 { usize::MAX } else { r.gen_range(0..n) }).collect();
            (
                vec![param(r, &[m, n])],
                Box::new(move |x| tensor::cross_entropy(&tensor::log_softmax(&x[0]), &targets, Some(usize::MAX)).unwrap()),
            )
        })),
        ("index_rows", Box::new(|r| {
            let (v, d) = dims(r);
            let ids: Vec<usize> = (0..r.gen_range(1..6)).map(|_| r.gen_range(0..v)).collect();
            (vec![param(r, &[v, d])], Box::new(move |x| project(tensor::index_rows(&x[0], &ids).unwrap(), 14)))
        })),
        ("gather", Box::new(|r| {
            let (m, n) = dims(r);
            let k = r.gen_range(1..10);
            let idx = Rc::new((0..k).map(|_| r.gen_range(0..m * n)).collect::<Vec<_>>());
            (vec![param(r, &[m, n])], Box::new(move |x| project(tensor::gather(&x[0], idx.clone(), &[k]).unwrap(), 15)))
        })),
        ("replace_rows", Box::new(|r| {
            let (m, n) = dims(r);
            let rows: Vec<usize> = (0..m).filter(|_| r.gen_bool(0.5)).collect();
            (
                vec![param(r, &[m, n]), param(r, &[n])],
                Box::new(move |x| project(tensor::replace_rows(&x[0], &rows, &x[1]).unwrap(), 16)),
            )
        })),
        ("reshape", Box::new(|r| {
            let (m, n) = dims(r);
            (vec![param(r, &[m, n])], Box::new(move |x| project(tensor::reshape(&x[0], &[n, m]).unwrap(), 17)))
        })),
        ("transpose", Box::new(|r| {
            let (m, n) = dims(r);
            (vec![param(r, &[m, n])], Box::new(|x| project(tensor::transpose(&x[0]).unwrap(), 18)))
        })),
        ("slice_cols", Box::new(|r| {
            let m = r.gen_range(1..5);
            let n = r.gen_range(2..7);
            let a = r.gen_range(0..n - 1);
            let b = r.gen_range(a + 1..=n);
            (vec![param(r, &[m, n])], Box::new(move |x| project(tensor::slice_cols(&x[0], a, b).unwrap(), 19)))
        })),
        ("concat_cols", Box::new(|r| {
            let m = r.gen_range(1..5);
            let (a, b) = (r.gen_range(1..4), r.gen_range(1..4));
            (
                vec![param(r, &[m, a]), param(r, &[m, b])],
                Box::new(|x| project(tensor::concat_cols(&[x[0].clone(), x[1].clone()]).unwrap(), 20)),
            )
        })),
        ("conv1d", Box::new(|r| {
            let (c_in, c_out) = (r.gen_range(1..4), r.gen_range(1..4));
            let k = r.gen_range(1..5);
            let stride = r.gen_range(1..4);
            let t = k + r.gen_range(0..8);
            (
                vec![param(r, &[t, c_in]), param(r, &[c_out, c_in, k])],
                Box::new(move |x| project(tensor::conv1d(&x[0], &x[1], stride).unwrap(), 21)),
            )
        })),
        ("ctc_loss", Box::new(|r| {
            let v = r.gen_range(2..6);
            let len = r.gen_range(0..4);
            let target: Vec<usize> = (0..len).map(|_| r.gen_range(1..v)).collect();
            let t = speechcode::finetune::min_frames(&target).max(1) + r.gen_range(0..4);
            (
                vec![param(r, &[t, v])],
                Box::new(move |x| ctc_loss(&tensor::log_softmax(&x[0]), &target, 0).unwrap()),
            )
        })),
        ("attention", Box::new(|r| {
            let mut store = ParamStore::new();
            let mut init = rng_for(r.gen(), "attn");
            let att = MultiHeadAttention::new(&mut store, "a", 4, 2, Some(2), &mut init).unwrap();
            let (tq, tk) = (r.gen_range(1..5), r.gen_range(1..5));
            let mut inputs = vec![param(r, &[tq, 4]), param(r, &[tk, 4])];
            inputs.extend(store.iter().map(|(_, t)| t.clone()));
            let mask = Rc::new((0..tq * tk).map(|i| i % 3 != 1).collect::<Vec<_>>());
            (
                inputs,
                Box::new(move |x| project(att.forward(&x[0], &x[1], Some(&mask)).unwrap(), 22)),
            )
        })),
    ]
}

fn tiny_config() -> Config {
    let mut cfg = Config::default();
    cfg.apply_overrides(&[
        "conv_channels=3".into(),
        "conv_kernels=10,3".into(),
        "conv_strides=5,2".into(),
        "d_model=8".into(),
        "d_ffn=12".into(),
        "n_heads=2".into(),
        "enc_layers=1".into(),
        "dec_layers=1".into(),
        "n_codes=5".into(),
        "code_embed_dim=6".into(),
        "rel_pos_max_distance=3".into(),
    ])
    .unwrap();
    cfg
}

#[test]
fn criterion_1_gradient_suite() {
    let start = Instant::now();
    let mut worst_overall: f64 = 0.0;
    let mut failures = Vec::new();
    let mut total_probes = 0;
    for (name, make) in op_cases() {
        let mut r = rng(1000);
        let mut worst: f64 = 0.0;
        for _ in 0..GRAD_INSTANCES {
            let (inputs, f) = make(&mut r);
            let loss = || f(&inputs);
            let (w, n) = grad_check(&loss, &inputs, GRAD_STEP, GRAD_REL_FLOOR, None);
            worst = worst.max(w);
            total_probes += n;
        }
        if !(worst < GRAD_REL_TOL) {
            failures.push(format!("{name}: {worst:.2e}"));
        }
        worst_overall = worst_overall.max(worst);
    }

    let cfg = tiny_config();
    let conv = cfg.conv();
    let arch = cfg.arch();
    let mut worst_pre: f64 = 0.0;
    let mut worst_ft: f64 = 0.0;
    let mut r = rng(2000);
    for inst in 0..GRAD_INSTANCES {
        let frames = r.gen_range(3..8);
        let samples = random_vec(&mut r, conv.receptive_field() + conv.hop() * (frames - 1), 0.5);
        let model = PretrainModel::new(&conv, &arch, inst as u64).unwrap();
        let codes = CodeSequence::frames((0..frames).map(|_| r.gen_range(0..arch.n_codes)).collect());
        let ex = PretrainExample::new(samples.clone(), &codes, CodeTargets::Reduced);
        let mask: Vec<usize> = (0..frames).filter(|_| r.gen_bool(0.5)).collect();
        let inputs: Vec<Tensor> = model.store.iter().map(|(_, t)| t.clone()).collect();
        let loss = || {
            model
                .batch_loss(std::slice::from_ref(&ex), LossWeights::default(), std::slice::from_ref(&mask))
                .unwrap()
                .0
        };
        let (w, n) = grad_check(&loss, &inputs, GRAD_STEP, GRAD_REL_FLOOR, Some((2, &mut r)));
        worst_pre = worst_pre.max(w);
        total_probes += n;

        let vocab = CharVocab::new("AB".chars());
        let asr = AsrModel::new(&conv, &arch, vocab, inst as u64).unwrap();
        let len = r.gen_range(1..=frames.min(3));
        let tokens: Vec<usize> = (0..len).map(|_| r.gen_range(0..2)).collect();
        if speechcode::finetune::min_frames(&tokens) > frames {
            continue;
        }
        let ex = AsrExample { samples, tokens };
        let inputs: Vec<Tensor> = asr.store.iter().map(|(_, t)| t.clone()).collect();
        let loss = || asr.batch_loss(std::slice::from_ref(&ex), 0.5, 0.5).unwrap().0;
        let (w, n) = grad_check(&loss, &inputs, GRAD_STEP, GRAD_REL_FLOOR, Some((2, &mut r)));
        worst_ft = worst_ft.max(w);
        total_probes += n;
    }
    if !(worst_pre < GRAD_REL_TOL) {
        failures.push(format!("pretrain loss: {worst_pre:.2e}"));
    }
    if !(worst_ft < GRAD_REL_TOL) {
        failures.push(format!("finetune loss: {worst_ft:.2e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = failures.is_empty() && secs < 120.0;
    report(
        1,
        "gradient suite",
        ok,
        format!(
            "{} ops + 2 losses, {total_probes} probes, worst op {worst_overall:.2e}, pretrain {worst_pre:.2e}, finetune {worst_ft:.2e}, {secs:.1}s {failures:?}",
            op_cases().len()
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_ctc_oracle() {
    let start = Instant::now();
    let mut r = rng(3000);
    let mut instances = 0;
    let mut worst: f64 = 0.0;
    let mut mismatches = Vec::new();
    let log_close = |a: f64, b: f64| {
        if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
            0.0
        } else {
            (a - b).abs()
        }
    };
    for round in 0..10 {
        for t in 1..=8 {
            for v in 2..=4 {
                instances += 1;
                let blank = v - 1;
                let lp = random_log_probs(&mut r, t, v);
                let table = ctc_enumerate(&lp, v, blank);
                let len = r.gen_range(0..=3);
                let target: Vec<usize> = (0..len).map(|_| r.gen_range(0..blank)).collect();
                let lp_t = Tensor::new(lp.clone(), &[t, v]).unwrap();
                match table.get(&target) {
                    Some(&p) => {
                        let loss = ctc_loss(&lp_t, &target, blank).unwrap().item();
                        let e = (loss + p.ln()).abs();
                        worst = worst.max(e);
                        if !(e < CTC_ABS_TOL) {
                            mismatches.push(format!("loss T={t} V={v} {target:?}: {e:.2e}"));
                        }
                    }
                    None => {
                        if !matches!(
                            ctc_loss(&lp_t, &target, blank),
                            Err(speechcode::Error::InfeasibleAlignment { .. })
                        ) {
                            mismatches.push(format!("T={t} V={v} {target:?}: expected infeasible"));
                        }
                    }
                }
                // Prefix scores for every prefix up to length 3.
                let mut cache = CtcPrefixCache::new(CtcFrames::new(lp.clone(), v, blank).unwrap());
                for seq in all_sequences(blank, 3) {
                    let Some((&c, g)) = seq.split_last() else { continue };
                    let want: f64 = table
                        .iter()
                        .filter(|(l, _)| l.starts_with(&seq))
                        .map(|(_, p)| p)
                        .sum::<f64>()
                        .ln();
                    let got = cache.extend(g, c).unwrap();
                    let e = log_close(got, want);
                    if !(e < CTC_ABS_TOL) {
                        mismatches.push(format!("prefix T={t} V={v} {seq:?}: {got} vs {want}"));
                    } else {
                        worst = worst.max(e);
                    }
                    let full = cache.final_score(&seq).unwrap();
                    let want_full = table.get(&seq).map_or(f64::NEG_INFINITY, |p| p.ln());
                    let e = log_close(full, want_full);
                    if !(e < CTC_ABS_TOL) {
                        mismatches.push(format!("complete T={t} V={v} {seq:?}: {full} vs {want_full}"));
                    } else {
                        worst = worst.max(e);
                    }
                    if let Ok(ll) = ctc_log_likelihood(&lp, v, &seq, blank) {
                        if !((ll - full).abs() < CTC_ABS_TOL) {
                            mismatches.push(format!("prefix vs loss T={t} {seq:?}"));
                        }
                    }
                }
            }
        }
        let _ = round;
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = mismatches.is_empty() && instances >= CTC_MIN_INSTANCES && secs < 60.0;
    report(
        2,
        "CTC oracle",
        ok,
        format!(
            "{instances} instances, worst abs err {worst:.2e}, {secs:.1}s, mismatches {:?}",
            &mismatches[..mismatches.len().min(5)]
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_3_code_distribution_and_masked_loss() {
    let mut r = rng(4000);
    let mut problems = Vec::new();
    let mut worst_sum: f64 = 0.0;
    let mut worst_scale: f64 = 0.0;
    for i in 0..100 {
        let (d, c, e) = (r.gen_range(2..9), r.gen_range(2..12), r.gen_range(2..9));
        let mut store = ParamStore::new();
        let post = EncoderPostNet::new(&mut store, "p", d, c, e, &mut rng_for(i, "post")).unwrap();
        let h = Tensor::new(random_vec(&mut r, d, 2.0), &[d]).unwrap();
        let p = code_distribution(&h, &post).unwrap().to_vec();
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
        for alpha in [1e-3, 0.5, 7.0, 1e4] {
            let hs = tensor::scale(&h, alpha);
            let ps = code_distribution(&hs, &post).unwrap().to_vec();
            let diff = p.iter().zip(&ps).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst_scale = worst_scale.max(diff);
        }
    }
    if !(worst_sum <= DIST_SUM_TOL) {
        problems.push(format!("sum error {worst_sum:.2e}"));
    }
    if !(worst_scale <= DIST_SCALE_TOL) {
        problems.push(format!("scale error {worst_scale:.2e}"));
    }

    // Four orthogonal code embeddings, projection = identity, h on the first axis.
    let mut store = ParamStore::new();
    let mut post = EncoderPostNet::new(&mut store, "p", 4, 4, 4, &mut rng_for(0, "post")).unwrap();
    let eye: Vec<f64> = (0..16).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect();
    post.proj = Tensor::new(eye.clone(), &[4, 4]).unwrap();
    post.code_embed = Tensor::new(eye, &[4, 4]).unwrap();
    let h = Tensor::new(vec![0.7, 0.0, 0.0, 0.0], &[4]).unwrap();
    let p = code_distribution(&h, &post).unwrap().to_vec();
    let hand = 10f64.exp() / (10f64.exp() + 3.0);
    let rest = 1.0 / (10f64.exp() + 3.0);
    if !((p[0] - hand).abs() <= ORTHO_CASE_TOL && p[1..].iter().all(|q| (q - rest).abs() <= ORTHO_CASE_TOL)) {
        problems.push(format!("orthogonal case {p:?} vs {hand}"));
    }
    if !((p[0] - ORTHO_REFERENCE_VALUE).abs() <= ORTHO_REFERENCE_TOL) {
        problems.push(format!("orthogonal case {} vs {ORTHO_REFERENCE_VALUE}", p[0]));
    }

    // Masked loss ignores unmasked positions, in value and gradient.
    let mut unmasked_issues = 0;
    for i in 0..50 {
        let (t, d, c) = (r.gen_range(2..12), 6, 7);
        let mut store = ParamStore::new();
        let post = EncoderPostNet::new(&mut store, "p", d, c, 5, &mut rng_for(i, "post")).unwrap();
        let masked: Vec<usize> = (0..t).filter(|_| r.gen_bool(0.4)).collect();
        let codes: Vec<usize> = (0..t).map(|_| r.gen_range(0..c)).collect();
        let hv = random_vec(&mut r, t * d, 1.0);
        let run = |hv: &[f64], codes: &[usize]| {
            let h = Tensor::param(hv.to_vec(), &[t, d]).unwrap();
            store.zero_grad();
            let l = mlm_loss(&h, codes, &masked, &post).unwrap();
            let value = l.item();
            if masked.is_empty() {
                return (value, vec![], vec![]);
            }
            l.backward().unwrap();
            let gh = h.grad().unwrap_or_else(|| vec![0.0; t * d]);
            let gp: Vec<Vec<f64>> = store.iter().map(|(_, p)| p.grad().unwrap_or_default()).collect();
            (value, gh, gp)
        };
        let base = run(&hv, &codes);
        let mut hv2 = hv.clone();
        let mut codes2 = codes.clone();
        for row in (0..t).filter(|x| !masked.contains(x)) {
            for j in 0..d {
                hv2[row * d + j] += r.gen_range(-5.0..5.0);
            }
            codes2[row] = r.gen_range(0..c);
        }
        let pert = run(&hv2, &codes2);
        if base.0.to_bits() != pert.0.to_bits() || base.1 != pert.1 || base.2 != pert.2 {
            unmasked_issues += 1;
        }
    }
    if unmasked_issues > 0 {
        problems.push(format!("{unmasked_issues} masked-loss cases changed under unmasked perturbation"));
    }
    let ok = problems.is_empty();
    report(
        3,
        "code distribution / masked loss",
        ok,
        format!("sum err {worst_sum:.1e}, scale err {worst_scale:.1e}, p_orth {:.6} {problems:?}", p[0]),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_4_code_reduction() {
    let mut r = rng(5000);
    let mut bad = 0;
    for _ in 0..REDUCTION_SEQUENCES {
        let n = r.gen_range(0..40);
        let k = r.gen_range(1..6);
        let z = CodeSequence::frames((0..n).map(|_| r.gen_range(0..k)).collect());
        let red = reduce_codes(&z);
        let twice = reduce_codes(&red);
        let no_dups = red.codes.windows(2).all(|w| w[0] != w[1]);
        let mut it = z.codes.iter();
        let subseq = red.codes.iter().all(|c| it.any(|x| x == c));
        let runs = z.codes.iter().enumerate().filter(|(i, c)| *i == 0 || z.codes[i - 1] != **c).count();
        if twice.codes != red.codes || !no_dups || !subseq || red.len() != runs {
            bad += 1;
        }
    }
    let zzz = reduce_codes(&CodeSequence::frames(vec![7, 7, 7]));
    let ok = bad == 0 && zzz.codes == vec![7];
    println!("reference only: published average code length 358 (repeated) -> 216 (reduced)");
    report(
        4,
        "code reduction",
        ok,
        format!("{REDUCTION_SEQUENCES} sequences, {bad} violations, [z,z,z] -> {:?}", zzz.codes),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 5

// Probability that frame i stays unmasked: none of the k starts drawn from
// n positions falls in the c positions whose span covers i.
fn uncovered_prob(n: usize, k: usize, c: usize) -> f64 {
    (0..k).map(|j| (n - c - j) as f64 / (n - j) as f64).product::<f64>().max(0.0)
}

#[test]
fn criterion_5_masking_statistics() {
    let spec = MaskSpec::default();
    let expected_starts = (0.08 * MASK_T as f64).ceil() as usize;
    let mut bad_counts = 0;
    let mut total = 0usize;
    for s in 0..MASK_SAMPLES {
        let starts = sample_span_starts(MASK_T, &spec, &mut rng_for(s as u64, "mask"));
        let distinct: HashSet<_> = starts.iter().collect();
        if starts.len() != expected_starts || distinct.len() != starts.len() {
            bad_counts += 1;
        }
        total += spans_to_mask(MASK_T, &starts, spec.span_len).len();
    }
    let ours = total as f64 / (MASK_SAMPLES * MASK_T) as f64;

    // Independent simulation: rejection-sample distinct starts with another RNG.
    let n_pos = MASK_T - spec.span_len + 1;
    let mut sim = StdRng::seed_from_u64(77);
    let mut sim_total = 0usize;
    for _ in 0..MASK_SAMPLES {
        let mut starts = HashSet::new();
        while starts.len() < expected_starts {
            starts.insert(sim.gen_range(0..n_pos));
        }
        let mut covered = vec![false; MASK_T];
        for s in starts {
            for c in covered.iter_mut().skip(s).take(spec.span_len) {
                *c = true;
            }
        }
        sim_total += covered.iter().filter(|&&c| c).count();
    }
    let simulated = sim_total as f64 / (MASK_SAMPLES * MASK_T) as f64;
    let exact: f64 = (0..MASK_T)
        .map(|i| {
            let lo = i.saturating_sub(spec.span_len - 1);
            let hi = i.min(n_pos - 1);
            1.0 - uncovered_prob(n_pos, expected_starts, hi - lo + 1)
        })
        .sum::<f64>()
        / MASK_T as f64;
    let rel = (ours - simulated).abs() / simulated;
    let ok = bad_counts == 0 && mask_start_count(MASK_T, &spec) == expected_starts && rel <= MASK_REL_TOL;
    report(
        5,
        "masking statistics",
        ok,
        format!(
            "{expected_starts} starts per sample ({bad_counts} bad), E|M|/T {ours:.4} vs simulation {simulated:.4} (rel {rel:.3}); closed form {exact:.4}"
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_6_schedules() {
    let mut problems = Vec::new();
    let peak = 2f64.powi(-12);
    for total in [1000usize, 25_000, 400_000] {
        let boundary = total * 8 / 100;
        if lr_schedule_pretrain(boundary, total, peak) != peak {
            problems.push(format!("pretrain peak at {boundary}/{total}"));
        }
        if lr_schedule_pretrain(total, total, peak) != 0.0 {
            problems.push(format!("pretrain end {total}"));
        }
        let before = lr_schedule_pretrain(boundary - 1, total, peak);
        let after = lr_schedule_pretrain(boundary + 1, total, peak);
        if !(before < peak && after < peak) {
            problems.push(format!("pretrain not peaked at {boundary}/{total}"));
        }
    }
    // Tri-stage against the piecewise form evaluated as a single rational.
    let total = 1000usize;
    let mut r = rng(6000);
    let mut probes: Vec<usize> = vec![0, 99, 100, 300, 499, 500, 750, 1000];
    while probes.len() < SCHEDULE_PROBES {
        probes.push(r.gen_range(0..=total));
    }
    for &s in &probes {
        let (num, den) = if 10 * s < total {
            (s as u64, (total / 10) as u64)
        } else if 2 * s < total {
            (1, 1)
        } else {
            ((total - s) as u64, (total / 2) as u64)
        };
        let want = peak * (num as f64 / den as f64);
        let got = lr_schedule_tristage(s, total, peak);
        if got != want {
            problems.push(format!("tristage step {s}: {got} vs {want}"));
        }
    }
    for reference_peak in [2e-5, 4e-5] {
        if lr_schedule_tristage(7500, 25_000, reference_peak) != reference_peak {
            problems.push(format!("tristage hold {reference_peak}"));
        }
    }
    let ok = problems.is_empty();
    report(6, "schedules", ok, format!("{} tri-stage probes {problems:?}", probes.len()));
    assert!(ok);
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_7_initialization_contract() {
    let cfg = Config::default();
    let (conv, arch) = (cfg.conv(), cfg.arch());
    let pre = PretrainModel::new(&conv, &arch, 31).unwrap();
    let ck = Checkpoint::from_store(&cfg, &pre.store, 200, None);
    let vocab = CharVocab::new("ABC ".chars());
    let asr = init_from_pretrained(&ck, &conv, &arch, vocab.clone(), 5).unwrap();
    let mut problems = Vec::new();

    let mut copied = 0;
    for (name, t) in asr.store.iter() {
        if Backbone::is_backbone_param(name) {
            let rec = &ck.tensors[name];
            let same = rec.shape == t.shape()
                && rec.data.iter().zip(t.data().iter()).all(|(a, b)| a.to_bits() == b.to_bits());
            if !same {
                problems.push(format!("{name} not copied bit-exactly"));
            }
            copied += 1;
        }
    }
    let backbone_in_ckpt = ck.tensors.keys().filter(|k| Backbone::is_backbone_param(k)).count();
    if copied != backbone_in_ckpt {
        problems.push(format!("{copied} of {backbone_in_ckpt} backbone tensors present"));
    }
    if asr.store.names().any(|n| n.starts_with("enc_post.") || n == "mask_emb") {
        problems.push("encoder post-net or mask embedding carried over".into());
    }
    for name in ["dec_pre.embed", "dec_post.w", "dec_post.b"] {
        if ck.tensors[name].shape == asr.store.get(name).unwrap().shape() {
            problems.push(format!("{name} has the pre-training shape"));
        }
    }
    let again = init_from_pretrained(&ck, &conv, &arch, vocab.clone(), 5).unwrap();
    let other = init_from_pretrained(&ck, &conv, &arch, vocab, 6).unwrap();
    let fresh = |m: &AsrModel| m.store.get("ctc_head.w").unwrap().to_vec();
    if fresh(&again) != fresh(&asr) || fresh(&other) == fresh(&asr) {
        problems.push("fresh layers not determined by the seed".into());
    }

    let utt = &synth_corpus(&cfg.synth()).unwrap()[0];
    let (a, b) = no_grad(|| {
        let x = pre.backbone.features(&utt.waveform.samples).unwrap();
        (pre.backbone.encode(&x).unwrap().to_vec(), asr.encode(&utt.waveform.samples).unwrap().to_vec())
    });
    if a.iter().zip(&b).any(|(x, y)| x.to_bits() != y.to_bits()) || a.len() != b.len() {
        problems.push("encoder outputs differ".into());
    }

    let mut wrong = arch.clone();
    wrong.d_model = 32;
    match init_from_pretrained(&ck, &conv, &wrong, CharVocab::new("A".chars()), 0) {
        Err(speechcode::Error::Incompatible(msg)) if msg.contains("d_model") => {}
        other => problems.push(format!("mismatch not reported: {other:?}")),
    }
    let ok = problems.is_empty();
    report(7, "initialization contract", ok, format!("{copied} tensors copied {problems:?}"));
    assert!(ok);
}

// ---------------------------------------------------------------- 8

fn exhaustive_ranking(
    seqs: &[Vec<usize>],
    score: impl Fn(&[usize]) -> f64,
) -> Vec<(Vec<usize>, f64)> {
    let mut ranked: Vec<(Vec<usize>, f64)> = seqs.iter().map(|s| (s.clone(), score(s))).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

#[test]
fn criterion_8_decoding_boundaries() {
    let mut r = rng(8000);
    let mut instances = 0;
    let mut problems = Vec::new();
    for n_chars in 1..=4 {
        for max_len in 1..=3 {
            for _ in 0..5 {
                instances += 1;
                let vocab = CharVocab::new(('A'..).take(n_chars));
                let v = vocab.size();
                let att = TableScorer::random(&mut r, n_chars, v, max_len);
                let t = r.gen_range(1..=6);
                let frames = CtcFrames::new(random_log_probs(&mut r, t, v), v, vocab.blank()).unwrap();
                let seqs = all_sequences(n_chars, max_len);
                let beam = seqs.len();

                let att_score = |s: &[usize]| {
                    let mut total = 0.0;
                    for i in 0..=s.len() {
                        let next = if i < s.len() { s[i] } else { vocab.eos() };
                        total += att.table[&s[..i].to_vec()][next];
                    }
                    total
                };
                let ctc_score = |s: &[usize]| {
                    ctc_log_likelihood(&frames.log_probs, v, s, vocab.blank()).unwrap_or(f64::NEG_INFINITY)
                };
                for (lambda, oracle) in [
                    (0.0, exhaustive_ranking(&seqs, att_score)),
                    (1.0, exhaustive_ranking(&seqs, ctc_score)),
                ] {
                    let cfg = SearchConfig {
                        beam,
                        ctc_weight: lambda,
                        lm_weight: 0.0,
                        max_len,
                        length_penalty: 0.0,
                    };
                    let res = joint_beam_search(&att, Some(&frames), None, &vocab, &cfg).unwrap();
                    let got: Vec<&Vec<usize>> = res.nbest.iter().map(|h| &h.tokens).collect();
                    let want: Vec<&Vec<usize>> = oracle.iter().map(|(s, _)| s).collect();
                    let scores_ok = res.nbest.iter().zip(&oracle).all(|(h, (_, s))| {
                        (h.score == f64::NEG_INFINITY && *s == f64::NEG_INFINITY) || (h.score - s).abs() < SEARCH_SCORE_TOL
                    });
                    let monotone = res.nbest.windows(2).all(|w| w[0].score >= w[1].score);
                    if got != want || !scores_ok || !monotone {
                        problems.push(format!("chars={n_chars} max_len={max_len} lambda={lambda}"));
                    }
                }
            }
        }
    }
    let ok = problems.is_empty();
    report(
        8,
        "decoding boundary equivalence",
        ok,
        format!("{instances} instances x 2 weightings, beam = all hypotheses {problems:?}"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 9

struct OverfitRun {
    mlm: (f64, f64),
    mle: (f64, f64),
    final_wer: f64,
    first_zero: Option<usize>,
}

fn overfit_run(seed: u64, lambda_mle: f64) -> OverfitRun {
    let mut cfg = Config::default();
    cfg.apply_overrides(&[
        format!("seed={seed}"),
        "n_codes=16".into(),
        format!("lambda_mle={lambda_mle}"),
        format!("eval_every={OVERFIT_EVAL_EVERY}"),
    ])
    .unwrap();
    let ds = Dataset::from_utterances(&synth_corpus(&cfg.synth()).unwrap());
    let (_, codes) = app::quantize_dataset(&cfg, &ds).unwrap();
    let examples = app::pretrain_examples(&cfg, &ds, &codes).unwrap();
    let model = PretrainModel::new(&cfg.conv(), &cfg.arch(), cfg.seed).unwrap();

    // Losses on fixed masks, before and after.
    let masks: Vec<Vec<usize>> = examples
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let starts = sample_span_starts(e.frame_codes.len(), &cfg.mask_spec(), &mut rng_for(seed, &format!("eval{i}")));
            spans_to_mask(e.frame_codes.len(), &starts, cfg.mask_span)
        })
        .collect();
    let eval = |m: &PretrainModel| {
        no_grad(|| {
            let (_, a, b) = m.batch_loss(&examples, LossWeights::default(), &masks).unwrap();
            (a, b)
        })
    };
    let before = eval(&model);
    let mut opt = Adam::new(cfg.adam());
    app::run_pretraining(&cfg, &model, &examples, &mut opt, 0, |_| {}).unwrap();
    let after = eval(&model);

    let ck = Checkpoint::from_store(&cfg, &model.store, cfg.pretrain_steps as u64, None);
    let ds10 = ds.head(OVERFIT_FINETUNE_UTTS);
    let vocab = CharVocab::from_transcripts(ds10.normalized_transcripts().iter().map(String::as_str));
    let asr = init_from_pretrained(&ck, &cfg.conv(), &cfg.arch(), vocab, cfg.seed).unwrap();
    let train = app::asr_examples(&asr.vocab, &ds10).unwrap();
    let mut opt = Adam::new(cfg.adam());
    let out = app::run_finetuning(&cfg, &asr, &train, &mut opt, 0, |_| {}).unwrap();
    OverfitRun {
        mlm: (before.0, after.0),
        mle: (before.1, after.1),
        final_wer: out.evals.last().map_or(f64::NAN, |e| e.1),
        first_zero: out.first_zero_wer,
    }
}

#[test]
fn criterion_9_end_to_end_overfit() {
    let start = Instant::now();
    let mut problems = Vec::new();
    let mut lines = Vec::new();
    for seed in OVERFIT_SEEDS {
        let full = overfit_run(seed, 1.0);
        let control = overfit_run(seed, 0.0);
        let drop = |(a, b): (f64, f64)| (a - b) / a;
        if !(drop(full.mlm) >= LOSS_REDUCTION_MIN) {
            problems.push(format!("seed {seed}: L_mlm drop {:.3}", drop(full.mlm)));
        }
        if !(drop(full.mle) >= LOSS_REDUCTION_MIN) {
            problems.push(format!("seed {seed}: L_mle drop {:.3}", drop(full.mle)));
        }
        if full.final_wer != 0.0 {
            problems.push(format!("seed {seed}: final WER {}", full.final_wer));
        }
        let steps = |r: &OverfitRun| r.first_zero.unwrap_or(usize::MAX);
        if steps(&control) < steps(&full) {
            problems.push(format!(
                "seed {seed}: control reached WER 0 first ({:?} < {:?})",
                control.first_zero, full.first_zero
            ));
        }
        lines.push(format!(
            "seed {seed}: mlm {:.3}->{:.3} mle {:.3}->{:.3} WER0 at {:?} (control {:?})",
            full.mlm.0, full.mlm.1, full.mle.0, full.mle.1, full.first_zero, control.first_zero
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    if secs > OVERFIT_RUNTIME_S {
        problems.push(format!("runtime {secs:.0}s"));
    }
    let ok = problems.is_empty();
    report(9, "end-to-end overfit", ok, format!("{}; {secs:.0}s {problems:?}", lines.join("; ")));
    assert!(ok);
}

// ---------------------------------------------------------------- 10

fn pipeline(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut cfg = Config::default();
    cfg.apply_overrides(&[
        "n_codes=16".into(),
        "pretrain_steps=20".into(),
        "finetune_steps=20".into(),
        "lm_steps=10".into(),
        "decode_lm_weight=0.2".into(),
    ])
    .unwrap();
    let manifest = app::cmd_synth(&cfg, &dir.join("corpus")).unwrap();
    app::cmd_quantize(&cfg, &manifest, &dir.join("kmeans.txt"), &dir.join("codes.txt")).unwrap();
    app::cmd_pretrain(
        &cfg,
        &PretrainPaths {
            manifest: manifest.clone(),
            codes: dir.join("codes.txt"),
            out: dir.join("pre.ckpt"),
            log: dir.join("pre.log"),
            init_encoder: None,
            resume: None,
            force: false,
        },
    )
    .unwrap();
    app::cmd_finetune(
        &cfg,
        &FinetunePaths {
            manifest: manifest.clone(),
            init: Some(dir.join("pre.ckpt")),
            out: dir.join("asr.ckpt"),
            log: dir.join("asr.log"),
            resume: None,
            force: false,
        },
    )
    .unwrap();
    app::cmd_train_lm(&cfg, &manifest, Some(&dir.join("asr.ckpt")), &dir.join("lm.ckpt")).unwrap();
    app::cmd_decode(
        &cfg,
        &DecodePaths {
            manifest,
            model: dir.join("asr.ckpt"),
            lm: Some(dir.join("lm.ckpt")),
            out: dir.join("decode.txt"),
            nbest: Some(dir.join("nbest.tsv")),
        },
    )
    .unwrap();
    [
        "codes.txt", "kmeans.txt", "pre.log", "pre.ckpt", "asr.log", "asr.ckpt", "lm.ckpt", "decode.txt", "nbest.tsv",
    ]
    .iter()
    .map(|f| (f.to_string(), std::fs::read(dir.join(f)).unwrap()))
    .collect()
}

#[test]
fn criterion_10_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = pipeline(a.path());
    let rb = pipeline(b.path());
    let differing: Vec<&str> = ra
        .iter()
        .zip(&rb)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let ok = differing.is_empty() && ra.iter().all(|(_, bytes)| !bytes.is_empty());
    report(
        10,
        "determinism",
        ok,
        format!("{} artifacts compared, differing {differing:?}", ra.len()),
    );
    assert!(ok);
}
