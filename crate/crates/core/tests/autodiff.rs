mod common;

use proptest::prelude::*;
use speechcode::tensor::{self, clip_grad_norm, no_grad, Adam, AdamConfig, Tensor, TensorError};

use common::*;

#[test]
fn shared_input_accumulates() {
    let x = Tensor::param(vec![1.5, -2.0], &[2]).unwrap();
    let y = tensor::sum(&tensor::mul(&x, &x).unwrap());
    y.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![3.0, -4.0]);
}

#[test]
fn backward_contract_errors() {
    let x = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
    assert!(matches!(tensor::scale(&x, 2.0).backward(), Err(TensorError::NonScalarLoss(_))));
    let l = tensor::sum(&x);
    l.backward().unwrap();
    assert_eq!(l.backward(), Err(TensorError::BackwardTwice));
    let c = no_grad(|| tensor::sum(&x));
    assert!(!c.requires_grad());
    assert_eq!(c.backward(), Err(TensorError::NoGradientPath));
}

#[test]
fn shape_errors_name_the_op() {
    let a = Tensor::zeros(&[2, 3]);
    let b = Tensor::zeros(&[2, 3]);
    match tensor::matmul(&a, &b) {
        Err(TensorError::Shape { op, .. }) => assert_eq!(op, "matmul"),
        other => panic!("{other:?}"),
    }
    assert!(Tensor::new(vec![1.0; 5], &[2, 3]).is_err());
}

#[test]
fn adam_first_step_is_signed_lr() {
    // With bias correction the first update is lr * g / (|g| + eps).
    let p = Tensor::param(vec![1.0, -1.0, 0.5], &[3]).unwrap();
    let w = Tensor::new(vec![2.0, -0.5, 3.0], &[3]).unwrap();
    tensor::sum(&tensor::mul(&p, &w).unwrap()).backward().unwrap();
    let mut opt = Adam::new(AdamConfig::default());
    opt.step([("p", &p)], 0.1).unwrap();
    let want = [1.0 - 0.1, -1.0 + 0.1, 0.5 - 0.1];
    for (a, b) in p.to_vec().iter().zip(want) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    assert_eq!(opt.step, 1);
}

#[test]
fn clipping_bounds_global_norm() {
    let a = Tensor::param(vec![3.0], &[1]).unwrap();
    let b = Tensor::param(vec![4.0], &[1]).unwrap();
    let l = tensor::add(&tensor::scale(&a, 3.0), &tensor::scale(&b, 4.0)).unwrap();
    l.backward().unwrap();
    let norm = clip_grad_norm([&a, &b], 1.0);
    assert!((norm - 5.0).abs() < 1e-12);
    assert!((a.grad().unwrap()[0] - 0.6).abs() < 1e-12);
    assert!((b.grad().unwrap()[0] - 0.8).abs() < 1e-12);
}

#[test]
fn deep_chain_does_not_overflow_stack() {
    let x = Tensor::param(vec![1.0], &[1]).unwrap();
    let mut y = x.clone();
    for _ in 0..20_000 {
        y = tensor::scale(&y, 1.0);
    }
    tensor::sum(&y).backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0]);
}

#[test]
fn composite_expression_matches_differences() {
    let mut r = rng(11);
    let a = Tensor::param(random_vec(&mut r, 12, 1.0), &[3, 4]).unwrap();
    let b = Tensor::param(random_vec(&mut r, 8, 1.0), &[4, 2]).unwrap();
    let loss = || {
        let h = tensor::gelu(&tensor::matmul(&a, &b).unwrap());
        tensor::mean(&tensor::softmax(&h, 0.7).unwrap())
    };
    let (worst, _) = grad_check(&loss, &[a.clone(), b.clone()], 1e-5, 1e-5, None);
    assert!(worst < 1e-4, "{worst}");
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(v in proptest::collection::vec(-30.0f64..30.0, 1..24), tau in 0.05f64..4.0) {
        let n = v.len();
        let p = tensor::softmax(&Tensor::new(v, &[n]).unwrap(), tau).unwrap().to_vec();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn transpose_twice_is_identity(m in 1usize..6, n in 1usize..6, seed in 0u64..1000) {
        let x = Tensor::new(random_vec(&mut rng(seed), m * n, 1.0), &[m, n]).unwrap();
        let back = tensor::transpose(&tensor::transpose(&x).unwrap()).unwrap();
        prop_assert_eq!(back.to_vec(), x.to_vec());
    }
}
