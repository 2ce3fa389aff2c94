//! Scaled dot-product multi-head attention. Self-attention adds a learned
//! bias per head that depends only on the clipped offset `j - i` between
//! query position `i` and key position `j`.

use std::rc::Rc;

use rand_chacha::ChaCha8Rng;

use super::layers::Linear;
use crate::params::ParamStore;
use crate::tensor::{self, Result, Tensor, TensorError};

#[derive(Debug, Clone)]
pub struct RelPosBias {
    /// `[2 * max_distance + 1, n_heads]`, row `o + max_distance` holds offset `o`.
    pub table: Tensor,
    pub max_distance: usize,
    pub n_heads: usize,
}

impl RelPosBias {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        max_distance: usize,
        n_heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let table = store.uniform(name, &[2 * max_distance + 1, n_heads], 0.1, rng)?;
        Ok(Self {
            table,
            max_distance,
            n_heads,
        })
    }

    fn row(&self, i: usize, j: usize) -> usize {
        let k = self.max_distance as i64;
        let off = (j as i64 - i as i64).clamp(-k, k);
        (off + k) as usize
    }

    /// Bias matrix `[q_len, k_len]` for one head.
    pub fn head_bias(&self, head: usize, q_len: usize, k_len: usize) -> Result<Tensor> {
        if q_len == 0 || k_len == 0 {
            return Err(TensorError::Argument {
                op: "rel_pos_bias",
                msg: "lengths must be at least 1".into(),
            });
        }
        let idx: Vec<usize> = (0..q_len)
            .flat_map(|i| (0..k_len).map(move |j| (i, j)))
            .map(|(i, j)| self.row(i, j) * self.n_heads + head)
            .collect();
        tensor::gather(&self.table, Rc::new(idx), &[q_len, k_len])
    }

    /// One `[q_len, k_len]` bias per head.
    pub fn bias(&self, q_len: usize, k_len: usize) -> Result<Vec<Tensor>> {
        (0..self.n_heads)
            .map(|h| self.head_bias(h, q_len, k_len))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub rel: Option<RelPosBias>,
    pub n_heads: usize,
}

pub fn full_mask(q_len: usize, k_len: usize) -> Rc<Vec<bool>> {
    Rc::new(vec![true; q_len * k_len])
}

/// Row `i` may attend to keys `0..=i`.
pub fn causal_mask(n: usize) -> Rc<Vec<bool>> {
    Rc::new((0..n).flat_map(|i| (0..n).map(move |j| j <= i)).collect())
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        n_heads: usize,
        rel_max_distance: Option<usize>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if n_heads == 0 || !d_model.is_multiple_of(n_heads) {
            return Err(TensorError::Argument {
                op: "attention",
                msg: format!("d_model {d_model} not divisible by {n_heads} heads"),
            });
        }
        Ok(Self {
            q: Linear::new(store, &format!("{name}.q"), d_model, d_model, true, rng)?,
            k: Linear::new(store, &format!("{name}.k"), d_model, d_model, true, rng)?,
            v: Linear::new(store, &format!("{name}.v"), d_model, d_model, true, rng)?,
            out: Linear::new(store, &format!("{name}.o"), d_model, d_model, true, rng)?,
            rel: match rel_max_distance {
                Some(k) => Some(RelPosBias::new(store, &format!("{name}.rel"), k, n_heads, rng)?),
                None => None,
            },
            n_heads,
        })
    }

    pub fn forward(&self, queries: &Tensor, keys: &Tensor, mask: Option<&Rc<Vec<bool>>>) -> Result<Tensor> {
        mha_forward(queries, keys, keys, mask, self)
    }
}

/// Multi-head attention of `queries: [Tq, d]` over `keys`/`values: [Tk, d]`.
/// `mask[i * Tk + j]` allows query `i` to see key `j`; a query row that can see
/// nothing outputs zeros before the output projection.
pub fn mha_forward(
    queries: &Tensor,
    keys: &Tensor,
    values: &Tensor,
    mask: Option<&Rc<Vec<bool>>>,
    params: &MultiHeadAttention,
) -> Result<Tensor> {
    let (tq, tk) = (queries.rows(), keys.rows());
    if values.rows() != tk {
        return Err(TensorError::Shape {
            op: "mha_forward",
            lhs: keys.shape().to_vec(),
            rhs: values.shape().to_vec(),
        });
    }
    let d = params.q.weight.shape()[1];
    let dh = d / params.n_heads;
    let q = params.q.forward(queries)?;
    let k = params.k.forward(keys)?;
    let v = params.v.forward(values)?;
    let owned;
    let mask = match mask {
        Some(m) => m,
        None => {
            owned = full_mask(tq, tk);
            &owned
        }
    };
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(params.n_heads);
    for h in 0..params.n_heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = tensor::slice_cols(&q, lo, hi)?;
        let kh = tensor::slice_cols(&k, lo, hi)?;
        let vh = tensor::slice_cols(&v, lo, hi)?;
        let mut logits = tensor::scale(&tensor::matmul(&qh, &tensor::transpose(&kh)?)?, scale);
        if let Some(rel) = &params.rel {
            logits = tensor::add(&logits, &rel.head_bias(h, tq, tk)?)?;
        }
        let attn = tensor::masked_softmax(&logits, mask)?;
        heads.push(tensor::matmul(&attn, &vh)?);
    }
    let cat = if heads.len() == 1 {
        heads.pop().expect("one head")
    } else {
        tensor::concat_cols(&heads)?
    };
    params.out.forward(&cat)
}
