use std::rc::Rc;

use super::{Result, Tensor, TensorError};

// Raw row-major kernels. `a` is [m,k], `b` is [k,n].
pub(crate) fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in row.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

// a: [m,k], b: [n,k] -> a·bᵀ [m,n]
pub(crate) fn mm_bt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            c[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    c
}

// a: [k,m], b: [k,n] -> aᵀ·b [m,n]
pub(crate) fn mm_at(a: &[f64], b: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

/// Matrix product of `[m,k]` and `[k,n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(shape_err("matmul", a, b));
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let out = mm(&a.data(), &b.data(), m, k, n);
    Ok(Tensor::from_op(
        out,
        vec![m, n],
        vec![a.clone(), b.clone()],
        Box::new(move |g, p| {
            if p[0].requires_grad() {
                let da = mm_bt(g, &p[1].data(), m, n, k);
                p[0].accumulate_grad(&da);
            }
            if p[1].requires_grad() {
                let db = mm_at(&p[0].data(), g, m, k, n);
                p[1].accumulate_grad(&db);
            }
        }),
    ))
}

/// Elementwise sum. `b` may have the same shape as `a`, be a vector matching
/// the last axis of `a` (row broadcast), or be a single value.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (na, nb) = (a.numel(), b.numel());
    let cols = a.cols();
    let mode = if a.shape() == b.shape() {
        0
    } else if b.shape().len() == 1 && nb == cols {
        1
    } else if nb == 1 {
        2
    } else {
        return Err(shape_err("add", a, b));
    };
    let out: Vec<f64> = {
        let (ad, bd) = (a.data(), b.data());
        (0..na)
            .map(|i| {
                ad[i]
                    + match mode {
                        0 => bd[i],
                        1 => bd[i % cols],
                        _ => bd[0],
                    }
            })
            .collect()
    };
    Ok(Tensor::from_op(
        out,
        a.shape().to_vec(),
        vec![a.clone(), b.clone()],
        Box::new(move |g, p| {
            p[0].accumulate_grad(g);
            if p[1].requires_grad() {
                match mode {
                    0 => p[1].accumulate_grad(g),
                    1 => p[1].accumulate_with(|acc| {
                        for (i, gv) in g.iter().enumerate() {
                            acc[i % cols] += gv;
                        }
                    }),
                    _ => p[1].accumulate_grad(&[g.iter().sum()]),
                }
            }
        }),
    ))
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(shape_err("sub", a, b));
    }
    let out: Vec<f64> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x - y).collect();
    Ok(Tensor::from_op(
        out,
        a.shape().to_vec(),
        vec![a.clone(), b.clone()],
        Box::new(|g, p| {
            p[0].accumulate_grad(g);
            if p[1].requires_grad() {
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                p[1].accumulate_grad(&neg);
            }
        }),
    ))
}

/// Elementwise (Hadamard) product of equal shapes.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(shape_err("mul", a, b));
    }
    let out: Vec<f64> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x * y).collect();
    Ok(Tensor::from_op(
        out,
        a.shape().to_vec(),
        vec![a.clone(), b.clone()],
        Box::new(|g, p| {
            if p[0].requires_grad() {
                let d: Vec<f64> = g.iter().zip(p[1].data().iter()).map(|(g, y)| g * y).collect();
                p[0].accumulate_grad(&d);
            }
            if p[1].requires_grad() {
                let d: Vec<f64> = g.iter().zip(p[0].data().iter()).map(|(g, x)| g * x).collect();
                p[1].accumulate_grad(&d);
            }
        }),
    ))
}

pub fn scale(a: &Tensor, c: f64) -> Tensor {
    let out: Vec<f64> = a.data().iter().map(|x| x * c).collect();
    Tensor::from_op(
        out,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(move |g, p| {
            let d: Vec<f64> = g.iter().map(|v| v * c).collect();
            p[0].accumulate_grad(&d);
        }),
    )
}

pub fn sum(a: &Tensor) -> Tensor {
    let s = a.data().iter().sum();
    let n = a.numel();
    Tensor::from_op(
        vec![s],
        vec![1],
        vec![a.clone()],
        Box::new(move |g, p| p[0].accumulate_grad(&vec![g[0]; n])),
    )
}

pub fn mean(a: &Tensor) -> Tensor {
    let n = a.numel();
    scale(&sum(a), 1.0 / n as f64)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh-approximated GELU.
pub fn gelu(a: &Tensor) -> Tensor {
    let out: Vec<f64> = a
        .data()
        .iter()
        .map(|&x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()))
        .collect();
    Tensor::from_op(
        out,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(|g, p| {
            let d: Vec<f64> = p[0]
                .data()
                .iter()
                .zip(g)
                .map(|(&x, gv)| {
                    let u = GELU_C * (x + 0.044715 * x * x * x);
                    let t = u.tanh();
                    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                    gv * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
                })
                .collect();
            p[0].accumulate_grad(&d);
        }),
    )
}

fn softmax_rows(x: &[f64], cols: usize, inv_temp: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, o) in x.chunks(cols).zip(out.chunks_mut(cols)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (ov, &xv) in o.iter_mut().zip(row) {
            *ov = ((xv - max) * inv_temp).exp();
            z += *ov;
        }
        o.iter_mut().for_each(|v| *v /= z);
    }
    out
}

/// Softmax over the last axis of `x / temperature`.
pub fn softmax(x: &Tensor, temperature: f64) -> Result<Tensor> {
    if !(temperature > 0.0) {
        return Err(TensorError::Argument {
            op: "softmax",
            msg: format!("temperature must be positive, got {temperature}"),
        });
    }
    let cols = x.cols();
    let inv = 1.0 / temperature;
    let y = softmax_rows(&x.data(), cols, inv);
    let y_saved = Rc::new(y.clone());
    Ok(Tensor::from_op(
        y,
        x.shape().to_vec(),
        vec![x.clone()],
        Box::new(move |g, p| {
            let mut d = vec![0.0; g.len()];
            for ((yr, gr), dr) in y_saved.chunks(cols).zip(g.chunks(cols)).zip(d.chunks_mut(cols)) {
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for ((dv, yv), gv) in dr.iter_mut().zip(yr).zip(gr) {
                    *dv = inv * yv * (gv - dot);
                }
            }
            p[0].accumulate_grad(&d);
        }),
    ))
}

/// Log-softmax over the last axis.
pub fn log_softmax(x: &Tensor) -> Tensor {
    let cols = x.cols();
    let mut y = x.to_vec();
    for row in y.chunks_mut(cols) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    let y_saved = Rc::new(y.clone());
    Tensor::from_op(
        y,
        x.shape().to_vec(),
        vec![x.clone()],
        Box::new(move |g, p| {
            let mut d = vec![0.0; g.len()];
            for ((yr, gr), dr) in y_saved.chunks(cols).zip(g.chunks(cols)).zip(d.chunks_mut(cols)) {
                let gs: f64 = gr.iter().sum();
                for ((dv, yv), gv) in dr.iter_mut().zip(yr).zip(gr) {
                    *dv = gv - yv.exp() * gs;
                }
            }
            p[0].accumulate_grad(&d);
        }),
    )
}

/// Softmax over the last axis of a `[q,k]` score matrix where `allowed[i*k+j]`
/// selects the entries that take part. Disallowed entries get probability 0;
/// a row with no allowed entry is all zeros.
pub fn masked_softmax(x: &Tensor, allowed: &Rc<Vec<bool>>) -> Result<Tensor> {
    if allowed.len() != x.numel() {
        return Err(TensorError::Shape {
            op: "masked_softmax",
            lhs: x.shape().to_vec(),
            rhs: vec![allowed.len()],
        });
    }
    let cols = x.cols();
    let mut y = vec![0.0; x.numel()];
    {
        let xd = x.data();
        for r in 0..x.rows() {
            let range = r * cols..(r + 1) * cols;
            let max = range
                .clone()
                .filter(|&i| allowed[i])
                .map(|i| xd[i])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut z = 0.0;
            for i in range.clone() {
                if allowed[i] {
                    y[i] = (xd[i] - max).exp();
                    z += y[i];
                }
            }
            for i in range {
                y[i] /= z;
            }
        }
    }
    let y_saved = Rc::new(y.clone());
    Ok(Tensor::from_op(
        y,
        x.shape().to_vec(),
        vec![x.clone()],
        Box::new(move |g, p| {
            let mut d = vec![0.0; g.len()];
            for ((yr, gr), dr) in y_saved.chunks(cols).zip(g.chunks(cols)).zip(d.chunks_mut(cols)) {
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for ((dv, yv), gv) in dr.iter_mut().zip(yr).zip(gr) {
                    *dv = yv * (gv - dot);
                }
            }
            p[0].accumulate_grad(&d);
        }),
    ))
}

/// Per-vector normalization over the last axis followed by an affine map.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    let d = x.cols();
    if gain.numel() != d || bias.numel() != d {
        return Err(TensorError::Shape {
            op: "layer_norm",
            lhs: x.shape().to_vec(),
            rhs: gain.shape().to_vec(),
        });
    }
    if !(eps > 0.0) {
        return Err(TensorError::Argument {
            op: "layer_norm",
            msg: format!("eps must be positive, got {eps}"),
        });
    }
    let rows = x.rows();
    let mut xhat = vec![0.0; x.numel()];
    let mut inv_std = vec![0.0; rows];
    let mut out = vec![0.0; x.numel()];
    {
        let (xd, gd, bd) = (x.data(), gain.data(), bias.data());
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let mu = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mu) * is;
                xhat[r * d + j] = h;
                out[r * d + j] = h * gd[j] + bd[j];
            }
        }
    }
    let xhat = Rc::new(xhat);
    Ok(Tensor::from_op(
        out,
        x.shape().to_vec(),
        vec![x.clone(), gain.clone(), bias.clone()],
        Box::new(move |g, p| {
            if p[1].requires_grad() {
                p[1].accumulate_with(|acc| {
                    for (i, gv) in g.iter().enumerate() {
                        acc[i % d] += gv * xhat[i];
                    }
                });
            }
            if p[2].requires_grad() {
                p[2].accumulate_with(|acc| {
                    for (i, gv) in g.iter().enumerate() {
                        acc[i % d] += gv;
                    }
                });
            }
            if p[0].requires_grad() {
                let gd = p[1].data();
                let mut dx = vec![0.0; g.len()];
                for r in 0..rows {
                    let s = r * d;
                    let mut mean_dh = 0.0;
                    let mut mean_dh_h = 0.0;
                    for j in 0..d {
                        let dh = g[s + j] * gd[j];
                        mean_dh += dh;
                        mean_dh_h += dh * xhat[s + j];
                    }
                    mean_dh /= d as f64;
                    mean_dh_h /= d as f64;
                    for j in 0..d {
                        let dh = g[s + j] * gd[j];
                        dx[s + j] = inv_std[r] * (dh - mean_dh - xhat[s + j] * mean_dh_h);
                    }
                }
                p[0].accumulate_grad(&dx);
            }
        }),
    ))
}

/// Scales each vector along the last axis to unit length. Norms are floored
/// at `eps`, so an all-zero vector maps to zero instead of NaN.
pub fn l2_normalize(x: &Tensor, eps: f64) -> Tensor {
    let d = x.cols();
    let mut norms = Vec::with_capacity(x.rows());
    let mut out = x.to_vec();
    for row in out.chunks_mut(d) {
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nf = n.max(eps);
        norms.push((n, nf));
        row.iter_mut().for_each(|v| *v /= nf);
    }
    let y_saved = Rc::new(out.clone());
    Tensor::from_op(
        out,
        x.shape().to_vec(),
        vec![x.clone()],
        Box::new(move |g, p| {
            let mut dx = vec![0.0; g.len()];
            for (r, &(n, nf)) in norms.iter().enumerate() {
                let s = r * d;
                let yr = &y_saved[s..s + d];
                let gr = &g[s..s + d];
                if n > eps {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..d {
                        dx[s + j] = (gr[j] - yr[j] * dot) / nf;
                    }
                } else {
                    for j in 0..d {
                        dx[s + j] = gr[j] / nf;
                    }
                }
            }
            p[0].accumulate_grad(&dx);
        }),
    )
}

/// Floor applied to vector norms inside [`cosine_sim`].
pub const COSINE_EPS: f64 = 1e-8;

/// Cosine similarity of two equal-length vectors, as a scalar tensor.
pub fn cosine_sim(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.numel() != b.numel() {
        return Err(shape_err("cosine_sim", a, b));
    }
    let d = a.numel();
    let an = l2_normalize(&reshape(a, &[1, d])?, COSINE_EPS);
    let bn = l2_normalize(&reshape(b, &[1, d])?, COSINE_EPS);
    Ok(sum(&mul(&an, &bn)?))
}

/// Mean of `-log_probs[i, targets[i]]` over rows whose target is not
/// `ignore_index`. An empty selection yields 0 with zero gradient.
pub fn cross_entropy(
    log_probs: &Tensor,
    targets: &[usize],
    ignore_index: Option<usize>,
) -> Result<Tensor> {
    let v = log_probs.cols();
    let n = log_probs.rows();
    if targets.len() != n {
        return Err(TensorError::Shape {
            op: "cross_entropy",
            lhs: log_probs.shape().to_vec(),
            rhs: vec![targets.len()],
        });
    }
    let mut picked = Vec::new();
    for (i, &t) in targets.iter().enumerate() {
        if Some(t) == ignore_index {
            continue;
        }
        if t >= v {
            return Err(TensorError::Index {
                op: "cross_entropy",
                position: i,
                value: t,
                limit: v,
            });
        }
        picked.push(i * v + t);
    }
    let count = picked.len();
    let value = if count == 0 {
        0.0
    } else {
        let lp = log_probs.data();
        -picked.iter().map(|&k| lp[k]).sum::<f64>() / count as f64
    };
    Ok(Tensor::from_op(
        vec![value],
        vec![1],
        vec![log_probs.clone()],
        Box::new(move |g, p| {
            if count == 0 {
                return;
            }
            let w = -g[0] / count as f64;
            p[0].accumulate_with(|acc| {
                for &k in &picked {
                    acc[k] += w;
                }
            });
        }),
    ))
}

/// Rows of `table` selected by `ids` (embedding lookup).
pub fn index_rows(table: &Tensor, ids: &[usize]) -> Result<Tensor> {
    let d = table.cols();
    let v = table.rows();
    let mut out = Vec::with_capacity(ids.len() * d);
    {
        let td = table.data();
        for (pos, &id) in ids.iter().enumerate() {
            if id >= v {
                return Err(TensorError::Index {
                    op: "index_rows",
                    position: pos,
                    value: id,
                    limit: v,
                });
            }
            out.extend_from_slice(&td[id * d..(id + 1) * d]);
        }
    }
    if ids.is_empty() {
        return Err(TensorError::Argument {
            op: "index_rows",
            msg: "no ids".into(),
        });
    }
    let ids = ids.to_vec();
    Ok(Tensor::from_op(
        out,
        vec![ids.len(), d],
        vec![table.clone()],
        Box::new(move |g, p| {
            p[0].accumulate_with(|acc| {
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        acc[id * d + j] += g[r * d + j];
                    }
                }
            });
        }),
    ))
}

/// `out[i] = src[indices[i]]` over the flattened source.
pub fn gather(src: &Tensor, indices: Rc<Vec<usize>>, shape: &[usize]) -> Result<Tensor> {
    let n = src.numel();
    if indices.len() != shape.iter().product::<usize>() {
        return Err(TensorError::Shape {
            op: "gather",
            lhs: vec![indices.len()],
            rhs: shape.to_vec(),
        });
    }
    if let Some((pos, &bad)) = indices.iter().enumerate().find(|(_, &i)| i >= n) {
        return Err(TensorError::Index {
            op: "gather",
            position: pos,
            value: bad,
            limit: n,
        });
    }
    let out: Vec<f64> = {
        let sd = src.data();
        indices.iter().map(|&i| sd[i]).collect()
    };
    Ok(Tensor::from_op(
        out,
        shape.to_vec(),
        vec![src.clone()],
        Box::new(move |g, p| {
            p[0].accumulate_with(|acc| {
                for (gv, &i) in g.iter().zip(indices.iter()) {
                    acc[i] += gv;
                }
            });
        }),
    ))
}

/// Replaces the listed rows of `x` by the vector `fill`.
pub fn replace_rows(x: &Tensor, rows: &[usize], fill: &Tensor) -> Result<Tensor> {
    let d = x.cols();
    let t = x.rows();
    if fill.numel() != d {
        return Err(shape_err("replace_rows", x, fill));
    }
    let mut replaced = vec![false; t];
    for (pos, &r) in rows.iter().enumerate() {
        if r >= t {
            return Err(TensorError::Index {
                op: "replace_rows",
                position: pos,
                value: r,
                limit: t,
            });
        }
        replaced[r] = true;
    }
    let mut out = x.to_vec();
    {
        let fd = fill.data();
        for (r, _) in replaced.iter().enumerate().filter(|(_, &m)| m) {
            out[r * d..(r + 1) * d].copy_from_slice(&fd);
        }
    }
    Ok(Tensor::from_op(
        out,
        x.shape().to_vec(),
        vec![x.clone(), fill.clone()],
        Box::new(move |g, p| {
            if p[0].requires_grad() {
                let mut dx = g.to_vec();
                for (r, _) in replaced.iter().enumerate().filter(|(_, &m)| m) {
                    dx[r * d..(r + 1) * d].iter_mut().for_each(|v| *v = 0.0);
                }
                p[0].accumulate_grad(&dx);
            }
            if p[1].requires_grad() {
                p[1].accumulate_with(|acc| {
                    for (r, _) in replaced.iter().enumerate().filter(|(_, &m)| m) {
                        for j in 0..d {
                            acc[j] += g[r * d + j];
                        }
                    }
                });
            }
        }),
    ))
}

pub fn reshape(x: &Tensor, shape: &[usize]) -> Result<Tensor> {
    if shape.iter().product::<usize>() != x.numel() || shape.contains(&0) {
        return Err(TensorError::Shape {
            op: "reshape",
            lhs: x.shape().to_vec(),
            rhs: shape.to_vec(),
        });
    }
    Ok(Tensor::from_op(
        x.to_vec(),
        shape.to_vec(),
        vec![x.clone()],
        Box::new(|g, p| p[0].accumulate_grad(g)),
    ))
}

pub fn transpose(x: &Tensor) -> Result<Tensor> {
    if x.shape().len() != 2 {
        return Err(TensorError::Argument {
            op: "transpose",
            msg: format!("expected a matrix, got {:?}", x.shape()),
        });
    }
    let (m, n) = (x.shape()[0], x.shape()[1]);
    let mut out = vec![0.0; m * n];
    {
        let xd = x.data();
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = xd[i * n + j];
            }
        }
    }
    Ok(Tensor::from_op(
        out,
        vec![n, m],
        vec![x.clone()],
        Box::new(move |g, p| {
            let mut d = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    d[i * n + j] = g[j * m + i];
                }
            }
            p[0].accumulate_grad(&d);
        }),
    ))
}

/// Columns `[start, end)` of a matrix.
pub fn slice_cols(x: &Tensor, start: usize, end: usize) -> Result<Tensor> {
    let n = x.cols();
    if x.shape().len() != 2 || start >= end || end > n {
        return Err(TensorError::Argument {
            op: "slice_cols",
            msg: format!("columns {start}..{end} of {:?}", x.shape()),
        });
    }
    let m = x.rows();
    let w = end - start;
    let mut out = Vec::with_capacity(m * w);
    {
        let xd = x.data();
        for r in 0..m {
            out.extend_from_slice(&xd[r * n + start..r * n + end]);
        }
    }
    Ok(Tensor::from_op(
        out,
        vec![m, w],
        vec![x.clone()],
        Box::new(move |g, p| {
            p[0].accumulate_with(|acc| {
                for r in 0..m {
                    for j in 0..w {
                        acc[r * n + start + j] += g[r * w + j];
                    }
                }
            });
        }),
    ))
}

/// Concatenates matrices with equal row counts along the columns.
pub fn concat_cols(parts: &[Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or(TensorError::Argument {
        op: "concat_cols",
        msg: "nothing to concatenate".into(),
    })?;
    let m = first.rows();
    for p in parts {
        if p.shape().len() != 2 || p.rows() != m {
            return Err(shape_err("concat_cols", first, p));
        }
    }
    let widths: Vec<usize> = parts.iter().map(|p| p.cols()).collect();
    let total: usize = widths.iter().sum();
    let mut out = vec![0.0; m * total];
    let mut off = 0;
    for (p, &w) in parts.iter().zip(&widths) {
        let pd = p.data();
        for r in 0..m {
            out[r * total + off..r * total + off + w].copy_from_slice(&pd[r * w..(r + 1) * w]);
        }
        off += w;
    }
    Ok(Tensor::from_op(
        out,
        vec![m, total],
        parts.to_vec(),
        Box::new(move |g, ps| {
            let mut off = 0;
            for (p, &w) in ps.iter().zip(&widths) {
                if p.requires_grad() {
                    let mut d = Vec::with_capacity(m * w);
                    for r in 0..m {
                        d.extend_from_slice(&g[r * total + off..r * total + off + w]);
                    }
                    p.accumulate_grad(&d);
                }
                off += w;
            }
        }),
    ))
}

/// Number of output frames of a valid (unpadded) strided convolution.
pub fn conv_out_len(t_in: usize, kernel: usize, stride: usize) -> usize {
    if t_in < kernel {
        0
    } else {
        (t_in - kernel) / stride + 1
    }
}

/// Valid 1-D convolution of `x: [T_in, c_in]` with `kernel: [c_out, c_in, k]`.
pub fn conv1d(x: &Tensor, kernel: &Tensor, stride: usize) -> Result<Tensor> {
    if kernel.shape().len() != 3 || x.shape().len() != 2 || kernel.shape()[1] != x.shape()[1] {
        return Err(shape_err("conv1d", x, kernel));
    }
    if stride == 0 {
        return Err(TensorError::Argument {
            op: "conv1d",
            msg: "stride must be at least 1".into(),
        });
    }
    let (t_in, c_in) = (x.shape()[0], x.shape()[1]);
    let (c_out, k) = (kernel.shape()[0], kernel.shape()[2]);
    if t_in < k {
        return Err(TensorError::InputTooShort {
            op: "conv1d",
            needed: k,
            got: t_in,
        });
    }
    let t_out = conv_out_len(t_in, k, stride);
    let ck = c_in * k;
    // im2col: col[t, c*k + j] = x[t*stride + j, c]
    let build_cols = move |xd: &[f64]| {
        let mut col = vec![0.0; t_out * ck];
        for t in 0..t_out {
            let base = t * stride;
            for c in 0..c_in {
                for j in 0..k {
                    col[t * ck + c * k + j] = xd[(base + j) * c_in + c];
                }
            }
        }
        col
    };
    let col = build_cols(&x.data());
    let out = mm_bt(&col, &kernel.data(), t_out, ck, c_out);
    let col = Rc::new(col);
    Ok(Tensor::from_op(
        out,
        vec![t_out, c_out],
        vec![x.clone(), kernel.clone()],
        Box::new(move |g, p| {
            if p[1].requires_grad() {
                let dk = mm_at(g, &col, t_out, c_out, ck);
                p[1].accumulate_grad(&dk);
            }
            if p[0].requires_grad() {
                let dcol = mm(g, &p[1].data(), t_out, c_out, ck);
                p[0].accumulate_with(|acc| {
                    for t in 0..t_out {
                        let base = t * stride;
                        for c in 0..c_in {
                            for j in 0..k {
                                acc[(base + j) * c_in + c] += dcol[t * ck + c * k + j];
                            }
                        }
                    }
                });
            }
        }),
    ))
}
