//! Attention, add-&-norm and feed-forward blocks, each with a cached
//! forward pass and its hand-derived backward pass.

use serde::{Deserialize, Serialize};

use super::tensor::Mat;

/// Additive value standing in for −∞ in the causal mask. Large enough that
/// `exp` underflows to exactly zero, small enough to stay finite.
pub const MASK_VALUE: f64 = -1e30;

pub const DEFAULT_LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadWeights {
    /// `d_e × d_k`
    pub w_q: Mat,
    /// `d_e × d_k`
    pub w_k: Mat,
    /// `d_e × d_e`
    pub w_v: Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionWeights {
    pub heads: Vec<HeadWeights>,
    /// `h·d_e × d_e`
    pub w_mul: Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormWeights {
    pub gain: Mat,
    pub offset: Mat,
}

impl NormWeights {
    pub fn unit(width: usize) -> Self {
        Self { gain: Mat::from_fn(1, width, |_, _| 1.0), offset: Mat::zeros(1, width) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfnWeights {
    pub w1: Mat,
    pub b1: Mat,
    pub w2: Mat,
    pub b2: Mat,
}

/// Axis over which layer normalisation takes its moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormAxis {
    /// Per token, over the feature columns.
    Features,
    /// Per feature column, over the sequence positions.
    Positions,
}

pub fn softmax_rows(s: &Mat) -> Mat {
    let mut out = s.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Additive mask with [`MASK_VALUE`] strictly above the diagonal.
pub fn causal_mask(size: usize) -> Mat {
    Mat::from_fn(size, size, |i, j| if j > i { MASK_VALUE } else { 0.0 })
}

pub struct HeadCache {
    q: Mat,
    k: Mat,
    v: Mat,
    a: Mat,
}

fn head_forward(q_in: &Mat, kv_in: &Mat, w: &HeadWeights, d_k: usize, mask: Option<&Mat>) -> (Mat, HeadCache) {
    let q = q_in.matmul(&w.w_q);
    let k = kv_in.matmul(&w.w_k);
    let v = kv_in.matmul(&w.w_v);
    let mut s = q.matmul_t(&k).scale(1.0 / (d_k as f64).sqrt());
    if let Some(m) = mask {
        s.add_assign(m);
    }
    let a = softmax_rows(&s);
    let out = a.matmul(&v);
    (out, HeadCache { q, k, v, a })
}

/// `softmax(QKᵀ/√d_k + mask)·V` with queries from `q_in` and keys/values
/// from `kv_in`.
pub fn attention(q_in: &Mat, kv_in: &Mat, w: &HeadWeights, d_k: usize, mask: Option<&Mat>) -> Mat {
    head_forward(q_in, kv_in, w, d_k, mask).0
}

/// Attention weights alone, for inspection.
pub fn attention_weights(q_in: &Mat, kv_in: &Mat, w: &HeadWeights, d_k: usize, mask: Option<&Mat>) -> Mat {
    head_forward(q_in, kv_in, w, d_k, mask).1.a
}

pub struct MhaCache {
    heads: Vec<HeadCache>,
    concat: Mat,
}

pub fn multi_head_cached(q_in: &Mat, kv_in: &Mat, w: &AttentionWeights, d_k: usize, mask: Option<&Mat>) -> (Mat, MhaCache) {
    let (outs, heads): (Vec<Mat>, Vec<HeadCache>) =
        w.heads.iter().map(|h| head_forward(q_in, kv_in, h, d_k, mask)).unzip();
    let concat = Mat::hcat(&outs);
    (concat.matmul(&w.w_mul), MhaCache { heads, concat })
}

/// Concatenated head outputs projected back to `d_e` by `W_mul`.
pub fn multi_head(q_in: &Mat, kv_in: &Mat, w: &AttentionWeights, d_k: usize, mask: Option<&Mat>) -> Mat {
    multi_head_cached(q_in, kv_in, w, d_k, mask).0
}

/// Returns `(∂q_in, ∂kv_in)` and accumulates weight gradients into `g`.
pub fn multi_head_backward(
    dy: &Mat,
    q_in: &Mat,
    kv_in: &Mat,
    w: &AttentionWeights,
    cache: &MhaCache,
    d_k: usize,
    g: &mut AttentionWeights,
) -> (Mat, Mat) {
    cache.concat.t_matmul_into(dy, &mut g.w_mul);
    let d_concat = dy.matmul_t(&w.w_mul);
    let width = w.w_mul.cols();
    let scale = 1.0 / (d_k as f64).sqrt();
    let mut dq_in = q_in.zeros_like();
    let mut dkv_in = kv_in.zeros_like();
    for (h, (hw, hc)) in w.heads.iter().zip(&cache.heads).enumerate() {
        let d_out = d_concat.col_block(h * width, width);
        let da = d_out.matmul_t(&hc.v);
        let dv = hc.a.t_matmul(&d_out);
        let mut ds = hc.a.clone();
        for i in 0..ds.rows() {
            let dot: f64 = da.row(i).iter().zip(hc.a.row(i)).map(|(x, y)| x * y).sum();
            for (s, d) in ds.row_mut(i).iter_mut().zip(da.row(i)) {
                *s *= (d - dot) * scale;
            }
        }
        let dq = ds.matmul(&hc.k);
        let dk = ds.t_matmul(&hc.q);
        let gh = &mut g.heads[h];
        q_in.t_matmul_into(&dq, &mut gh.w_q);
        kv_in.t_matmul_into(&dk, &mut gh.w_k);
        kv_in.t_matmul_into(&dv, &mut gh.w_v);
        dq_in.add_assign(&dq.matmul_t(&hw.w_q));
        dkv_in.add_assign(&dk.matmul_t(&hw.w_k));
        dkv_in.add_assign(&dv.matmul_t(&hw.w_v));
    }
    (dq_in, dkv_in)
}

pub struct NormCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

pub fn layer_norm_cached(x: &Mat, w: &NormWeights, eps: f64, axis: NormAxis) -> (Mat, NormCache) {
    let (rows, cols) = x.shape();
    let mut xhat = x.clone();
    let mut inv_std = Vec::new();
    match axis {
        NormAxis::Features => {
            for i in 0..rows {
                let row = xhat.row_mut(i);
                let mean = row.iter().sum::<f64>() / cols as f64;
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
                let s = 1.0 / (var + eps).sqrt();
                row.iter_mut().for_each(|v| *v = (*v - mean) * s);
                inv_std.push(s);
            }
        }
        NormAxis::Positions => {
            for j in 0..cols {
                let mean = (0..rows).map(|i| x[(i, j)]).sum::<f64>() / rows as f64;
                let var = (0..rows).map(|i| (x[(i, j)] - mean).powi(2)).sum::<f64>() / rows as f64;
                let s = 1.0 / (var + eps).sqrt();
                for i in 0..rows {
                    xhat[(i, j)] = (x[(i, j)] - mean) * s;
                }
                inv_std.push(s);
            }
        }
    }
    let (gain, offset) = (w.gain.as_slice(), w.offset.as_slice());
    let y = match axis {
        NormAxis::Features => Mat::from_fn(rows, cols, |i, j| gain[j] * xhat[(i, j)] + offset[j]),
        NormAxis::Positions => Mat::from_fn(rows, cols, |i, j| gain[i] * xhat[(i, j)] + offset[i]),
    };
    (y, NormCache { xhat, inv_std })
}

/// Zero-mean, unit-variance normalisation along `axis`, then gain/offset.
/// Gain and offset have one entry per feature (`Features`) or per
/// position (`Positions`).
pub fn layer_norm(x: &Mat, w: &NormWeights, eps: f64, axis: NormAxis) -> Mat {
    layer_norm_cached(x, w, eps, axis).0
}

/// `previous + LN(current)`.
pub fn add_norm(previous: &Mat, current: &Mat, w: &NormWeights, eps: f64, axis: NormAxis) -> Mat {
    previous.add(&layer_norm(current, w, eps, axis))
}

pub fn add_norm_cached(previous: &Mat, current: &Mat, w: &NormWeights, eps: f64) -> (Mat, NormCache) {
    let (y, cache) = layer_norm_cached(current, w, eps, NormAxis::Features);
    (previous.add(&y), cache)
}

/// Backward of feature-axis layer norm; returns `∂x`.
pub fn layer_norm_backward(dy: &Mat, w: &NormWeights, cache: &NormCache, g: &mut NormWeights) -> Mat {
    let (rows, cols) = dy.shape();
    let gain = w.gain.as_slice();
    let mut dx = Mat::zeros(rows, cols);
    for i in 0..rows {
        let (dyr, xh) = (dy.row(i), cache.xhat.row(i));
        for j in 0..cols {
            g.gain.as_mut_slice()[j] += dyr[j] * xh[j];
            g.offset.as_mut_slice()[j] += dyr[j];
        }
        let dxhat: Vec<f64> = (0..cols).map(|j| dyr[j] * gain[j]).collect();
        let mean_d = dxhat.iter().sum::<f64>() / cols as f64;
        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
        let s = cache.inv_std[i];
        for (j, out) in dx.row_mut(i).iter_mut().enumerate() {
            *out = s * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
    }
    dx
}

pub struct FfnCache {
    pre: Mat,
    hidden: Mat,
}

pub fn feed_forward_cached(x: &Mat, w: &FfnWeights) -> (Mat, FfnCache) {
    let pre = x.matmul(&w.w1).add_row(&w.b1);
    let mut hidden = pre.clone();
    hidden.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    let out = hidden.matmul(&w.w2).add_row(&w.b2);
    (out, FfnCache { pre, hidden })
}

/// `max(0, X·W₁ + b₁)·W₂ + b₂`.
pub fn feed_forward(x: &Mat, w: &FfnWeights) -> Mat {
    feed_forward_cached(x, w).0
}

pub fn feed_forward_backward(dy: &Mat, x: &Mat, w: &FfnWeights, cache: &FfnCache, g: &mut FfnWeights) -> Mat {
    cache.hidden.t_matmul_into(dy, &mut g.w2);
    dy.col_sums_into(&mut g.b2);
    let mut dh = dy.matmul_t(&w.w2);
    for (d, p) in dh.as_mut_slice().iter_mut().zip(cache.pre.as_slice()) {
        if *p <= 0.0 {
            *d = 0.0;
        }
    }
    x.t_matmul_into(&dh, &mut g.w1);
    dh.col_sums_into(&mut g.b1);
    dh.matmul_t(&w.w1)
}
