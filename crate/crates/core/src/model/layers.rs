//! Dense building blocks on row-major `rows x cols` buffers.

use crate::scalar::{Op, Scalar};

/// `x W + b` for `x: rows x n_in`, `W: n_in x n_out`.
pub fn linear<T: Scalar>(x: &[T], rows: usize, w: &[T], b: &[T], n_in: usize, n_out: usize) -> Vec<T> {
    let mut y = Vec::with_capacity(rows * n_out);
    for _ in 0..rows {
        y.extend_from_slice(b);
    }
    T::gemm(rows, n_in, n_out, x, Op::N, w, Op::N, T::one(), &mut y);
    y
}

/// Accumulates weight and bias gradients of [`linear`] and returns the input
/// gradient when `want_dx` is set.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Scalar>(
    x: &[T],
    dy: &[T],
    w: &[T],
    rows: usize,
    n_in: usize,
    n_out: usize,
    dw: &mut [T],
    db: &mut [T],
    want_dx: bool,
) -> Option<Vec<T>> {
    T::gemm(n_in, rows, n_out, x, Op::T, dy, Op::N, T::one(), dw);
    for r in dy.chunks_exact(n_out) {
        for (g, &d) in db.iter_mut().zip(r) {
            *g += d;
        }
    }
    want_dx.then(|| {
        let mut dx = vec![T::zero(); rows * n_in];
        T::gemm(rows, n_out, n_in, dy, Op::N, w, Op::T, T::zero(), &mut dx);
        dx
    })
}

pub struct NormCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

pub fn layer_norm<T: Scalar>(x: &[T], cols: usize, gamma: &[T], beta: &[T], eps: f64) -> (Vec<T>, NormCache<T>) {
    let rows = x.len() / cols;
    let n = T::of(cols as f64);
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let s = T::one() / (var + T::of(eps)).sqrt();
        rstd.push(s);
        for j in 0..cols {
            let h = (row[j] - mean) * s;
            xhat[r * cols + j] = h;
            y[r * cols + j] = h * gamma[j] + beta[j];
        }
    }
    (y, NormCache { xhat, rstd })
}

pub fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    cols: usize,
    gamma: &[T],
    cache: &NormCache<T>,
    dgamma: &mut [T],
    dbeta: &mut [T],
) -> Vec<T> {
    let n = T::of(cols as f64);
    let mut dx = vec![T::zero(); dy.len()];
    let mut dxhat = vec![T::zero(); cols];
    for (r, &s) in cache.rstd.iter().enumerate() {
        let span = r * cols..(r + 1) * cols;
        let (g, h) = (&dy[span.clone()], &cache.xhat[span.clone()]);
        let mut mean_d = T::zero();
        let mut mean_dh = T::zero();
        for j in 0..cols {
            dgamma[j] += g[j] * h[j];
            dbeta[j] += g[j];
            dxhat[j] = g[j] * gamma[j];
            mean_d += dxhat[j];
            mean_dh += dxhat[j] * h[j];
        }
        mean_d /= n;
        mean_dh /= n;
        for (j, out) in dx[span].iter_mut().enumerate() {
            *out = s * (dxhat[j] - mean_d - h[j] * mean_dh);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    let th = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + th) + half * x * (T::one() - th * th) * c * (T::one() + T::of(3.0) * a * x * x)
}

/// Row-wise softmax in place.
pub fn softmax_rows<T: Scalar>(x: &mut [T], cols: usize) {
    for row in x.chunks_exact_mut(cols) {
        let hi = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - hi).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
}

/// Row-wise log-softmax in place, normalised in `f64` so rows sum to one to
/// within a few ulps of the storage type.
pub fn log_softmax_rows<T: Scalar>(x: &mut [T], cols: usize) {
    for row in x.chunks_exact_mut(cols) {
        let hi = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let z = hi + row.iter().map(|v| (v.as_f64() - hi).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v = T::of(v.as_f64() - z));
    }
}

/// Sinusoidal position table, `rows x d`.
pub fn positional_encoding<T: Scalar>(rows: usize, d: usize) -> Vec<T> {
    let mut pe = vec![T::zero(); rows * d];
    for t in 0..rows {
        for i in (0..d).step_by(2) {
            let angle = t as f64 / 10000f64.powf(i as f64 / d as f64);
            pe[t * d + i] = T::of(angle.sin());
            if i + 1 < d {
                pe[t * d + i + 1] = T::of(angle.cos());
            }
        }
    }
    pe
}

/// Copies columns `[c0, c0 + w)` of a `rows x cols` buffer.
pub fn take_cols<T: Scalar>(x: &[T], cols: usize, c0: usize, w: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len() / cols * w);
    for row in x.chunks_exact(cols) {
        out.extend_from_slice(&row[c0..c0 + w]);
    }
    out
}

/// Writes a `rows x w` block into columns `[c0, c0 + w)`.
pub fn put_cols<T: Scalar>(dst: &mut [T], cols: usize, c0: usize, w: usize, src: &[T]) {
    for (row, s) in dst.chunks_exact_mut(cols).zip(src.chunks_exact(w)) {
        row[c0..c0 + w].copy_from_slice(s);
    }
}

pub struct AttentionCache<T> {
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Per-head attention weights, `rows x rows`.
    probs: Vec<Vec<T>>,
}

/// Scaled dot-product attention over heads of width `d / heads`, given the
/// already projected queries, keys and values.
pub fn attention<T: Scalar>(q: Vec<T>, k: Vec<T>, v: Vec<T>, rows: usize, d: usize, heads: usize) -> (Vec<T>, AttentionCache<T>) {
    let dh = d / heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let mut out = vec![T::zero(); rows * d];
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = take_cols(&q, d, h * dh, dh);
        let kh = take_cols(&k, d, h * dh, dh);
        let vh = take_cols(&v, d, h * dh, dh);
        let mut s = vec![T::zero(); rows * rows];
        T::gemm(rows, dh, rows, &qh, Op::N, &kh, Op::T, T::zero(), &mut s);
        s.iter_mut().for_each(|x| *x *= scale);
        softmax_rows(&mut s, rows);
        let mut oh = vec![T::zero(); rows * dh];
        T::gemm(rows, rows, dh, &s, Op::N, &vh, Op::N, T::zero(), &mut oh);
        put_cols(&mut out, d, h * dh, dh, &oh);
        probs.push(s);
    }
    (out, AttentionCache { q, k, v, probs })
}

/// Gradients of the queries, keys and values.
pub fn attention_backward<T: Scalar>(
    dout: &[T],
    cache: &AttentionCache<T>,
    rows: usize,
    d: usize,
    heads: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let dh = d / heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let mut dq = vec![T::zero(); rows * d];
    let mut dk = vec![T::zero(); rows * d];
    let mut dv = vec![T::zero(); rows * d];
    for h in 0..heads {
        let p = &cache.probs[h];
        let qh = take_cols(&cache.q, d, h * dh, dh);
        let kh = take_cols(&cache.k, d, h * dh, dh);
        let vh = take_cols(&cache.v, d, h * dh, dh);
        let doh = take_cols(dout, d, h * dh, dh);
        let mut dvh = vec![T::zero(); rows * dh];
        T::gemm(rows, rows, dh, p, Op::T, &doh, Op::N, T::zero(), &mut dvh);
        let mut dp = vec![T::zero(); rows * rows];
        T::gemm(rows, dh, rows, &doh, Op::N, &vh, Op::T, T::zero(), &mut dp);
        // softmax backward, then the score scaling
        for (dp_row, p_row) in dp.chunks_exact_mut(rows).zip(p.chunks_exact(rows)) {
            let dot: T = dp_row.iter().zip(p_row).map(|(&a, &b)| a * b).sum();
            for (g, &pr) in dp_row.iter_mut().zip(p_row) {
                *g = pr * (*g - dot) * scale;
            }
        }
        let mut dqh = vec![T::zero(); rows * dh];
        T::gemm(rows, rows, dh, &dp, Op::N, &kh, Op::N, T::zero(), &mut dqh);
        let mut dkh = vec![T::zero(); rows * dh];
        T::gemm(rows, rows, dh, &dp, Op::T, &qh, Op::N, T::zero(), &mut dkh);
        put_cols(&mut dq, d, h * dh, dh, &dqh);
        put_cols(&mut dk, d, h * dh, dh, &dkh);
        put_cols(&mut dv, d, h * dh, dh, &dvh);
    }
    (dq, dk, dv)
}
