//! Batched layer kernels with hand-written backward passes.
//!
//! Activations are contiguous row-major buffers: `[batch × channels × length]`
//! for sequences and `[batch × features]` for dense layers. All reductions
//! run in a fixed order.

use crate::scalar::{axpy, dot, Scalar};

/// `same`-padded 1-D convolution. `weight` is `[out × in × kernel]`.
pub(crate) fn conv1d_forward<T: Scalar>(
    x: &[T],
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    len: usize,
    kernel: usize,
    weight: &[T],
    bias: &[T],
) -> Vec<T> {
    let pad = kernel / 2;
    let mut out = vec![T::zero(); batch * out_ch * len];
    for n in 0..batch {
        let xn = &x[n * in_ch * len..(n + 1) * in_ch * len];
        for o in 0..out_ch {
            let row = &mut out[(n * out_ch + o) * len..(n * out_ch + o + 1) * len];
            row.fill(bias[o]);
            for i in 0..in_ch {
                let xi = &xn[i * len..(i + 1) * len];
                for k in 0..kernel {
                    let w = weight[(o * in_ch + i) * kernel + k];
                    if w == T::zero() {
                        continue;
                    }
                    // out[t] += w * x[t + k - pad]
                    let (t0, t1) = valid_range(k, pad, len);
                    let src = &xi[t0 + k - pad..t1 + k - pad];
                    axpy(w, src, &mut row[t0..t1]);
                }
            }
        }
    }
    out
}

fn valid_range(k: usize, pad: usize, len: usize) -> (usize, usize) {
    let t0 = pad.saturating_sub(k);
    let t1 = (len + pad).saturating_sub(k).min(len);
    (t0, t1.max(t0))
}

/// Accumulates weight and bias gradients and returns the input gradient.
pub(crate) fn conv1d_backward<T: Scalar>(
    x: &[T],
    dz: &[T],
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    len: usize,
    kernel: usize,
    weight: &[T],
    d_weight: &mut [T],
    d_bias: &mut [T],
    need_dx: bool,
) -> Option<Vec<T>> {
    let pad = kernel / 2;
    let mut dx = need_dx.then(|| vec![T::zero(); batch * in_ch * len]);
    for n in 0..batch {
        let xn = &x[n * in_ch * len..(n + 1) * in_ch * len];
        for o in 0..out_ch {
            let g = &dz[(n * out_ch + o) * len..(n * out_ch + o + 1) * len];
            d_bias[o] += g.iter().copied().sum::<T>();
            for i in 0..in_ch {
                let xi = &xn[i * len..(i + 1) * len];
                for k in 0..kernel {
                    let (t0, t1) = valid_range(k, pad, len);
                    let widx = (o * in_ch + i) * kernel + k;
                    d_weight[widx] += dot(&g[t0..t1], &xi[t0 + k - pad..t1 + k - pad]);
                    if let Some(dx) = dx.as_mut() {
                        let w = weight[widx];
                        let dxi = &mut dx[(n * in_ch + i) * len..(n * in_ch + i + 1) * len];
                        axpy(w, &g[t0..t1], &mut dxi[t0 + k - pad..t1 + k - pad]);
                    }
                }
            }
        }
    }
    dx
}

/// Per-channel statistics of one batch-normalized activation.
#[derive(Clone, Debug)]
pub(crate) struct BatchNormCache<T> {
    pub x_hat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    /// Biased variance used for normalization.
    pub var: Vec<T>,
    /// Elements per channel (`batch × length`).
    pub count: usize,
}

/// Normalizes with batch statistics over the batch and length axes.
pub(crate) fn batch_norm_train<T: Scalar>(
    z: &[T],
    batch: usize,
    ch: usize,
    len: usize,
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> (Vec<T>, BatchNormCache<T>) {
    let count = batch * len;
    let m = T::lit(count as f64);
    let mut mean = vec![T::zero(); ch];
    let mut var = vec![T::zero(); ch];
    for c in 0..ch {
        let mut s = T::zero();
        for n in 0..batch {
            s += z[(n * ch + c) * len..(n * ch + c + 1) * len].iter().copied().sum::<T>();
        }
        mean[c] = s / m;
        let mut q = T::zero();
        for n in 0..batch {
            for v in &z[(n * ch + c) * len..(n * ch + c + 1) * len] {
                let d = *v - mean[c];
                q += d * d;
            }
        }
        var[c] = q / m;
    }
    let inv_std: Vec<T> = var.iter().map(|v| T::one() / (*v + eps).sqrt()).collect();
    let mut x_hat = vec![T::zero(); z.len()];
    let mut y = vec![T::zero(); z.len()];
    for n in 0..batch {
        for c in 0..ch {
            let r = (n * ch + c) * len..(n * ch + c + 1) * len;
            for ((xh, yy), v) in x_hat[r.clone()].iter_mut().zip(&mut y[r.clone()]).zip(&z[r]) {
                *xh = (*v - mean[c]) * inv_std[c];
                *yy = gamma[c] * *xh + beta[c];
            }
        }
    }
    (
        y,
        BatchNormCache {
            x_hat,
            inv_std,
            mean,
            var,
            count,
        },
    )
}

/// Normalizes with fixed (running) statistics.
pub(crate) fn batch_norm_infer<T: Scalar>(
    z: &[T],
    batch: usize,
    ch: usize,
    len: usize,
    gamma: &[T],
    beta: &[T],
    mean: &[T],
    var: &[T],
    eps: T,
) -> Vec<T> {
    let mut y = vec![T::zero(); z.len()];
    for n in 0..batch {
        for c in 0..ch {
            let scale = gamma[c] / (var[c] + eps).sqrt();
            let shift = beta[c] - mean[c] * scale;
            let r = (n * ch + c) * len..(n * ch + c + 1) * len;
            for (yy, v) in y[r.clone()].iter_mut().zip(&z[r]) {
                *yy = *v * scale + shift;
            }
        }
    }
    y
}

/// Backward through train-mode batch norm. Returns the gradient with
/// respect to the pre-normalization input.
pub(crate) fn batch_norm_backward<T: Scalar>(
    dy: &[T],
    cache: &BatchNormCache<T>,
    batch: usize,
    ch: usize,
    len: usize,
    gamma: &[T],
    d_gamma: &mut [T],
    d_beta: &mut [T],
) -> Vec<T> {
    let m = T::lit(cache.count as f64);
    let mut dz = vec![T::zero(); dy.len()];
    for c in 0..ch {
        let mut sum_dy = T::zero();
        let mut sum_dy_xhat = T::zero();
        for n in 0..batch {
            let r = (n * ch + c) * len..(n * ch + c + 1) * len;
            for (g, xh) in dy[r.clone()].iter().zip(&cache.x_hat[r]) {
                sum_dy += *g;
                sum_dy_xhat += *g * *xh;
            }
        }
        d_gamma[c] += sum_dy_xhat;
        d_beta[c] += sum_dy;
        // dx_hat = dy * gamma; dz = inv_std / m * (m dx_hat - sum dx_hat - x_hat sum(dx_hat x_hat))
        let k = gamma[c] * cache.inv_std[c] / m;
        for n in 0..batch {
            let r = (n * ch + c) * len..(n * ch + c + 1) * len;
            for ((d, g), xh) in dz[r.clone()].iter_mut().zip(&dy[r.clone()]).zip(&cache.x_hat[r]) {
                *d = k * (m * *g - sum_dy - *xh * sum_dy_xhat);
            }
        }
    }
    dz
}

/// `out[n] = W x[n] + b` with `W` stored `[outputs × inputs]`.
pub(crate) fn dense_forward<T: Scalar>(
    x: &[T],
    batch: usize,
    inputs: usize,
    outputs: usize,
    weight: &[T],
    bias: &[T],
) -> Vec<T> {
    let mut out = vec![T::zero(); batch * outputs];
    for n in 0..batch {
        let xn = &x[n * inputs..(n + 1) * inputs];
        for o in 0..outputs {
            out[n * outputs + o] = bias[o] + dot(&weight[o * inputs..(o + 1) * inputs], xn);
        }
    }
    out
}

pub(crate) fn dense_backward<T: Scalar>(
    x: &[T],
    dout: &[T],
    batch: usize,
    inputs: usize,
    outputs: usize,
    weight: &[T],
    d_weight: &mut [T],
    d_bias: &mut [T],
    need_dx: bool,
) -> Option<Vec<T>> {
    let mut dx = need_dx.then(|| vec![T::zero(); batch * inputs]);
    for n in 0..batch {
        let xn = &x[n * inputs..(n + 1) * inputs];
        for o in 0..outputs {
            let g = dout[n * outputs + o];
            if g == T::zero() {
                continue;
            }
            d_bias[o] += g;
            axpy(g, xn, &mut d_weight[o * inputs..(o + 1) * inputs]);
            if let Some(dx) = dx.as_mut() {
                axpy(
                    g,
                    &weight[o * inputs..(o + 1) * inputs],
                    &mut dx[n * inputs..(n + 1) * inputs],
                );
            }
        }
    }
    dx
}

pub(crate) fn relu_in_place<T: Scalar>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// Zeroes `grad` wherever the pre-activation was not positive.
pub(crate) fn relu_backward_in_place<T: Scalar>(pre: &[T], grad: &mut [T]) {
    for (g, p) in grad.iter_mut().zip(pre) {
        if *p <= T::zero() {
            *g = T::zero();
        }
    }
}
