//! Dense and 3x3/stride-2 convolution kernels with their reverse passes.
//!
//! Tensors are plain slices in CHW order. Weight layouts: convolution
//! `[out][in][3][3]`, dense `[out][in]`.

use super::Scalar;

/// Spatial size after a 3x3 convolution with stride 2 and padding 1.
pub fn conv_out_size(n: usize) -> usize {
    n.div_ceil(2)
}

/// Valid output index range `[lo, hi)` for kernel tap `k` over an input of
/// length `n` producing `n_out` outputs.
#[inline]
fn tap_range(k: usize, n: usize, n_out: usize) -> (usize, usize) {
    let lo = usize::from(k == 0);
    // 2*o + k - 1 <= n - 1  =>  o <= (n - k) / 2
    let hi = if n >= k { ((n - k) / 2 + 1).min(n_out) } else { 0 };
    (lo, hi)
}

pub struct ConvShape {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
}

impl ConvShape {
    pub fn h_out(&self) -> usize {
        conv_out_size(self.h)
    }
    pub fn w_out(&self) -> usize {
        conv_out_size(self.w)
    }
}

pub fn conv_forward<T: Scalar>(s: &ConvShape, input: &[T], weight: &[T], bias: &[T], out: &mut [T]) {
    let (ho, wo) = (s.h_out(), s.w_out());
    let plane_out = ho * wo;
    let plane_in = s.h * s.w;
    debug_assert_eq!(input.len(), s.c_in * plane_in);
    debug_assert_eq!(out.len(), s.c_out * plane_out);
    for o in 0..s.c_out {
        let out_plane = &mut out[o * plane_out..(o + 1) * plane_out];
        out_plane.fill(bias[o]);
        for i in 0..s.c_in {
            let in_plane = &input[i * plane_in..(i + 1) * plane_in];
            let wk = &weight[(o * s.c_in + i) * 9..(o * s.c_in + i + 1) * 9];
            for ky in 0..3 {
                let (oy0, oy1) = tap_range(ky, s.h, ho);
                for kx in 0..3 {
                    let wv = wk[ky * 3 + kx];
                    let (ox0, ox1) = tap_range(kx, s.w, wo);
                    for oy in oy0..oy1 {
                        let iy = 2 * oy + ky - 1;
                        let in_row = &in_plane[iy * s.w..(iy + 1) * s.w];
                        let out_row = &mut out_plane[oy * wo..(oy + 1) * wo];
                        for ox in ox0..ox1 {
                            out_row[ox] += wv * in_row[2 * ox + kx - 1];
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates weight/bias gradients and, when `grad_in` is given, the input
/// gradient.
pub fn conv_backward<T: Scalar>(
    s: &ConvShape,
    input: &[T],
    weight: &[T],
    grad_out: &[T],
    grad_w: &mut [T],
    grad_b: &mut [T],
    mut grad_in: Option<&mut [T]>,
) {
    let (ho, wo) = (s.h_out(), s.w_out());
    let plane_out = ho * wo;
    let plane_in = s.h * s.w;
    for o in 0..s.c_out {
        let g_plane = &grad_out[o * plane_out..(o + 1) * plane_out];
        grad_b[o] += g_plane.iter().fold(T::zero(), |a, &b| a + b);
        for i in 0..s.c_in {
            let in_plane = &input[i * plane_in..(i + 1) * plane_in];
            let base = (o * s.c_in + i) * 9;
            for ky in 0..3 {
                let (oy0, oy1) = tap_range(ky, s.h, ho);
                for kx in 0..3 {
                    let (ox0, ox1) = tap_range(kx, s.w, wo);
                    let wv = weight[base + ky * 3 + kx];
                    let mut acc = T::zero();
                    for oy in oy0..oy1 {
                        let iy = 2 * oy + ky - 1;
                        let in_row = &in_plane[iy * s.w..(iy + 1) * s.w];
                        let g_row = &g_plane[oy * wo..(oy + 1) * wo];
                        for ox in ox0..ox1 {
                            acc += g_row[ox] * in_row[2 * ox + kx - 1];
                        }
                    }
                    grad_w[base + ky * 3 + kx] += acc;
                    if let Some(gi) = grad_in.as_deref_mut() {
                        let gi_plane = &mut gi[i * plane_in..(i + 1) * plane_in];
                        for oy in oy0..oy1 {
                            let iy = 2 * oy + ky - 1;
                            let g_row = &g_plane[oy * wo..(oy + 1) * wo];
                            let gi_row = &mut gi_plane[iy * s.w..(iy + 1) * s.w];
                            for ox in ox0..ox1 {
                                gi_row[2 * ox + kx - 1] += wv * g_row[ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn dense_forward<T: Scalar>(n_in: usize, input: &[T], weight: &[T], bias: &[T], out: &mut [T]) {
    for (o, y) in out.iter_mut().enumerate() {
        let row = &weight[o * n_in..(o + 1) * n_in];
        *y = bias[o] + row.iter().zip(input).fold(T::zero(), |a, (&w, &x)| a + w * x);
    }
}

pub fn dense_backward<T: Scalar>(
    n_in: usize,
    input: &[T],
    weight: &[T],
    grad_out: &[T],
    grad_w: &mut [T],
    grad_b: &mut [T],
    mut grad_in: Option<&mut [T]>,
) {
    for (o, &g) in grad_out.iter().enumerate() {
        grad_b[o] += g;
        let gw = &mut grad_w[o * n_in..(o + 1) * n_in];
        for (gw, &x) in gw.iter_mut().zip(input) {
            *gw += g * x;
        }
        if let Some(gi) = grad_in.as_deref_mut() {
            let row = &weight[o * n_in..(o + 1) * n_in];
            for (gi, &w) in gi.iter_mut().zip(row) {
                *gi += g * w;
            }
        }
    }
}

pub fn relu_in_place<T: Scalar>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes gradient entries where the (post-activation) output was clamped.
pub fn relu_backward_in_place<T: Scalar>(activated: &[T], grad: &mut [T]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
