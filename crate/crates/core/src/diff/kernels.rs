//! Dense slice kernels shared by the tape and the tape-free forward paths.
//!
//! Both paths call the same functions so a plain forward pass and a taped
//! one produce bit-identical values.

use crate::num::Scalar;

const LANES: usize = 8;

/// Inner product with fixed lane-wise accumulation order.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); LANES];
    let chunks = a.len() / LANES;
    for c in 0..chunks {
        let base = c * LANES;
        for l in 0..LANES {
            acc[l] += a[base + l] * b[base + l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * LANES..a.len() {
        tail += a[i] * b[i];
    }
    let mut s = T::zero();
    for v in acc {
        s += v;
    }
    s + tail
}

/// `y += alpha * x`
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Row-batched affine map: `y[b] = W x[b] + bias` with `W` stored row-major
/// as `out x inp`.
pub fn linear<T: Scalar>(x: &[T], batch: usize, inp: usize, w: &[T], out: usize, bias: &[T]) -> Vec<T> {
    debug_assert_eq!(x.len(), batch * inp);
    debug_assert_eq!(w.len(), out * inp);
    debug_assert_eq!(bias.len(), out);
    let mut y = Vec::with_capacity(batch * out);
    for b in 0..batch {
        let xb = &x[b * inp..(b + 1) * inp];
        for o in 0..out {
            y.push(dot(xb, &w[o * inp..(o + 1) * inp]) + bias[o]);
        }
    }
    y
}

/// Accumulates `dx[b] += W^T dy[b]`.
pub fn linear_grad_input<T: Scalar>(dy: &[T], batch: usize, inp: usize, w: &[T], out: usize, dx: &mut [T]) {
    for b in 0..batch {
        let dxb = &mut dx[b * inp..(b + 1) * inp];
        for o in 0..out {
            let g = dy[b * out + o];
            if g != T::zero() {
                axpy(g, &w[o * inp..(o + 1) * inp], dxb);
            }
        }
    }
}

/// Accumulates `dW += sum_b dy[b] x[b]^T` and `dbias += sum_b dy[b]`.
pub fn linear_grad_params<T: Scalar>(
    dy: &[T],
    batch: usize,
    inp: usize,
    x: &[T],
    out: usize,
    dw: &mut [T],
    dbias: &mut [T],
) {
    for b in 0..batch {
        let xb = &x[b * inp..(b + 1) * inp];
        for o in 0..out {
            let g = dy[b * out + o];
            dbias[o] += g;
            if g != T::zero() {
                axpy(g, xb, &mut dw[o * inp..(o + 1) * inp]);
            }
        }
    }
}

/// Smooth maximum `(1/k) ln sum exp(k x_i)` with the max shifted out so large
/// `k` cannot overflow.
pub fn smooth_max<T: Scalar>(xs: &[T], k: T) -> T {
    assert!(!xs.is_empty(), "smooth_max of an empty list");
    if xs.len() == 1 {
        return xs[0];
    }
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if m.is_infinite() {
        return m;
    }
    let s: T = xs.iter().map(|&x| ((x - m) * k).exp()).sum();
    m + s.ln() / k
}

/// Dual of [`smooth_max`].
pub fn smooth_min<T: Scalar>(xs: &[T], k: T) -> T {
    let neg: Vec<T> = xs.iter().map(|&x| -x).collect();
    -smooth_max(&neg, k)
}

/// `lo + (hi - lo) (1 + tanh z) / 2`, written as `mid + half tanh(z')`.
pub fn clip_smooth<T: Scalar>(x: T, lo: T, hi: T) -> T {
    let (mid, half) = mid_half(lo, hi);
    mid + half * ((x - mid) / half).tanh()
}

pub(crate) fn mid_half<T: Scalar>(lo: T, hi: T) -> (T, T) {
    let two = T::one() + T::one();
    ((lo + hi) / two, (hi - lo) / two)
}
