//! Central finite-difference gradient check.

use crate::num::Scalar;

/// Largest coordinate-wise relative error between an analytic gradient and
/// central differences of `f` at `x0`:
/// `|g_i - fd_i| / (|fd_i| + 1e-8)`.
///
/// `f` returns the value and its gradient at a point; the gradient is only
/// read at `x0`.
pub fn grad_check<T, F>(f: F, x0: &[T], h: T) -> T
where
    T: Scalar,
    F: Fn(&[T]) -> (T, Vec<T>),
{
    let (_, grad) = f(x0);
    assert_eq!(grad.len(), x0.len(), "gradient length");
    let two = T::one() + T::one();
    let mut worst = T::zero();
    let mut x = x0.to_vec();
    for i in 0..x0.len() {
        x[i] = x0[i] + h;
        let (fp, _) = f(&x);
        x[i] = x0[i] - h;
        let (fm, _) = f(&x);
        x[i] = x0[i];
        let fd = (fp - fm) / (two * h);
        let err = (grad[i] - fd).abs() / (fd.abs() + T::of(1e-8));
        if err > worst {
            worst = err;
        }
    }
    worst
}
