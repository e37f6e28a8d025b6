//! Boolean satisfaction, exact robustness and smooth robustness.

use super::formula::{Expr, Formula};
use super::trace::Trace;
use crate::diff::Real;
use crate::error::{Error, Result};
use crate::num::Scalar;

/// How min/max are realized in the robustness recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinMax<T> {
    Exact,
    /// Log-sum-exp with sharpness `k`.
    Smooth(T),
}

impl<T: Scalar> MinMax<T> {
    fn max<V: Real<T>>(&self, xs: &[V]) -> V {
        match *self {
            MinMax::Exact => V::max_of(xs),
            MinMax::Smooth(k) => V::smooth_max(xs, k),
        }
    }

    fn min<V: Real<T>>(&self, xs: &[V]) -> V {
        match *self {
            MinMax::Exact => V::min_of(xs),
            MinMax::Smooth(k) => V::smooth_min(xs, k),
        }
    }
}

/// Errors unless `f` can be evaluated at `t` on a trace of `len` steps.
pub fn check_horizon(f: &Formula, t: usize, len: usize) -> Result<()> {
    let needed = f.horizon();
    if t + needed + 1 > len {
        return Err(Error::HorizonOverflow { t, needed, len, max_t: len.checked_sub(needed + 1) });
    }
    Ok(())
}

fn check<V>(trace: &Trace<V>, t: usize, f: &Formula) -> Result<()> {
    f.check_schema(trace.schema())?;
    check_horizon(f, t, trace.len())
}

/// Value of `e` at step `t`.
pub fn eval_expr<T: Scalar, V: Real<T>>(e: &Expr, trace: &Trace<V>, t: usize, ctx: &V::Ctx) -> V {
    match e {
        Expr::Const(c) => V::constant(ctx, T::of(*c)),
        Expr::Channel { index, .. } => trace.at(*index, t).clone(),
        Expr::Neg(a) => -eval_expr(a, trace, t, ctx),
        Expr::Add(a, b) => eval_expr(a, trace, t, ctx) + eval_expr(b, trace, t, ctx),
        Expr::Sub(a, b) => eval_expr(a, trace, t, ctx) - eval_expr(b, trace, t, ctx),
        Expr::Mul(a, b) => eval_expr(a, trace, t, ctx) * eval_expr(b, trace, t, ctx),
        Expr::Square(a) => eval_expr(a, trace, t, ctx).square(),
        Expr::Abs(a) => eval_expr(a, trace, t, ctx).abs(),
        Expr::Norm2(es) => {
            let mut it = es.iter().map(|e| eval_expr(e, trace, t, ctx).square());
            let first = it.next().expect("norm2 of empty list");
            it.fold(first, |acc, v| acc + v).sqrt()
        }
        Expr::Mod(a, p) => eval_expr(a, trace, t, ctx).rem_euclid(T::of(*p)),
    }
}

fn rho<T: Scalar, V: Real<T>>(f: &Formula, trace: &Trace<V>, t: usize, mm: MinMax<T>, ctx: &V::Ctx) -> V {
    match f {
        Formula::True => V::constant(ctx, T::one()),
        Formula::Pred(e) => eval_expr(e, trace, t, ctx),
        Formula::Not(g) => -rho(g, trace, t, mm, ctx),
        Formula::And(gs) => {
            let xs: Vec<V> = gs.iter().map(|g| rho(g, trace, t, mm, ctx)).collect();
            mm.min(&xs)
        }
        Formula::Or(gs) => {
            let xs: Vec<V> = gs.iter().map(|g| rho(g, trace, t, mm, ctx)).collect();
            mm.max(&xs)
        }
        Formula::Implies(a, b) => {
            let xs = [-rho(a, trace, t, mm, ctx), rho(b, trace, t, mm, ctx)];
            mm.max(&xs)
        }
        Formula::Eventually(i, g) => {
            let xs: Vec<V> = (t + i.lo()..=t + i.hi()).map(|s| rho(g, trace, s, mm, ctx)).collect();
            mm.max(&xs)
        }
        Formula::Always(i, g) => {
            let xs: Vec<V> = (t + i.lo()..=t + i.hi()).map(|s| rho(g, trace, s, mm, ctx)).collect();
            mm.min(&xs)
        }
        Formula::Until(i, a, b) => {
            let lhs: Vec<V> = (t..=t + i.hi()).map(|s| rho(a, trace, s, mm, ctx)).collect();
            let outer: Vec<V> = (t + i.lo()..=t + i.hi())
                .map(|s| {
                    let mut inner = Vec::with_capacity(s - t + 2);
                    inner.push(rho(b, trace, s, mm, ctx));
                    inner.extend_from_slice(&lhs[..=s - t]);
                    mm.min(&inner)
                })
                .collect();
            mm.max(&outer)
        }
    }
}

/// Robustness of `f` at `t` under the chosen min/max realization.
pub fn robustness_with<T: Scalar, V: Real<T>>(
    trace: &Trace<V>,
    t: usize,
    f: &Formula,
    mm: MinMax<T>,
    ctx: &V::Ctx,
) -> Result<V> {
    check(trace, t, f)?;
    Ok(rho(f, trace, t, mm, ctx))
}

/// Exact robustness score.
pub fn robustness<T: Scalar>(trace: &Trace<T>, t: usize, f: &Formula) -> Result<T> {
    robustness_with(trace, t, f, MinMax::Exact, &())
}

/// Log-sum-exp robustness with sharpness `k`. Works on plain scalars and on
/// tape values, where the result carries gradients back to the trace.
pub fn smooth_robustness<T: Scalar, V: Real<T>>(
    trace: &Trace<V>,
    t: usize,
    f: &Formula,
    k: T,
    ctx: &V::Ctx,
) -> Result<V> {
    if !(k > T::zero()) {
        return Err(Error::Config(format!("smoothness k must be positive, got {k}")));
    }
    robustness_with(trace, t, f, MinMax::Smooth(k), ctx)
}

fn sat<T: Scalar>(f: &Formula, trace: &Trace<T>, t: usize) -> bool {
    match f {
        Formula::True => true,
        Formula::Pred(e) => eval_expr(e, trace, t, &()) > T::zero(),
        Formula::Not(g) => !sat(g, trace, t),
        Formula::And(gs) => gs.iter().all(|g| sat(g, trace, t)),
        Formula::Or(gs) => gs.iter().any(|g| sat(g, trace, t)),
        Formula::Implies(a, b) => !sat(a, trace, t) || sat(b, trace, t),
        Formula::Eventually(i, g) => (t + i.lo()..=t + i.hi()).any(|s| sat(g, trace, s)),
        Formula::Always(i, g) => (t + i.lo()..=t + i.hi()).all(|s| sat(g, trace, s)),
        Formula::Until(i, a, b) => {
            (t + i.lo()..=t + i.hi()).any(|s| sat(b, trace, s) && (t..=s).all(|r| sat(a, trace, r)))
        }
    }
}

/// Boolean satisfaction with strict predicates (`e > 0`).
pub fn eval_boolean<T: Scalar>(trace: &Trace<T>, t: usize, f: &Formula) -> Result<bool> {
    check(trace, t, f)?;
    Ok(sat(f, trace, t))
}
