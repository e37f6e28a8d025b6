//! Clock augmentation for constraints on global time intervals.
//!
//! A clock channel advances by `dt` per step from 0. A top-level
//! `G[a,b] g` becomes `G[0,H]((clock in [a dt, b dt]) -> g)` and `F[a,b] g`
//! becomes `F[0,H]((clock in [a dt, b dt]) & g)`, so the window keeps its
//! absolute position as the planning window slides forward.

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::stl::{Expr, Formula, Interval, Trace};

fn in_range(clock: &Expr, i: &Interval, dt: f64) -> Formula {
    // Half-step margins turn the closed step range into strict predicates.
    let lo = (i.lo() as f64 - 0.5) * dt;
    let hi = (i.hi() as f64 + 0.5) * dt;
    Formula::and(vec![
        Formula::Pred(Expr::Sub(Box::new(clock.clone()), Box::new(Expr::Const(lo)))),
        Formula::Pred(Expr::Sub(Box::new(Expr::Const(hi)), Box::new(clock.clone()))),
    ])
}

/// Rewrites the outermost temporal operators of `f` against a clock channel
/// at `clock_index` named `clock_name`. Nested operators keep their
/// relative intervals. `horizon` is the `H` of the rewritten windows.
pub fn timer_augment(f: &Formula, clock_index: usize, clock_name: &str, dt: f64, horizon: usize) -> Result<Formula> {
    let clock = Expr::Channel { name: clock_name.into(), index: clock_index };
    let window = Interval::new(0, horizon)?;
    let rec = |g: &Formula| timer_augment(g, clock_index, clock_name, dt, horizon);
    Ok(match f {
        Formula::True | Formula::Pred(_) | Formula::Until(..) => f.clone(),
        Formula::Not(g) => Formula::not(rec(g)?),
        Formula::And(gs) => Formula::and(gs.iter().map(rec).collect::<Result<_>>()?),
        Formula::Or(gs) => Formula::or(gs.iter().map(rec).collect::<Result<_>>()?),
        Formula::Implies(a, b) => Formula::implies(rec(a)?, rec(b)?),
        Formula::Always(i, g) | Formula::Eventually(i, g) => {
            if i.hi() > horizon {
                return Err(Error::Config(format!("interval end {} exceeds clock horizon {horizon}", i.hi())));
            }
            let guard = in_range(&clock, i, dt);
            match f {
                Formula::Always(..) => Formula::always(window, Formula::implies(guard, (**g).clone())),
                _ => Formula::eventually(window, Formula::and(vec![guard, (**g).clone()])),
            }
        }
    })
}

/// Appends a clock channel `t * dt` to a trace.
pub fn append_clock<T: Scalar>(trace: &Trace<T>, name: &str) -> Result<Trace<T>> {
    let mut schema = trace.schema().to_vec();
    schema.push(name.into());
    let mut values = trace.values().to_vec();
    values.push((0..trace.len()).map(|t| T::of(t as f64 * trace.dt())).collect());
    Trace::new(schema, values, trace.dt())
}
