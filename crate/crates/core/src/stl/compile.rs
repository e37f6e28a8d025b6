//! Rewrites that make a formula friendlier to gradient training.
//!
//! Band tests on an absolute value become squared comparisons with the same
//! sign (`c - |e|` becomes `c^2 - e^2`), and `e % P` becomes `e`. The latter
//! is exact whenever `e` already lives in `[0, P)`, which benchmarks ensure
//! by carrying the phase as a wrapped state channel.

use super::formula::{Expr, Formula};

fn rewrite_pred(e: &Expr) -> Expr {
    match e {
        Expr::Sub(a, b) => match (&**a, &**b) {
            (Expr::Const(c), Expr::Abs(inner)) if *c >= 0.0 => Expr::Sub(
                Box::new(Expr::Const(c * c)),
                Box::new(Expr::Square(Box::new(strip_mod(inner)))),
            ),
            (Expr::Abs(inner), Expr::Const(c)) if *c >= 0.0 => Expr::Sub(
                Box::new(Expr::Square(Box::new(strip_mod(inner)))),
                Box::new(Expr::Const(c * c)),
            ),
            _ => strip_mod(e),
        },
        _ => strip_mod(e),
    }
}

fn strip_mod(e: &Expr) -> Expr {
    let b = |x: &Expr| Box::new(strip_mod(x));
    match e {
        Expr::Const(_) | Expr::Channel { .. } => e.clone(),
        Expr::Mod(inner, _) => strip_mod(inner),
        Expr::Neg(a) => Expr::Neg(b(a)),
        Expr::Square(a) => Expr::Square(b(a)),
        Expr::Abs(a) => Expr::Abs(b(a)),
        Expr::Add(x, y) => Expr::Add(b(x), b(y)),
        Expr::Sub(x, y) => Expr::Sub(b(x), b(y)),
        Expr::Mul(x, y) => Expr::Mul(b(x), b(y)),
        Expr::Norm2(es) => Expr::Norm2(es.iter().map(strip_mod).collect()),
    }
}

/// Training form of `f`. Boolean meaning is unchanged on traces whose
/// modulo arguments are already reduced.
pub fn smooth_friendly(f: &Formula) -> Formula {
    let r = |g: &Formula| Box::new(smooth_friendly(g));
    match f {
        Formula::True => Formula::True,
        Formula::Pred(e) => Formula::Pred(rewrite_pred(e)),
        Formula::Not(g) => Formula::Not(r(g)),
        Formula::And(gs) => Formula::And(gs.iter().map(smooth_friendly).collect()),
        Formula::Or(gs) => Formula::Or(gs.iter().map(smooth_friendly).collect()),
        Formula::Implies(a, b) => Formula::Implies(r(a), r(b)),
        Formula::Until(i, a, b) => Formula::Until(*i, r(a), r(b)),
        Formula::Eventually(i, g) => Formula::Eventually(*i, r(g)),
        Formula::Always(i, g) => Formula::Always(*i, r(g)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{eval_boolean, parse_formula, pretty_print, Trace};

    fn schema() -> Vec<String> {
        vec!["y".into(), "tau".into()]
    }

    #[test]
    fn abs_band_becomes_square() {
        let f = parse_formula("G[0,1] (abs(y) < 5)", &schema()).unwrap();
        assert_eq!(pretty_print(&smooth_friendly(&f)), "G[0,1] (25 - y^2 >= 0)");
        let g = parse_formula("abs(y) > 2", &schema()).unwrap();
        assert_eq!(pretty_print(&smooth_friendly(&g)), "y^2 - 4 >= 0");
    }

    #[test]
    fn modulo_is_dropped_and_sign_kept_in_range() {
        let f = parse_formula("G[0,2] (tau % 8 > 4 | abs(y) < 1)", &schema()).unwrap();
        let g = smooth_friendly(&f);
        assert_eq!(pretty_print(&g), "G[0,2] (tau - 4 >= 0 | 1 - y^2 >= 0)");
        for (ys, taus) in [([0.5, 2.0, -3.0], [1.0, 5.0, 7.9]), ([0.0, 0.9, -0.9], [0.0, 3.0, 4.5])] {
            let tr = Trace::new(schema(), vec![ys.to_vec(), taus.to_vec()], 1.0).unwrap();
            assert_eq!(eval_boolean(&tr, 0, &f).unwrap(), eval_boolean(&tr, 0, &g).unwrap());
        }
    }
}
