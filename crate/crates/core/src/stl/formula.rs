use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Closed step interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interval {
    lo: usize,
    hi: usize,
}

impl Interval {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if hi < lo {
            return Err(Error::BadInterval { lo, hi, line: 0, col: 0 });
        }
        Ok(Interval { lo, hi })
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }

    /// Number of steps covered.
    pub fn width(&self) -> usize {
        self.hi - self.lo + 1
    }
}

/// Arithmetic over trace channels. Channel references carry the schema
/// index they were resolved to at parse time.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Channel { name: String, index: usize },
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Square(Box<Expr>),
    Abs(Box<Expr>),
    Norm2(Vec<Expr>),
    /// Euclidean remainder by a positive constant.
    Mod(Box<Expr>, f64),
}

impl Expr {
    pub fn channels(&self, out: &mut BTreeSet<(usize, String)>) {
        match self {
            Expr::Const(_) => {}
            Expr::Channel { name, index } => {
                out.insert((*index, name.clone()));
            }
            Expr::Neg(e) | Expr::Square(e) | Expr::Abs(e) | Expr::Mod(e, _) => e.channels(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.channels(out);
                b.channels(out);
            }
            Expr::Norm2(es) => es.iter().for_each(|e| e.channels(out)),
        }
    }
}

/// STL abstract syntax. `Pred(e)` means `e >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    Pred(Expr),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Always(Interval, Box<Formula>),
}

impl Formula {
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    /// Conjunction; a single child is returned as-is.
    pub fn and(mut fs: Vec<Formula>) -> Formula {
        assert!(!fs.is_empty(), "empty conjunction");
        if fs.len() == 1 {
            fs.pop().unwrap()
        } else {
            Formula::And(fs)
        }
    }

    pub fn or(mut fs: Vec<Formula>) -> Formula {
        assert!(!fs.is_empty(), "empty disjunction");
        if fs.len() == 1 {
            fs.pop().unwrap()
        } else {
            Formula::Or(fs)
        }
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn always(i: Interval, f: Formula) -> Formula {
        Formula::Always(i, Box::new(f))
    }

    pub fn eventually(i: Interval, f: Formula) -> Formula {
        Formula::Eventually(i, Box::new(f))
    }

    pub fn until(i: Interval, a: Formula, b: Formula) -> Formula {
        Formula::Until(i, Box::new(a), Box::new(b))
    }

    /// Number of future steps the formula inspects.
    pub fn horizon(&self) -> usize {
        match self {
            Formula::True | Formula::Pred(_) => 0,
            Formula::Not(f) => f.horizon(),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().map(Formula::horizon).max().unwrap_or(0),
            Formula::Implies(a, b) => a.horizon().max(b.horizon()),
            Formula::Until(i, a, b) => i.hi + a.horizon().max(b.horizon()),
            Formula::Eventually(i, f) | Formula::Always(i, f) => i.hi + f.horizon(),
        }
    }

    /// Number of nested min/max layers along the deepest path. `Until`
    /// contributes two (the outer sup and the inner inf).
    pub fn minmax_depth(&self) -> usize {
        match self {
            Formula::True | Formula::Pred(_) => 0,
            Formula::Not(f) => f.minmax_depth(),
            Formula::And(fs) | Formula::Or(fs) => 1 + fs.iter().map(Formula::minmax_depth).max().unwrap_or(0),
            Formula::Implies(a, b) => 1 + a.minmax_depth().max(b.minmax_depth()),
            Formula::Until(_, a, b) => 2 + a.minmax_depth().max(b.minmax_depth()),
            Formula::Eventually(_, f) | Formula::Always(_, f) => 1 + f.minmax_depth(),
        }
    }

    /// Largest number of operands fed to a single min/max during evaluation.
    pub fn max_arity(&self) -> usize {
        match self {
            Formula::True | Formula::Pred(_) => 1,
            Formula::Not(f) => f.max_arity(),
            Formula::And(fs) | Formula::Or(fs) => {
                fs.iter().map(Formula::max_arity).max().unwrap_or(1).max(fs.len())
            }
            Formula::Implies(a, b) => a.max_arity().max(b.max_arity()).max(2),
            Formula::Until(i, a, b) => a.max_arity().max(b.max_arity()).max(i.width()).max(i.hi + 2),
            Formula::Eventually(i, f) | Formula::Always(i, f) => f.max_arity().max(i.width()),
        }
    }

    /// Bound on `|smooth robustness - robustness|` for sharpness `k`,
    /// accumulated operator by operator (`ln(arity)/k` per layer).
    pub fn smooth_error_bound(&self, k: f64) -> f64 {
        let layer = |n: usize| (n as f64).ln() / k;
        match self {
            Formula::True | Formula::Pred(_) => 0.0,
            Formula::Not(f) => f.smooth_error_bound(k),
            Formula::And(fs) | Formula::Or(fs) => {
                fs.iter().map(|f| f.smooth_error_bound(k)).fold(0.0, f64::max) + layer(fs.len())
            }
            Formula::Implies(a, b) => a.smooth_error_bound(k).max(b.smooth_error_bound(k)) + layer(2),
            Formula::Until(i, a, b) => {
                a.smooth_error_bound(k).max(b.smooth_error_bound(k)) + layer(i.width()) + layer(i.hi + 2)
            }
            Formula::Eventually(i, f) | Formula::Always(i, f) => f.smooth_error_bound(k) + layer(i.width()),
        }
    }

    /// Channels referenced anywhere in the formula, as `(index, name)`.
    pub fn channels(&self) -> BTreeSet<(usize, String)> {
        let mut out = BTreeSet::new();
        self.collect_channels(&mut out);
        out
    }

    fn collect_channels(&self, out: &mut BTreeSet<(usize, String)>) {
        match self {
            Formula::True => {}
            Formula::Pred(e) => e.channels(out),
            Formula::Not(f) | Formula::Eventually(_, f) | Formula::Always(_, f) => f.collect_channels(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect_channels(out)),
            Formula::Implies(a, b) | Formula::Until(_, a, b) => {
                a.collect_channels(out);
                b.collect_channels(out);
            }
        }
    }

    /// Checks every channel reference against `schema` by index and name.
    pub fn check_schema(&self, schema: &[String]) -> Result<()> {
        for (index, name) in self.channels() {
            if schema.get(index) != Some(&name) {
                return Err(Error::MissingChannel(name));
            }
        }
        Ok(())
    }

    /// Structural invariants: n-ary nodes have at least two children.
    pub fn validate(&self) -> Result<()> {
        match self {
            Formula::True | Formula::Pred(_) => Ok(()),
            Formula::Not(f) | Formula::Eventually(_, f) | Formula::Always(_, f) => f.validate(),
            Formula::And(fs) | Formula::Or(fs) => {
                if fs.len() < 2 {
                    return Err(Error::Config("And/Or need at least two children".into()));
                }
                fs.iter().try_for_each(Formula::validate)
            }
            Formula::Implies(a, b) | Formula::Until(_, a, b) => {
                a.validate()?;
                b.validate()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Formula {
        Formula::Pred(Expr::Channel { name: "x".into(), index: 0 })
    }

    fn y() -> Formula {
        Formula::Pred(Expr::Channel { name: "y".into(), index: 1 })
    }

    #[test]
    fn horizon_examples() {
        assert_eq!(x().horizon(), 0);
        assert_eq!(Formula::always(Interval::new(0, 10).unwrap(), x()).horizon(), 10);
        let f = Formula::until(
            Interval::new(2, 5).unwrap(),
            x(),
            Formula::eventually(Interval::new(0, 3).unwrap(), y()),
        );
        assert_eq!(f.horizon(), 8);
    }

    #[test]
    fn interval_order_is_checked() {
        assert!(matches!(Interval::new(3, 1), Err(Error::BadInterval { lo: 3, hi: 1, .. })));
    }

    #[test]
    fn single_child_connectives_collapse() {
        assert_eq!(Formula::and(vec![x()]), x());
        assert!(Formula::And(vec![x()]).validate().is_err());
    }
}
