//! Canonical text form. Output always reparses to the same tree.

use std::fmt;

use super::formula::{Expr, Formula};

fn expr_prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Mod(..) => 2,
        Expr::Neg(_) => 3,
        Expr::Square(_) => 4,
        _ => 5,
    }
}

fn write_expr_paren(f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool) -> fmt::Result {
    if paren {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => write!(f, "(-{})", -c),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Channel { name, .. } => write!(f, "{name}"),
            Expr::Neg(e) => write!(f, "-({e})"),
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                let op = if matches!(self, Expr::Add(..)) { "+" } else { "-" };
                write_expr_paren(f, a, expr_prec(a) < 1)?;
                write!(f, " {op} ")?;
                write_expr_paren(f, b, expr_prec(b) <= 1)
            }
            Expr::Mul(a, b) => {
                write_expr_paren(f, a, expr_prec(a) < 2)?;
                write!(f, " * ")?;
                write_expr_paren(f, b, expr_prec(b) <= 2)
            }
            Expr::Mod(a, p) => {
                write_expr_paren(f, a, expr_prec(a) < 2)?;
                write!(f, " % {p}")
            }
            Expr::Square(e) => {
                write_expr_paren(f, e, expr_prec(e) < 4)?;
                write!(f, "^2")
            }
            Expr::Abs(e) => write!(f, "abs({e})"),
            Expr::Norm2(es) => {
                write!(f, "norm2(")?;
                for (i, e) in es.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, ")")
            }
        }
    }
}

fn prec(f: &Formula) -> u8 {
    match f {
        Formula::Implies(..) => 1,
        Formula::Or(_) => 2,
        Formula::And(_) => 3,
        Formula::Until(..) => 4,
        Formula::Not(_) | Formula::Always(..) | Formula::Eventually(..) => 5,
        Formula::True | Formula::Pred(_) => 6,
    }
}

fn write_paren(out: &mut fmt::Formatter<'_>, f: &Formula, paren: bool) -> fmt::Result {
    if paren {
        write!(out, "({f})")
    } else {
        write!(out, "{f}")
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(out, "true"),
            Formula::Pred(e) => write!(out, "{e} >= 0"),
            Formula::Not(f) => write!(out, "!({f})"),
            Formula::Always(i, f) => write!(out, "G[{},{}] ({f})", i.lo(), i.hi()),
            Formula::Eventually(i, f) => write!(out, "F[{},{}] ({f})", i.lo(), i.hi()),
            Formula::Until(i, a, b) => {
                write_paren(out, a, prec(a) <= 4)?;
                write!(out, " U[{},{}] ", i.lo(), i.hi())?;
                write_paren(out, b, prec(b) <= 4)
            }
            Formula::And(fs) | Formula::Or(fs) => {
                let (sep, level) = if matches!(self, Formula::And(_)) { (" & ", 3) } else { (" | ", 2) };
                for (i, f) in fs.iter().enumerate() {
                    if i > 0 {
                        write!(out, "{sep}")?;
                    }
                    write_paren(out, f, prec(f) <= level)?;
                }
                Ok(())
            }
            Formula::Implies(a, b) => {
                write_paren(out, a, prec(a) <= 1)?;
                write!(out, " -> ")?;
                write_paren(out, b, prec(b) < 1)
            }
        }
    }
}

/// Canonical concrete syntax for `f`.
pub fn pretty_print(f: &Formula) -> String {
    f.to_string()
}
