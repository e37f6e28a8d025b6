//! Random STL instances and an independent Boolean oracle that expands
//! temporal operators into explicit conjunctions and disjunctions.

#![allow(dead_code)]

pub mod models;
pub mod prims;

use rand::Rng;
use stlnpc::stl::{Expr, Formula, Interval, Trace};

pub const SCHEMA: [&str; 2] = ["x", "y"];

pub fn schema() -> Vec<String> {
    SCHEMA.iter().map(|s| s.to_string()).collect()
}

fn chan(i: usize) -> Expr {
    Expr::Channel { name: SCHEMA[i].to_string(), index: i }
}

/// `a x + b y + c` or, occasionally, a nonlinear atom.
pub fn random_expr<R: Rng>(rng: &mut R) -> Expr {
    let c = Expr::Const(rng.random_range(-1.0..1.0));
    match rng.random_range(0..6) {
        0 => Expr::Sub(Box::new(Expr::Const(0.5)), Box::new(Expr::Abs(Box::new(chan(rng.random_range(0..2)))))),
        1 => Expr::Sub(Box::new(Expr::Square(Box::new(chan(0)))), Box::new(Expr::Mul(Box::new(chan(1)), Box::new(c)))),
        _ => {
            let ax = Expr::Mul(Box::new(Expr::Const(rng.random_range(-2.0..2.0))), Box::new(chan(0)));
            let by = Expr::Mul(Box::new(Expr::Const(rng.random_range(-2.0..2.0))), Box::new(chan(1)));
            Expr::Add(Box::new(Expr::Add(Box::new(ax), Box::new(by))), Box::new(c))
        }
    }
}

/// Random formula of AST depth at most `depth` whose horizon is at most
/// `budget`.
pub fn random_formula<R: Rng>(rng: &mut R, depth: usize, budget: usize) -> Formula {
    if depth <= 1 {
        return if rng.random_bool(0.05) { Formula::True } else { Formula::Pred(random_expr(rng)) };
    }
    let interval = |rng: &mut R| {
        let hi = rng.random_range(0..=budget);
        let lo = rng.random_range(0..=hi);
        Interval::new(lo, hi).unwrap()
    };
    match rng.random_range(0..8) {
        0 => Formula::Pred(random_expr(rng)),
        1 => Formula::not(random_formula(rng, depth - 1, budget)),
        2 => {
            let n = rng.random_range(2..=3);
            Formula::And((0..n).map(|_| random_formula(rng, depth - 1, budget)).collect())
        }
        3 => {
            let n = rng.random_range(2..=3);
            Formula::Or((0..n).map(|_| random_formula(rng, depth - 1, budget)).collect())
        }
        4 => Formula::implies(random_formula(rng, depth - 1, budget), random_formula(rng, depth - 1, budget)),
        5 => {
            let i = interval(rng);
            Formula::always(i, random_formula(rng, depth - 1, budget - i.hi()))
        }
        6 => {
            let i = interval(rng);
            Formula::eventually(i, random_formula(rng, depth - 1, budget - i.hi()))
        }
        _ => {
            let i = interval(rng);
            let rest = budget - i.hi();
            Formula::until(i, random_formula(rng, depth - 1, rest), random_formula(rng, depth - 1, rest))
        }
    }
}

pub fn random_trace<R: Rng>(rng: &mut R, len: usize, scale: f64) -> Trace<f64> {
    let values = (0..2).map(|_| (0..len).map(|_| rng.random_range(-scale..scale)).collect()).collect();
    Trace::new(schema(), values, 1.0).unwrap()
}

/// A formula, a trace long enough for it and the evaluation step.
pub struct Instance {
    pub formula: Formula,
    pub trace: Trace<f64>,
    pub t: usize,
}

/// Trace of at most 8 steps, formula of depth at most 4.
pub fn random_instance<R: Rng>(rng: &mut R, scale: f64) -> Instance {
    let len = rng.random_range(1..=8);
    let t = rng.random_range(0..len);
    let depth = rng.random_range(1..=4);
    let formula = random_formula(rng, depth, len - 1 - t);
    let trace = random_trace(rng, len, scale);
    Instance { formula, trace, t }
}

pub fn eval_expr(e: &Expr, tr: &Trace<f64>, t: usize) -> f64 {
    match e {
        Expr::Const(c) => *c,
        Expr::Channel { index, .. } => *tr.at(*index, t),
        Expr::Neg(a) => -eval_expr(a, tr, t),
        Expr::Add(a, b) => eval_expr(a, tr, t) + eval_expr(b, tr, t),
        Expr::Sub(a, b) => eval_expr(a, tr, t) - eval_expr(b, tr, t),
        Expr::Mul(a, b) => eval_expr(a, tr, t) * eval_expr(b, tr, t),
        Expr::Square(a) => eval_expr(a, tr, t).powi(2),
        Expr::Abs(a) => eval_expr(a, tr, t).abs(),
        Expr::Norm2(es) => es.iter().map(|e| eval_expr(e, tr, t).powi(2)).sum::<f64>().sqrt(),
        Expr::Mod(a, p) => eval_expr(a, tr, t).rem_euclid(*p),
    }
}

/// Propositional unrolling of a formula at a fixed step.
pub enum Prop {
    Atom(bool),
    Not(Box<Prop>),
    All(Vec<Prop>),
    Any(Vec<Prop>),
}

pub fn expand(f: &Formula, tr: &Trace<f64>, t: usize) -> Prop {
    match f {
        Formula::True => Prop::Atom(true),
        Formula::Pred(e) => Prop::Atom(eval_expr(e, tr, t) > 0.0),
        Formula::Not(g) => Prop::Not(Box::new(expand(g, tr, t))),
        Formula::And(gs) => Prop::All(gs.iter().map(|g| expand(g, tr, t)).collect()),
        Formula::Or(gs) => Prop::Any(gs.iter().map(|g| expand(g, tr, t)).collect()),
        Formula::Implies(a, b) => Prop::Any(vec![Prop::Not(Box::new(expand(a, tr, t))), expand(b, tr, t)]),
        Formula::Always(i, g) => Prop::All((t + i.lo()..=t + i.hi()).map(|s| expand(g, tr, s)).collect()),
        Formula::Eventually(i, g) => Prop::Any((t + i.lo()..=t + i.hi()).map(|s| expand(g, tr, s)).collect()),
        Formula::Until(i, a, b) => Prop::Any(
            (t + i.lo()..=t + i.hi())
                .map(|s| {
                    let mut conj = vec![expand(b, tr, s)];
                    conj.extend((t..=s).map(|r| expand(a, tr, r)));
                    Prop::All(conj)
                })
                .collect(),
        ),
    }
}

pub fn truth(p: &Prop) -> bool {
    match p {
        Prop::Atom(b) => *b,
        Prop::Not(q) => !truth(q),
        Prop::All(qs) => qs.iter().all(truth),
        Prop::Any(qs) => qs.iter().any(truth),
    }
}

pub fn oracle(f: &Formula, tr: &Trace<f64>, t: usize) -> bool {
    truth(&expand(f, tr, t))
}
