//! Signal temporal logic: syntax, parsing, printing and semantics.

mod compile;
mod formula;
mod parser;
mod printer;
mod semantics;
mod trace;

pub use compile::smooth_friendly;
pub use formula::{Expr, Formula, Interval};
pub use parser::parse_formula;
pub use printer::pretty_print;
pub use semantics::{
    check_horizon, eval_boolean, eval_expr, robustness, robustness_with, smooth_robustness, MinMax,
};
pub use trace::Trace;
