//! Neural predictive control under signal temporal logic specifications.

pub mod benchmarks;
pub mod config;
pub mod deploy;
pub mod diff;
pub mod dynamics;
pub mod error;
pub mod num;
pub mod policy;
pub mod stl;
pub mod trainer;

pub use error::{Error, Result};
pub use num::Scalar;

pub type Tape64 = diff::Tape<f64>;
pub type Var64 = diff::Var<f64>;
pub type Trace64 = stl::Trace<f64>;
pub type PolicyNet64 = policy::PolicyNet<f64>;
pub type Benchmark64 = benchmarks::Benchmark<f64>;

pub type Tape32 = diff::Tape<f32>;
pub type Var32 = diff::Var<f32>;
pub type Trace32 = stl::Trace<f32>;
pub type PolicyNet32 = policy::PolicyNet<f32>;
pub type Benchmark32 = benchmarks::Benchmark<f32>;
