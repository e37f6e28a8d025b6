//! The five benchmark environments and their registry.
//!
//! Each benchmark bundles a hybrid system, its specification `Φ` (and the
//! smooth training form of it), the safety part `φ_safe`, an initial-state
//! sampler and an optional goal for the performance loss. Formulas are built
//! as text and parsed, so [`BenchmarkSpec::phi_text`] is always re-parseable.

mod navigation;
mod reach_avoid;
mod ship;
mod timer;
mod traffic;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::diff::Real;
use crate::dynamics::{HybridModel, HybridSystem};
use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::stl::{parse_formula, smooth_friendly, Formula};

pub use navigation::{Navigation, NavigationConfig};
pub use reach_avoid::{ReachAvoid, ReachAvoidConfig};
pub use ship::{ShipSafe, ShipSafeConfig, ShipTrack, ShipTrackConfig};
pub use timer::{append_clock, timer_augment};
pub use traffic::{Traffic, TrafficConfig};

/// Registered benchmark ids.
pub const IDS: [&str; 5] = ["traffic", "reach-avoid", "ship-safe", "ship-track", "navigation"];

/// One coordinate of an initial-state region.
#[derive(Debug, Clone, PartialEq)]
pub enum Dist<T> {
    Const(T),
    /// Uniform on `[lo, hi)`.
    Uniform(T, T),
    Choice(Vec<T>),
}

/// A weighted box (with discrete coordinates) of initial states. `tables`
/// assign several coordinates jointly from one randomly chosen row.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub name: String,
    pub weight: f64,
    pub dims: Vec<Dist<T>>,
    pub tables: Vec<(Vec<usize>, Vec<Vec<T>>)>,
}

impl<T: Scalar> Scenario<T> {
    pub fn new(name: &str, weight: f64, dims: Vec<Dist<T>>) -> Self {
        Scenario { name: name.into(), weight, dims, tables: Vec::new() }
    }

    pub fn with_table(mut self, dims: Vec<usize>, rows: Vec<Vec<T>>) -> Self {
        self.tables.push((dims, rows));
        self
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let mut x: Vec<T> = self.dims.iter().map(|d| draw(d, rng)).collect();
        for (dims, rows) in &self.tables {
            let row = &rows[rng.random_range(0..rows.len())];
            for (&d, &v) in dims.iter().zip(row) {
                x[d] = v;
            }
        }
        x
    }

    fn contains(&self, x: &[T]) -> bool {
        let in_dims = self.dims.iter().enumerate().all(|(i, d)| {
            if self.tables.iter().any(|(dims, _)| dims.contains(&i)) {
                return true;
            }
            match d {
                Dist::Const(c) => x[i] == *c,
                Dist::Uniform(lo, hi) => x[i] >= *lo && x[i] <= *hi,
                Dist::Choice(cs) => cs.contains(&x[i]),
            }
        });
        in_dims && self.tables.iter().all(|(dims, rows)| rows.iter().any(|r| dims.iter().zip(r).all(|(&d, v)| x[d] == *v)))
    }
}

fn draw<T: Scalar, R: Rng + ?Sized>(d: &Dist<T>, rng: &mut R) -> T {
    match d {
        Dist::Const(c) => *c,
        Dist::Uniform(lo, hi) => *lo + (*hi - *lo) * T::of(rng.random::<f64>()),
        Dist::Choice(cs) => cs[rng.random_range(0..cs.len())],
    }
}

/// Initial-state distribution `X_0`: a weighted mixture of scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampler<T> {
    pub scenarios: Vec<Scenario<T>>,
}

impl<T: Scalar> Sampler<T> {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<T>> {
        let total: f64 = self.scenarios.iter().map(|s| s.weight).sum();
        if self.scenarios.is_empty() || !(total > 0.0) {
            return Err(Error::Config("initial-state set is empty".into()));
        }
        let mut pick = rng.random::<f64>() * total;
        for s in &self.scenarios {
            if pick < s.weight {
                return Ok(s.sample(rng));
            }
            pick -= s.weight;
        }
        Ok(self.scenarios.last().unwrap().sample(rng))
    }

    /// `n` i.i.d. samples, deterministic per seed.
    pub fn sample_n(&self, n: usize, seed: u64) -> Result<Vec<Vec<T>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample(&mut rng)).collect()
    }

    /// Whether `x` lies in some scenario's region.
    pub fn contains(&self, x: &[T]) -> bool {
        self.scenarios.iter().any(|s| s.contains(x))
    }

    /// Per-coordinate `(min, max)` over all scenarios.
    pub fn hull(&self) -> Vec<(T, T)> {
        let n = self.scenarios.first().map_or(0, |s| s.dims.len());
        let mut out = vec![(T::infinity(), T::neg_infinity()); n];
        let mut widen = |i: usize, v: T| {
            out[i].0 = out[i].0.min(v);
            out[i].1 = out[i].1.max(v);
        };
        for s in &self.scenarios {
            for (i, d) in s.dims.iter().enumerate() {
                match d {
                    Dist::Const(c) => widen(i, *c),
                    Dist::Uniform(lo, hi) => {
                        widen(i, *lo);
                        widen(i, *hi);
                    }
                    Dist::Choice(cs) => cs.iter().for_each(|&c| widen(i, c)),
                }
            }
            for (dims, rows) in &s.tables {
                for r in rows {
                    for (&d, &v) in dims.iter().zip(r) {
                        widen(d, v);
                    }
                }
            }
        }
        out
    }

    /// Channel-wise center and half-width of the hull (half-width at least
    /// `min_scale`), used to normalize policy inputs.
    pub fn normalization(&self, min_scale: T) -> (Vec<T>, Vec<T>) {
        let two = T::one() + T::one();
        self.hull().into_iter().map(|(lo, hi)| ((lo + hi) / two, ((hi - lo) / two).max(min_scale))).unzip()
    }
}

/// Target of one goal term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GoalTarget {
    Const(f64),
    Channel(usize),
}

/// Goal for the performance loss: Euclidean distance between the listed
/// channels and their targets. Empty means no performance term.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Goal {
    pub terms: Vec<(usize, GoalTarget)>,
}

impl Goal {
    pub fn none() -> Self {
        Goal::default()
    }

    pub fn is_none(&self) -> bool {
        self.terms.is_empty()
    }
}

/// A complete benchmark: system, specifications, sampler and goal.
#[derive(Debug, Clone)]
pub struct BenchmarkSpec<T, M> {
    pub id: String,
    pub description: String,
    pub system: HybridSystem<T, M>,
    pub phi_text: String,
    pub phi: Formula,
    /// Smooth-friendly rewrite of `phi` used for training.
    pub phi_train: Formula,
    pub safe_text: String,
    pub phi_safe: Formula,
    pub sampler: Sampler<T>,
    pub goal: Goal,
}

impl<T: Scalar, M: HybridModel<T>> BenchmarkSpec<T, M> {
    /// Parses both formulas against the system schema and checks horizons.
    pub fn build(
        id: &str,
        description: &str,
        system: HybridSystem<T, M>,
        phi_text: String,
        safe_text: String,
        sampler: Sampler<T>,
        goal: Goal,
    ) -> Result<Self> {
        system.validate()?;
        let schema = system.schema().to_vec();
        let phi = parse_formula(&phi_text, &schema)?;
        let phi_safe = parse_formula(&safe_text, &schema)?;
        for f in [&phi, &phi_safe] {
            if f.horizon() > system.horizon {
                return Err(Error::Config(format!(
                    "{id}: formula horizon {} exceeds T = {}",
                    f.horizon(),
                    system.horizon
                )));
            }
        }
        Ok(BenchmarkSpec {
            id: id.into(),
            description: description.into(),
            phi_train: smooth_friendly(&phi),
            system,
            phi_text,
            phi,
            safe_text,
            phi_safe,
            sampler,
            goal,
        })
    }

    pub fn schema(&self) -> &[String] {
        self.system.schema()
    }
}

/// Registered environments behind one concrete type.
#[derive(Debug, Clone)]
pub enum Model<T> {
    Traffic(Traffic<T>),
    ReachAvoid(ReachAvoid<T>),
    ShipSafe(ShipSafe<T>),
    ShipTrack(ShipTrack<T>),
    Navigation(Navigation<T>),
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            Model::Traffic($m) => $e,
            Model::ReachAvoid($m) => $e,
            Model::ShipSafe($m) => $e,
            Model::ShipTrack($m) => $e,
            Model::Navigation($m) => $e,
        }
    };
}

impl<T: Scalar> HybridModel<T> for Model<T> {
    fn schema(&self) -> &[String] {
        dispatch!(self, m => m.schema())
    }

    fn control_dim(&self) -> usize {
        dispatch!(self, m => m.control_dim())
    }

    fn flow<V: Real<T>>(&self, ctx: &V::Ctx, x: &[V], u: &[V], sharp: Option<T>) -> Vec<V> {
        dispatch!(self, m => m.flow(ctx, x, u, sharp))
    }

    fn membership<V: Real<T>>(&self, ctx: &V::Ctx, x: &[V], sharp: Option<T>) -> V {
        dispatch!(self, m => m.membership(ctx, x, sharp))
    }

    fn jump<V: Real<T>>(&self, ctx: &V::Ctx, x: &[V], rng: &mut ChaCha8Rng, sharp: Option<T>) -> Vec<V> {
        dispatch!(self, m => m.jump(ctx, x, rng, sharp))
    }
}

/// A registered benchmark.
pub type Benchmark<T> = BenchmarkSpec<T, Model<T>>;

/// Benchmark parameters, one section per environment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfigs {
    pub traffic: TrafficConfig,
    #[serde(rename = "reach-avoid")]
    pub reach_avoid: ReachAvoidConfig,
    #[serde(rename = "ship-safe")]
    pub ship_safe: ShipSafeConfig,
    #[serde(rename = "ship-track")]
    pub ship_track: ShipTrackConfig,
    pub navigation: NavigationConfig,
}

/// Registered ids.
pub fn list() -> Vec<&'static str> {
    IDS.to_vec()
}

/// One-line description of a benchmark.
pub fn describe(id: &str) -> Result<&'static str> {
    Ok(match id {
        "traffic" => "ego car through stop signs, traffic lights and yield commands behind a leading car",
        "reach-avoid" => "agent climbing a maze, reaching goals and avoiding walls on the next two levels",
        "ship-safe" => "ship staying in a river while avoiding the two nearest obstacles",
        "ship-track" => "ship avoiding obstacles while bounding its time away from the centerline",
        "navigation" => "battery-powered robot visiting destinations and recharging at a station",
        other => return Err(Error::UnknownBenchmark(other.into())),
    })
}

/// Builds benchmark `id` with default parameters. `seed` only affects the
/// reset generator used in predicted rollouts.
pub fn instantiate<T: Scalar>(id: &str, seed: u64) -> Result<Benchmark<T>> {
    instantiate_with(id, &BenchmarkConfigs::default(), seed)
}

/// Builds benchmark `id` from explicit parameters.
pub fn instantiate_with<T: Scalar>(id: &str, cfg: &BenchmarkConfigs, seed: u64) -> Result<Benchmark<T>> {
    match id {
        "traffic" => traffic::build(&cfg.traffic, seed),
        "reach-avoid" => reach_avoid::build(&cfg.reach_avoid, seed),
        "ship-safe" => ship::build_safe(&cfg.ship_safe, seed),
        "ship-track" => ship::build_track(&cfg.ship_track, seed),
        "navigation" => navigation::build(&cfg.navigation, seed),
        other => Err(Error::UnknownBenchmark(other.into())),
    }
}

/// Ship-track with the shifted first obstacle and enlarged later ones.
pub fn ship_track_ood<T: Scalar>(cfg: &ShipTrackConfig, seed: u64) -> Result<Benchmark<T>> {
    ship::build_track(&ShipTrackConfig { ood: true, ..cfg.clone() }, seed)
}

/// Parses a TOML table into a benchmark config section.
pub fn config_from_toml<C: DeserializeOwned>(text: &str) -> Result<C> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

impl<T: Scalar, M> fmt::Display for BenchmarkSpec<T, M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}: {}", self.id, self.description)?;
        writeln!(f, "phi:      {}", self.phi_text)?;
        write!(f, "phi_safe: {}", self.safe_text)
    }
}

/// `V` constant from an `f64`.
pub(crate) fn k<T: Scalar, V: Real<T>>(ctx: &V::Ctx, v: f64) -> V {
    V::constant(ctx, T::of(v))
}

/// `old (1 - ind) + new ind`; exact for a hard 0/1 indicator.
pub(crate) fn blend<T: Scalar, V: Real<T>>(old: &V, new: V, ind: &V) -> V {
    old.clone() * (-ind.clone() + T::one()) + new * ind.clone()
}
