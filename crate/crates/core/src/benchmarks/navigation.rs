//! Battery-powered robot visiting destinations and recharging.
//!
//! State `(x, y, xd, yd, xc, yc, tb, ts)`: robot, destination, charging
//! station, battery time left and stay time left at the station. Jumps:
//! arriving draws the next destination, reaching the station refills the
//! battery, and leaving the station restores the stay time.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{blend, k, Benchmark, BenchmarkSpec, Dist, Goal, GoalTarget, Model, Sampler, Scenario};
use crate::diff::{indicator, Real};
use crate::dynamics::{HybridModel, HybridSystem};
use crate::error::{Error, Result};
use crate::num::Scalar;

const X: usize = 0;
const Y: usize = 1;
const XD: usize = 2;
const YD: usize = 3;
const XC: usize = 4;
const YC: usize = 5;
const TB: usize = 6;
const TS: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavigationConfig {
    pub dt: f64,
    pub horizon: usize,
    pub v_max: f64,
    /// Side of the square arena `[0, size]^2`.
    pub size: f64,
    /// Axis-aligned boxes `[x_lo, x_hi, y_lo, y_hi]`.
    pub obstacles: Vec<[f64; 4]>,
    pub destinations: Vec<[f64; 2]>,
    pub stations: Vec<[f64; 2]>,
    /// Radius of `Near`.
    pub r: f64,
    /// Full battery time.
    pub battery: f64,
    /// Required stay time at the station.
    pub stay: f64,
    pub w: f64,
}

impl Default for NavigationConfig {
    fn default() -> Self {
        NavigationConfig {
            dt: 0.2,
            horizon: 30,
            v_max: 1.5,
            size: 5.0,
            obstacles: vec![[2.0, 3.0, 2.0, 3.0]],
            destinations: vec![
                [1.0, 1.0],
                [4.0, 1.0],
                [1.0, 4.0],
                [4.0, 4.0],
                [2.5, 1.0],
                [2.5, 4.0],
                [1.0, 2.5],
                [4.0, 2.5],
            ],
            stations: vec![[0.3, 0.3], [4.7, 0.3], [0.3, 4.7], [4.7, 4.7], [2.5, 4.7]],
            r: 0.5,
            battery: 10.0,
            stay: 1.0,
            w: 100.0,
        }
    }
}

impl NavigationConfig {
    fn validate(&self) -> Result<()> {
        if self.destinations.is_empty() || self.stations.is_empty() {
            return Err(Error::Config("navigation needs destinations and stations".into()));
        }
        if self.obstacles.iter().any(|b| !(b[0] < b[1] && b[2] < b[3])) {
            return Err(Error::Config("obstacle boxes need lo < hi".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Navigation<T> {
    schema: Vec<String>,
    cfg: NavigationConfig,
    destinations: Vec<Vec<T>>,
    _t: std::marker::PhantomData<T>,
}

impl<T: Scalar> Navigation<T> {
    pub fn new(cfg: NavigationConfig) -> Self {
        let schema = ["x", "y", "xd", "yd", "xc", "yc", "tb", "ts"].map(String::from).to_vec();
        let destinations = cfg.destinations.iter().map(|p| vec![T::of(p[0]), T::of(p[1])]).collect();
        Navigation { schema, cfg, destinations, _t: std::marker::PhantomData }
    }

    fn dist2<V: Real<T>>(x: &[V], i: usize, j: usize) -> V {
        (x[X].clone() - x[i].clone()).square() + (x[Y].clone() - x[j].clone()).square()
    }

    /// `r^2 - |p - station|^2`, positive near the station.
    fn near_station<V: Real<T>>(&self, x: &[V]) -> V {
        -Self::dist2(x, XC, YC) + T::of(self.cfg.r * self.cfg.r)
    }

    /// Arrival, charge and leave triggers, each `>= 0` when active.
    fn triggers<V: Real<T>>(&self, x: &[V]) -> [V; 3] {
        let c = &self.cfg;
        let near = self.near_station(x);
        let half_dt = T::of(c.dt / 2.0);
        [
            -Self::dist2(x, XD, YD) + T::of(c.r * c.r),
            V::min_of(&[near.clone(), -x[TB].clone() + T::of(c.battery) - half_dt]),
            V::min_of(&[-near, -x[TS].clone() + T::of(c.stay) - half_dt]),
        ]
    }
}

impl<T: Scalar> HybridModel<T> for Navigation<T> {
    fn schema(&self) -> &[String] {
        &self.schema
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn flow<V: Real<T>>(&self, ctx: &V::Ctx, x: &[V], u: &[V], sharp: Option<T>) -> Vec<V> {
        let at_station = indicator(&self.near_station(x), sharp);
        vec![
            u[0].clone() * u[1].cos(),
            u[0].clone() * u[1].sin(),
            k(ctx, 0.0),
            k(ctx, 0.0),
            k(ctx, 0.0),
            k(ctx, 0.0),
            k(ctx, -1.0),
            -at_station,
        ]
    }

    fn membership<V: Real<T>>(&self, _ctx: &V::Ctx, x: &[V], _sharp: Option<T>) -> V {
        let neg: Vec<V> = self.triggers(x).into_iter().map(|g| -g).collect();
        V::min_of(&neg)
    }

    fn jump<V: Real<T>>(&self, ctx: &V::Ctx, x: &[V], rng: &mut ChaCha8Rng, sharp: Option<T>) -> Vec<V> {
        let [arrive, charge, leave] = self.triggers(x).map(|g| indicator(&g, sharp));
        let next = V::gather(ctx, rng, &self.destinations);
        let mut y = x.to_vec();
        y[XD] = blend(&x[XD], next[0].clone(), &arrive);
        y[YD] = blend(&x[YD], next[1].clone(), &arrive);
        y[TB] = blend(&x[TB], k(ctx, self.cfg.battery), &charge);
        y[TS] = blend(&x[TS], k(ctx, self.cfg.stay), &leave);
        y
    }
}

/// Free rectangles of the arena around the obstacles' bounding box.
fn strips(cfg: &NavigationConfig) -> Vec<(&'static str, [f64; 4])> {
    let m = 0.2;
    let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (cfg.size, 0.0f64, cfg.size, 0.0f64);
    for b in &cfg.obstacles {
        lo_x = lo_x.min(b[0]);
        hi_x = hi_x.max(b[1]);
        lo_y = lo_y.min(b[2]);
        hi_y = hi_y.max(b[3]);
    }
    if cfg.obstacles.is_empty() {
        return vec![("open", [0.0, cfg.size, 0.0, cfg.size])];
    }
    [
        ("bottom", [0.0, cfg.size, 0.0, lo_y - m]),
        ("top", [0.0, cfg.size, hi_y + m, cfg.size]),
        ("left", [0.0, lo_x - m, 0.0, cfg.size]),
        ("right", [hi_x + m, cfg.size, 0.0, cfg.size]),
    ]
    .into_iter()
    .filter(|(_, r)| r[0] < r[1] && r[2] < r[3])
    .collect()
}

pub(super) fn build<T: Scalar>(cfg: &NavigationConfig, seed: u64) -> Result<Benchmark<T>> {
    cfg.validate()?;
    let t = cfg.horizon;
    let r2 = cfg.r * cfg.r;
    let stay_steps = ((cfg.stay / cfg.dt).round() as usize).min(t);
    let outside: Vec<String> = cfg
        .obstacles
        .iter()
        .map(|b| format!("((x - {}) * (x - {}) > 0 | (y - {}) * (y - {}) > 0)", b[0], b[1], b[2], b[3]))
        .collect();
    let near_d = format!("{r2} - (x - xd)^2 - (y - yd)^2 > 0");
    let near_c = format!("{r2} - (x - xc)^2 - (y - yc)^2 > 0");
    let mut clauses = Vec::new();
    if !outside.is_empty() {
        clauses.push(format!("G[0,{t}] ({})", outside.join(" & ")));
    }
    clauses.push(format!("(tb > 1 -> F[0,{t}] ({near_d}))"));
    clauses.push(format!("(tb < 1 -> F[0,{t}] ({near_c}))"));
    clauses.push(format!("G[0,{t}] (tb > 0)"));
    clauses.push(format!("(({near_c}) -> G[0,{stay_steps}] (({near_c}) | ts < 0))"));
    let phi = clauses.join(" & ");
    let mut safe: Vec<String> = clauses.iter().filter(|c| c.starts_with("G[")).cloned().collect();
    if safe.is_empty() {
        safe.push("true".into());
    }
    let safe = safe.join(" & ");

    let system = HybridSystem {
        model: Model::Navigation(Navigation::new(cfg.clone())),
        dt: T::of(cfg.dt),
        horizon: t,
        u_min: vec![T::zero(), T::of(-std::f64::consts::PI)],
        u_max: vec![T::of(cfg.v_max), T::of(std::f64::consts::PI)],
        w: T::of(cfg.w),
        reset_seed: seed,
    };

    let of = T::of;
    let u = |a: f64, b: f64| Dist::Uniform(of(a), of(b));
    let dests: Vec<Vec<T>> = cfg.destinations.iter().map(|p| vec![of(p[0]), of(p[1])]).collect();
    let stations: Vec<Vec<T>> = cfg.stations.iter().map(|p| vec![of(p[0]), of(p[1])]).collect();
    let c = |v: f64| Dist::Const(of(v));
    let mut scenarios = Vec::new();
    for (name, r) in strips(cfg) {
        for (level, weight, tb) in [("high", 3.0, (cfg.battery * 0.6, cfg.battery)), ("mid", 1.0, (1.5, cfg.battery * 0.6))] {
            let dims = vec![u(r[0], r[1]), u(r[2], r[3]), c(0.0), c(0.0), c(0.0), c(0.0), u(tb.0, tb.1), c(cfg.stay)];
            scenarios.push(
                Scenario::new(&format!("{level}-{name}"), weight, dims)
                    .with_table(vec![XD, YD], dests.clone())
                    .with_table(vec![XC, YC], stations.clone()),
            );
        }
    }
    let reach = cfg.r;
    for (i, s) in cfg.stations.iter().enumerate() {
        let dims = vec![
            u((s[0] - reach).max(0.0), (s[0] + reach).min(cfg.size)),
            u((s[1] - reach).max(0.0), (s[1] + reach).min(cfg.size)),
            c(0.0),
            c(0.0),
            c(s[0]),
            c(s[1]),
            u(0.6, 1.0),
            c(cfg.stay),
        ];
        scenarios.push(Scenario::new(&format!("low-{i}"), 1.0, dims).with_table(vec![XD, YD], dests.clone()));
    }
    let goal = Goal { terms: vec![(X, GoalTarget::Channel(XD)), (Y, GoalTarget::Channel(YD))] };
    BenchmarkSpec::build("navigation", super::describe("navigation")?, system, phi, safe, Sampler { scenarios }, goal)
}
