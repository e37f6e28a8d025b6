//! Ship in a river: obstacle avoidance, and avoidance with a bounded time
//! away from the centerline.
//!
//! Obstacle coordinates live in a frame that moves forward whenever the
//! ship passes its closest obstacle: the jump shifts `x` and all obstacle
//! `x` coordinates back by the passed obstacle's position and draws a new
//! obstacle ahead.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{blend, k, Benchmark, BenchmarkSpec, Dist, Goal, GoalTarget, Model, Sampler, Scenario};
use crate::diff::{indicator, Real};
use crate::dynamics::{HybridModel, HybridSystem};
use crate::error::Result;
use crate::num::Scalar;

const X: usize = 0;
const Y: usize = 1;
const PSI: usize = 2;
const U: usize = 3;
const VS: usize = 4;
const R: usize = 5;
const X1: usize = 6;
const Y1: usize = 7;
const R1: usize = 8;
const X2: usize = 9;
const Y2: usize = 10;
const R2: usize = 11;
const TAU: usize = 9;

/// Pose part of the flow: `(x, y, psi, u, v, r)` under thrust and rudder.
fn pose_flow<T: Scalar, V: Real<T>>(x: &[V], u: &[V]) -> Vec<V> {
    let (c, s) = (x[PSI].cos(), x[PSI].sin());
    vec![
        x[U].clone() * c.clone() - x[VS].clone() * s.clone(),
        x[U].clone() * s + x[VS].clone() * c,
        x[R].clone(),
        u[0].clone(),
        u[1].clone() * T::of(0.01),
        u[1].clone() * T::of(0.5),
    ]
}

fn system<T: Scalar>(model: Model<T>, dt: f64, horizon: usize, thrust: f64, rudder: f64, w: f64, seed: u64) -> HybridSystem<T, Model<T>> {
    HybridSystem {
        model,
        dt: T::of(dt),
        horizon,
        u_min: vec![T::of(-thrust), T::of(-rudder)],
        u_max: vec![T::of(thrust), T::of(rudder)],
        w: T::of(w),
        reset_seed: seed,
    }
}

fn u<T: Scalar>(r: (f64, f64)) -> Dist<T> {
    Dist::Uniform(T::of(r.0), T::of(r.1))
}

fn c<T: Scalar>(v: f64) -> Dist<T> {
    Dist::Const(T::of(v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShipSafeConfig {
    pub dt: f64,
    pub horizon: usize,
    pub river_width: f64,
    pub thrust_max: f64,
    pub rudder_max: f64,
    /// Distance beyond an obstacle's far edge at which it counts as passed.
    pub pass_margin: f64,
    /// Spacing between consecutive obstacles.
    pub gap: (f64, f64),
    pub obstacle_y: (f64, f64),
    pub radius: (f64, f64),
    /// Cruise speed targeted by the performance loss.
    pub cruise: f64,
    pub w: f64,
}

impl Default for ShipSafeConfig {
    fn default() -> Self {
        ShipSafeConfig {
            dt: 0.2,
            horizon: 20,
            river_width: 10.0,
            thrust_max: 1.0,
            rudder_max: 3.0,
            pass_margin: 0.2,
            gap: (3.0, 5.0),
            obstacle_y: (-3.0, 3.0),
            radius: (0.4, 0.8),
            cruise: 1.0,
            w: 100.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShipSafe<T> {
    schema: Vec<String>,
    cfg: ShipSafeConfig,
    _t: std::marker::PhantomData<T>,
}

impl<T: Scalar> ShipSafe<T> {
    pub fn new(cfg: ShipSafeConfig) -> Self {
        let schema = ["x", "y", "psi", "u", "v", "r", "x1", "y1", "r1", "x2", "y2", "r2"].map(String::from).to_vec();
        ShipSafe { schema, cfg, _t: std::marker::PhantomData }
    }

    fn passed<V: Real<T>>(&self, x: &[V]) -> V {
        x[X].clone() - x[X1].clone() - x[R1].clone() - T::of(self.cfg.pass_margin)
    }
}

impl<T: Scalar> HybridModel<T> for ShipSafe<T> {
    fn schema(&self) -> &[String] {
        &self.schema
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn flow<V: Real<T>>(&self, ctx: &V::Ctx, x: &[V], u: &[V], _sharp: Option<T>) -> Vec<V> {
        let mut f = pose_flow(x, u);
        f.extend((0..6).map(|_| k(ctx, 0.0)));
        f
    }

    fn membership<V: Real<T>>(&self, _ctx: &V::Ctx, x: &[V], _sharp: Option<T>) -> V {
        -self.passed(x)
    }

    fn jump<V: Real<T>>(&self, ctx: &V::Ctx, x: &[V], rng: &mut ChaCha8Rng, sharp: Option<T>) -> Vec<V> {
        let c = &self.cfg;
        let ind = indicator(&self.passed(x), sharp);
        let gap = V::uniform(ctx, rng, T::of(c.gap.0), T::of(c.gap.1));
        let oy = V::uniform(ctx, rng, T::of(c.obstacle_y.0), T::of(c.obstacle_y.1));
        let rad = V::uniform(ctx, rng, T::of(c.radius.0), T::of(c.radius.1));
        let shift = x[X1].clone();
        let mut y = x.to_vec();
        y[X] = blend(&x[X], x[X].clone() - shift.clone(), &ind);
        y[X1] = blend(&x[X1], x[X2].clone() - shift.clone(), &ind);
        y[Y1] = blend(&x[Y1], x[Y2].clone(), &ind);
        y[R1] = blend(&x[R1], x[R2].clone(), &ind);
        y[X2] = blend(&x[X2], x[X2].clone() - shift + gap, &ind);
        y[Y2] = blend(&x[Y2], oy, &ind);
        y[R2] = blend(&x[R2], rad, &ind);
        y
    }
}

pub(super) fn build_safe<T: Scalar>(cfg: &ShipSafeConfig, seed: u64) -> Result<Benchmark<T>> {
    let h = cfg.horizon;
    let half = cfg.river_width / 2.0;
    let phi = format!(
        "G[0,{h}] (abs(y) < {half}) & G[0,{h}] ((x - x1)^2 + (y - y1)^2 > r1^2) & G[0,{h}] ((x - x2)^2 + (y - y2)^2 > r2^2)"
    );
    let sys = system(Model::ShipSafe(ShipSafe::new(cfg.clone())), cfg.dt, h, cfg.thrust_max, cfg.rudder_max, cfg.w, seed);
    let first = (cfg.radius.1 + 1.2, cfg.radius.1 + 1.2 + cfg.gap.1 - cfg.gap.0);
    let second = (first.1 + cfg.radius.1 * 2.0 + 0.5, first.1 + cfg.radius.1 * 2.0 + 0.5 + cfg.gap.1 - cfg.gap.0);
    let sampler = Sampler {
        scenarios: vec![Scenario::new(
            "river",
            1.0,
            vec![
                c(0.0),
                u((-2.0, 2.0)),
                u((-0.3, 0.3)),
                u((0.5, 1.5)),
                c(0.0),
                c(0.0),
                u(first),
                u(cfg.obstacle_y),
                u(cfg.radius),
                u(second),
                u(cfg.obstacle_y),
                u(cfg.radius),
            ],
        )],
    };
    let goal = Goal { terms: vec![(U, GoalTarget::Const(cfg.cruise))] };
    BenchmarkSpec::build("ship-safe", super::describe("ship-safe")?, sys, phi.clone(), phi, sampler, goal)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShipTrackConfig {
    pub dt: f64,
    pub horizon: usize,
    /// Until bound `a`; the inner Always spans `horizon - a` steps.
    pub until_steps: usize,
    pub river_width: f64,
    /// Deviation threshold from the centerline.
    pub gamma: f64,
    /// Time the ship may spend beyond `gamma` per obstacle.
    pub budget: f64,
    pub thrust_max: f64,
    pub rudder_max: f64,
    pub pass_margin: f64,
    pub gap: (f64, f64),
    pub radius: (f64, f64),
    /// Radius range of obstacles drawn after the first, out of distribution.
    pub ood_radius: (f64, f64),
    /// Off-center shift magnitude of the first obstacle, out of distribution.
    pub ood_shift: (f64, f64),
    pub ood: bool,
    pub cruise: f64,
    /// Sharpness of the deviation indicator relative to `w`.
    pub dev_sharpness: f64,
    pub w: f64,
}

impl Default for ShipTrackConfig {
    fn default() -> Self {
        ShipTrackConfig {
            dt: 0.2,
            horizon: 20,
            until_steps: 10,
            river_width: 10.0,
            gamma: 1.0,
            budget: 1.0,
            thrust_max: 1.0,
            rudder_max: 3.0,
            pass_margin: 0.2,
            gap: (3.0, 5.0),
            radius: (0.4, 0.8),
            ood_radius: (1.2, 1.6),
            ood_shift: (0.6, 1.0),
            ood: false,
            cruise: 1.0,
            dev_sharpness: 0.1,
            w: 100.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShipTrack<T> {
    schema: Vec<String>,
    cfg: ShipTrackConfig,
    _t: std::marker::PhantomData<T>,
}

impl<T: Scalar> ShipTrack<T> {
    pub fn new(cfg: ShipTrackConfig) -> Self {
        let schema = ["x", "y", "psi", "u", "v", "r", "x1", "y1", "r1", "tau"].map(String::from).to_vec();
        ShipTrack { schema, cfg, _t: std::marker::PhantomData }
    }

    fn passed<V: Real<T>>(&self, x: &[V]) -> V {
        x[X].clone() - x[X1].clone() - x[R1].clone() - T::of(self.cfg.pass_margin)
    }
}

impl<T: Scalar> HybridModel<T> for ShipTrack<T> {
    fn schema(&self) -> &[String] {
        &self.schema
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn flow<V: Real<T>>(&self, ctx: &V::Ctx, x: &[V], u: &[V], sharp: Option<T>) -> Vec<V> {
        let dev_sharp = sharp.map(|w| w * T::of(self.cfg.dev_sharpness));
        // 1(|y| > gamma) as 1(y^2 - gamma^2 >= 0).
        let off = indicator(&(x[Y].square() - T::of(self.cfg.gamma * self.cfg.gamma)), dev_sharp);
        let mut f = pose_flow(x, u);
        f.extend((0..3).map(|_| k(ctx, 0.0)));
        f.push(-off);
        f
    }

    fn membership<V: Real<T>>(&self, _ctx: &V::Ctx, x: &[V], _sharp: Option<T>) -> V {
        -self.passed(x)
    }

    fn jump<V: Real<T>>(&self, ctx: &V::Ctx, x: &[V], rng: &mut ChaCha8Rng, sharp: Option<T>) -> Vec<V> {
        let c = &self.cfg;
        let ind = indicator(&self.passed(x), sharp);
        let gap = V::uniform(ctx, rng, T::of(c.gap.0), T::of(c.gap.1));
        let radius = if c.ood { c.ood_radius } else { c.radius };
        let rad = V::uniform(ctx, rng, T::of(radius.0), T::of(radius.1));
        let x_new = x[X].clone() - x[X1].clone();
        let mut y = x.to_vec();
        y[X1] = blend(&x[X1], x_new.clone() + gap, &ind);
        y[X] = blend(&x[X], x_new, &ind);
        y[Y1] = blend(&x[Y1], k(ctx, 0.0), &ind);
        y[R1] = blend(&x[R1], rad, &ind);
        y[TAU] = blend(&x[TAU], k(ctx, c.budget), &ind);
        y
    }
}

pub(super) fn build_track<T: Scalar>(cfg: &ShipTrackConfig, seed: u64) -> Result<Benchmark<T>> {
    let h = cfg.horizon;
    let a = cfg.until_steps.min(h);
    let b = h - a;
    let half = cfg.river_width / 2.0;
    let safe = format!("G[0,{h}] (abs(y) < {half}) & G[0,{h}] ((x - x1)^2 + (y - y1)^2 > r1^2)");
    let phi = format!("{safe} & (tau > 0 U[0,{a}] G[0,{b}] (abs(y) < {}))", cfg.gamma);
    let sys = system(Model::ShipTrack(ShipTrack::new(cfg.clone())), cfg.dt, h, cfg.thrust_max, cfg.rudder_max, cfg.w, seed);
    let base = |oy: Dist<T>| {
        vec![
            c(0.0),
            u((-0.5, 0.5)),
            u((-0.2, 0.2)),
            u((0.5, 1.5)),
            c(0.0),
            c(0.0),
            u((1.5, 4.0)),
            oy,
            u(cfg.radius),
            c(cfg.budget),
        ]
    };
    let scenarios = if cfg.ood {
        let (lo, hi) = cfg.ood_shift;
        vec![
            Scenario::new("shifted-up", 1.0, base(u((lo, hi)))),
            Scenario::new("shifted-down", 1.0, base(u((-hi, -lo)))),
        ]
    } else {
        vec![Scenario::new("centerline", 1.0, base(c(0.0)))]
    };
    let goal = Goal { terms: vec![(U, GoalTarget::Const(cfg.cruise))] };
    BenchmarkSpec::build("ship-track", super::describe("ship-track")?, sys, phi, safe, Sampler { scenarios }, goal)
}
