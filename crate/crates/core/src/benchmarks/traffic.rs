//! Ego car approaching intersections behind a leading car.
//!
//! State `(x, v, light, tau, dx, vlead, yield)`. `x = 0` is the near edge of
//! the intersection; `light` is 0 for a stop sign and 1 for a traffic light;
//! `tau` is the time stopped at the sign or the light phase. Jumps: passing
//! the intersection draws a new one, a leader out of range is replaced, the
//! light phase wraps, and a yield command clears after a wait at the sign.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{blend, k, Benchmark, BenchmarkSpec, Dist, Goal, Model, Sampler, Scenario};
use crate::diff::{indicator, Real};
use crate::dynamics::{HybridModel, HybridSystem};
use crate::error::Result;
use crate::num::Scalar;

const BIG: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub dt: f64,
    pub horizon: usize,
    pub u_max: f64,
    pub t_red: f64,
    pub t_green: f64,
    pub x_inter: f64,
    /// Offset past which the car has left the intersection.
    pub x_pass: f64,
    /// Distance to the next intersection after passing one.
    pub gap: (f64, f64),
    pub leader_dx: (f64, f64),
    pub leader_v: (f64, f64),
    /// Leader distance at which a new leader is drawn.
    pub leader_range: f64,
    /// Stopped time after which a yield command clears.
    pub yield_clear: f64,
    pub w: f64,
    /// Sharpness of the at-stop-sign indicator relative to `w`.
    pub zone_sharpness: f64,
    /// Weights of the stop, stop-and-yield and light scenarios.
    pub weights: (f64, f64, f64),
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            dt: 0.2,
            horizon: 15,
            u_max: 5.0,
            t_red: 4.0,
            t_green: 4.0,
            x_inter: 2.0,
            x_pass: 3.0,
            gap: (5.0, 7.0),
            leader_dx: (3.0, 10.0),
            leader_v: (1.0, 3.0),
            leader_range: 12.0,
            yield_clear: 2.0,
            w: 100.0,
            zone_sharpness: 0.1,
            weights: (1.0, 1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Traffic<T> {
    schema: Vec<String>,
    cfg: TrafficConfig,
    _t: std::marker::PhantomData<T>,
}

const X: usize = 0;
const V: usize = 1;
const LIGHT: usize = 2;
const TAU: usize = 3;
const DX: usize = 4;
const VLEAD: usize = 5;
const YIELD: usize = 6;

impl<T: Scalar> Traffic<T> {
    pub fn new(cfg: TrafficConfig) -> Self {
        let schema = ["x", "v", "light", "tau", "dx", "vlead", "yield"].map(String::from).to_vec();
        Traffic { schema, cfg, _t: std::marker::PhantomData }
    }

    fn period(&self) -> f64 {
        self.cfg.t_red + self.cfg.t_green
    }

    /// Jump triggers, each `>= 0` when active: intersection passed, leader
    /// out of range, light phase wrap, yield cleared.
    fn triggers<R: Real<T>>(&self, x: &[R]) -> [R; 4] {
        let c = &self.cfg;
        let not_light = -x[LIGHT].clone() + T::one();
        [
            x[X].clone() - T::of(c.x_pass),
            x[DX].clone() - T::of(c.leader_range),
            x[TAU].clone() - T::of(self.period()) - not_light * T::of(BIG),
            x[TAU].clone()
                - T::of(c.yield_clear)
                - (-x[YIELD].clone() + T::one()) * T::of(BIG)
                - x[LIGHT].clone() * T::of(BIG),
        ]
    }
}

impl<T: Scalar> HybridModel<T> for Traffic<T> {
    fn schema(&self) -> &[String] {
        &self.schema
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn flow<R: Real<T>>(&self, ctx: &R::Ctx, x: &[R], u: &[R], sharp: Option<T>) -> Vec<R> {
        let zone_sharp = sharp.map(|w| w * T::of(self.cfg.zone_sharpness));
        // 1(x (x + 1) <= 0): at the stop sign.
        let at_sign = indicator(&-(x[X].clone() * (x[X].clone() + T::one())), zone_sharp);
        let light = x[LIGHT].clone();
        let tau_dot = (-light.clone() + T::one()) * at_sign + light;
        vec![
            x[V].clone(),
            u[0].clone(),
            k(ctx, 0.0),
            tau_dot,
            x[VLEAD].clone() - x[V].clone(),
            k(ctx, 0.0),
            k(ctx, 0.0),
        ]
    }

    fn membership<R: Real<T>>(&self, _ctx: &R::Ctx, x: &[R], _sharp: Option<T>) -> R {
        let neg: Vec<R> = self.triggers(x).into_iter().map(|g| -g).collect();
        R::min_of(&neg)
    }

    fn jump<R: Real<T>>(&self, ctx: &R::Ctx, x: &[R], rng: &mut ChaCha8Rng, sharp: Option<T>) -> Vec<R> {
        let c = &self.cfg;
        let of = T::of;
        let [g_int, g_lead, g_wrap, g_yield] = self.triggers(x);
        let (i_int, i_lead, i_wrap, i_yield) =
            (indicator(&g_int, sharp), indicator(&g_lead, sharp), indicator(&g_wrap, sharp), indicator(&g_yield, sharp));
        let gap = R::uniform(ctx, rng, of(c.gap.0), of(c.gap.1));
        let light = R::choose(ctx, rng, &[T::zero(), T::one()]);
        let phase = R::uniform(ctx, rng, T::zero(), of(self.period()));
        let yld = R::choose(ctx, rng, &[T::zero(), T::one()]);
        let dx = R::uniform(ctx, rng, of(c.leader_dx.0), of(c.leader_dx.1));
        let vl = R::uniform(ctx, rng, of(c.leader_v.0), of(c.leader_v.1));

        let mut y = x.to_vec();
        y[TAU] = blend(&y[TAU], x[TAU].clone() - of(self.period()), &i_wrap);
        y[YIELD] = blend(&y[YIELD], k(ctx, 0.0), &i_yield);
        y[X] = blend(&y[X], x[X].clone() - gap, &i_int);
        y[TAU] = blend(&y[TAU], light.clone() * phase, &i_int);
        y[YIELD] = blend(&y[YIELD], (-light.clone() + T::one()) * yld, &i_int);
        y[LIGHT] = blend(&y[LIGHT], light, &i_int);
        y[DX] = blend(&y[DX], dx, &i_lead);
        y[VLEAD] = blend(&y[VLEAD], vl, &i_lead);
        y
    }
}

pub(super) fn build<T: Scalar>(cfg: &TrafficConfig, seed: u64) -> Result<Benchmark<T>> {
    let h = cfg.horizon;
    let model = Traffic::new(cfg.clone());
    let period = model.period();
    let phi1 = format!("F[0,{h}] (tau > 1) & (10 * yield - 5 > 0 -> G[0,{h}] (x < 0))");
    let phi2 = format!("G[0,{h}] (tau % {period} > {} | x * (x - {}) > 0)", cfg.t_red, cfg.x_inter);
    let phi3 = format!("G[0,{h}] (dx > 0)");
    let phi = format!("(5 - 10 * light > 0 -> ({phi1})) & (10 * light - 5 > 0 -> {phi2}) & {phi3}");
    let system = HybridSystem {
        model: Model::Traffic(model),
        dt: T::of(cfg.dt),
        horizon: h,
        u_min: vec![T::of(-cfg.u_max)],
        u_max: vec![T::of(cfg.u_max)],
        w: T::of(cfg.w),
        reset_seed: seed,
    };
    let u = |a: f64, b: f64| Dist::Uniform(T::of(a), T::of(b));
    let c = |a: f64| Dist::Const(T::of(a));
    let (dx, vl) = (u(cfg.leader_dx.0, cfg.leader_dx.1), u(cfg.leader_v.0, cfg.leader_v.1));
    let sampler = Sampler {
        scenarios: vec![
            Scenario::new(
                "stop",
                cfg.weights.0,
                vec![u(-3.0, -0.5), u(0.0, 2.0), c(0.0), u(0.0, 0.5), dx.clone(), vl.clone(), c(0.0)],
            ),
            Scenario::new(
                "stop-yield",
                cfg.weights.1,
                vec![u(-3.0, -0.5), u(0.0, 2.0), c(0.0), u(0.0, 1.5), dx.clone(), vl.clone(), c(1.0)],
            ),
            Scenario::new(
                "light",
                cfg.weights.2,
                vec![u(-3.0, -0.5), u(0.0, 2.0), c(1.0), u(0.0, period), dx, vl, c(0.0)],
            ),
        ],
    };
    BenchmarkSpec::build(
        "traffic",
        super::describe("traffic")?,
        system,
        phi,
        phi3,
        sampler,
        Goal::none(),
    )
}
