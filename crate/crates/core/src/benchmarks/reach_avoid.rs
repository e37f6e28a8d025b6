//! Agent climbing through a maze of walls, seeing two levels ahead.
//!
//! State `(x, v, dy, x0, l0, g0, x1, l1, g1)`. `dy` is the vertical offset
//! to the next level and grows at rate `c`. Level `i` has a wall of height
//! `h` spanning `[xi, xi + li]` and, when `gi > 0`, a goal at `xi + gi` on
//! its lower edge. Once `dy` reaches the level gap `d` the agent has passed
//! a level: level 1 becomes level 0 and a new level 1 is drawn.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{blend, k, Benchmark, BenchmarkSpec, Dist, Goal, Model, Sampler, Scenario};
use crate::diff::{indicator, Real};
use crate::dynamics::{HybridModel, HybridSystem};
use crate::error::Result;
use crate::num::Scalar;

const V: usize = 1;
const DY: usize = 2;
const X0: usize = 3;
const L0: usize = 4;
const G0: usize = 5;
const X1: usize = 6;
const L1: usize = 7;
const G1: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReachAvoidConfig {
    pub dt: f64,
    pub horizon: usize,
    pub a_max: f64,
    /// Climb rate of `dy`.
    pub c: f64,
    /// Gap between levels.
    pub d: f64,
    /// Wall height.
    pub h: f64,
    /// Goal radius.
    pub r: f64,
    pub wall_x: (f64, f64),
    pub wall_len: (f64, f64),
    /// Goal offset from the wall start when a level has a goal.
    pub goal_offset: (f64, f64),
    pub w: f64,
}

impl Default for ReachAvoidConfig {
    fn default() -> Self {
        ReachAvoidConfig {
            dt: 0.1,
            horizon: 30,
            a_max: 5.0,
            c: 1.0,
            d: 2.0,
            h: 0.5,
            r: 0.5,
            wall_x: (-2.0, 0.0),
            wall_len: (1.0, 2.0),
            goal_offset: (2.5, 3.5),
            w: 100.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReachAvoid<T> {
    schema: Vec<String>,
    cfg: ReachAvoidConfig,
    _t: std::marker::PhantomData<T>,
}

impl<T: Scalar> ReachAvoid<T> {
    pub fn new(cfg: ReachAvoidConfig) -> Self {
        let schema = ["x", "v", "dy", "x0", "l0", "g0", "x1", "l1", "g1"].map(String::from).to_vec();
        ReachAvoid { schema, cfg, _t: std::marker::PhantomData }
    }
}

impl<T: Scalar> HybridModel<T> for ReachAvoid<T> {
    fn schema(&self) -> &[String] {
        &self.schema
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn flow<R: Real<T>>(&self, ctx: &R::Ctx, x: &[R], u: &[R], _sharp: Option<T>) -> Vec<R> {
        let mut f = vec![x[V].clone(), u[0].clone(), k(ctx, self.cfg.c)];
        f.extend((0..6).map(|_| k(ctx, 0.0)));
        f
    }

    fn membership<R: Real<T>>(&self, _ctx: &R::Ctx, x: &[R], _sharp: Option<T>) -> R {
        -x[DY].clone() + T::of(self.cfg.d)
    }

    fn jump<R: Real<T>>(&self, ctx: &R::Ctx, x: &[R], rng: &mut ChaCha8Rng, sharp: Option<T>) -> Vec<R> {
        let c = &self.cfg;
        let of = T::of;
        let ind = indicator(&(x[DY].clone() - of(c.d)), sharp);
        let wx = R::uniform(ctx, rng, of(c.wall_x.0), of(c.wall_x.1));
        let wl = R::uniform(ctx, rng, of(c.wall_len.0), of(c.wall_len.1));
        let has_goal = R::choose(ctx, rng, &[T::zero(), T::one()]);
        let offset = R::uniform(ctx, rng, of(c.goal_offset.0), of(c.goal_offset.1));
        let goal = has_goal * (offset + T::one()) - T::one();
        let mut y = x.to_vec();
        y[DY] = blend(&x[DY], x[DY].clone() - of(c.d), &ind);
        y[X0] = blend(&x[X0], x[X1].clone(), &ind);
        y[L0] = blend(&x[L0], x[L1].clone(), &ind);
        y[G0] = blend(&x[G0], x[G1].clone(), &ind);
        y[X1] = blend(&x[X1], wx, &ind);
        y[L1] = blend(&x[L1], wl, &ind);
        y[G1] = blend(&x[G1], goal, &ind);
        y
    }
}

pub(super) fn build<T: Scalar>(cfg: &ReachAvoidConfig, seed: u64) -> Result<Benchmark<T>> {
    let (t, d, h, r2) = (cfg.horizon, cfg.d, cfg.h, cfg.r * cfg.r);
    let phi1 = format!("(g0 > 0 -> F[0,{t}] ((x - x0 - g0)^2 + dy^2 < {r2}))");
    let phi2 = format!("G[0,{t}] (dy * (dy - {h}) < 0 -> (x - x0) * (x - x0 - l0) > 0)");
    let phi3 = format!("(g1 > 0 -> F[0,{t}] ((x - x1 - g1)^2 + (dy - {d})^2 < {r2}))");
    let phi4 = format!("G[0,{t}] ((dy - {d}) * (dy - {d} - {h}) < 0 -> (x - x1) * (x - x1 - l1) > 0)");
    let phi = format!("{phi1} & {phi2} & {phi3} & {phi4}");
    let safe = format!("{phi2} & {phi4}");
    let system = HybridSystem {
        model: Model::ReachAvoid(ReachAvoid::new(cfg.clone())),
        dt: T::of(cfg.dt),
        horizon: t,
        u_min: vec![T::of(-cfg.a_max)],
        u_max: vec![T::of(cfg.a_max)],
        w: T::of(cfg.w),
        reset_seed: seed,
    };
    let u = |r: (f64, f64)| Dist::Uniform(T::of(r.0), T::of(r.1));
    let goal = |on: bool| if on { u(cfg.goal_offset) } else { Dist::Const(T::of(-1.0)) };
    let scenarios = [(true, true), (true, false), (false, true), (false, false)]
        .into_iter()
        .map(|(a, b)| {
            let name = format!("goals-{}{}", a as u8, b as u8);
            Scenario::new(
                &name,
                1.0,
                vec![
                    u((-1.0, 1.0)),
                    u((-1.0, 1.0)),
                    u((-1.0, -0.2)),
                    u(cfg.wall_x),
                    u(cfg.wall_len),
                    goal(a),
                    u(cfg.wall_x),
                    u(cfg.wall_len),
                    goal(b),
                ],
            )
        })
        .collect();
    BenchmarkSpec::build(
        "reach-avoid",
        super::describe("reach-avoid")?,
        system,
        phi,
        safe,
        Sampler { scenarios },
        Goal::none(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{eval_boolean, parse_formula, robustness, Trace};
    use rand::SeedableRng;

    fn bench() -> Benchmark<f64> {
        build(&ReachAvoidConfig::default(), 0).unwrap()
    }

    #[test]
    fn no_goal_is_vacuous() {
        let b = bench();
        let phi1 = parse_formula("g0 > 0 -> F[0,30] ((x - x0 - g0)^2 + dy^2 < 0.25)", b.schema()).unwrap();
        let state = vec![10.0, 0.0, -1.0, 0.0, 1.0, -1.0, 0.0, 1.0, -1.0];
        let tr = Trace::from_states(b.schema().to_vec(), vec![state; 31], 0.1).unwrap();
        assert!(eval_boolean(&tr, 0, &phi1).unwrap());
        assert!(eval_boolean(&tr, 0, &b.phi).unwrap());
    }

    #[test]
    fn inside_wall_band_violates() {
        let b = bench();
        let phi2 = parse_formula("G[0,30] (dy * (dy - 0.5) < 0 -> (x - x0) * (x - x0 - l0) > 0)", b.schema()).unwrap();
        let mut states = vec![vec![-3.0, 0.0, -1.0, 0.0, 1.0, -1.0, 0.0, 1.0, -1.0]; 31];
        states[4][DY] = 0.25;
        let tr = Trace::from_states(b.schema().to_vec(), states.clone(), 0.1).unwrap();
        assert!(robustness(&tr, 0, &phi2).unwrap() > 0.0);
        states[4][0] = 0.5;
        let tr = Trace::from_states(b.schema().to_vec(), states, 0.1).unwrap();
        assert!(robustness(&tr, 0, &phi2).unwrap() < 0.0);
        assert!(!eval_boolean(&tr, 0, &b.phi_safe).unwrap());
    }

    #[test]
    fn passing_a_level_resets() {
        let b = bench();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = [0.3, 1.0, 2.05, -1.0, 1.5, 3.0, -0.5, 1.2, -1.0];
        assert!(b.system.model.membership(&(), &x, None) <= 0.0);
        let y = b.system.model.jump(&(), &x, &mut rng, None);
        assert_eq!(&y[..6], &[0.3, 1.0, 2.05 - 2.0, -0.5, 1.2, -1.0]);
        assert!(y[X1] >= -2.0 && y[X1] < 0.0 && y[L1] >= 1.0 && y[L1] < 2.0);
        assert!(y[G1] == -1.0 || (y[G1] >= 2.5 && y[G1] < 3.5));
    }
}
