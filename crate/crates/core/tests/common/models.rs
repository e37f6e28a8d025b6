//! Small hybrid models for tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use stlnpc::benchmarks::{BenchmarkSpec, Dist, Goal, GoalTarget, Sampler, Scenario};
use stlnpc::diff::Real;
use stlnpc::dynamics::{HybridModel, HybridSystem};
use stlnpc::policy::{PolicyNet, PolicySpec};
use stlnpc::stl::{eval_boolean, parse_formula, Formula, Trace};

/// `x' = u`; on `x >= jump_at` the state resets to `x - jump_at`.
#[derive(Debug, Clone)]
pub struct Integrator {
    pub schema: Vec<String>,
    pub jump_at: f64,
}

impl HybridModel<f64> for Integrator {
    fn schema(&self) -> &[String] {
        &self.schema
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn flow<V: Real<f64>>(&self, _: &V::Ctx, _: &[V], u: &[V], _: Option<f64>) -> Vec<V> {
        vec![u[0].clone()]
    }

    fn membership<V: Real<f64>>(&self, _: &V::Ctx, x: &[V], _: Option<f64>) -> V {
        -x[0].clone() + self.jump_at
    }

    fn jump<V: Real<f64>>(&self, _: &V::Ctx, x: &[V], _: &mut ChaCha8Rng, _: Option<f64>) -> Vec<V> {
        vec![x[0].clone() - self.jump_at]
    }
}

pub fn integrator(horizon: usize, jump_at: f64, w: f64) -> HybridSystem<f64, Integrator> {
    HybridSystem {
        model: Integrator { schema: vec!["x".into()], jump_at },
        dt: 0.1,
        horizon,
        u_min: vec![-1.0],
        u_max: vec![1.0],
        w,
        reset_seed: 0,
    }
}

/// A randomized backup-search instance on the 1-D integrator.
pub struct BackupCase {
    pub system: HybridSystem<f64, Integrator>,
    pub phi: Formula,
    pub phi_safe: Formula,
    pub net: PolicyNet<f64>,
    pub x0: f64,
}

pub fn backup_case<R: Rng>(rng: &mut R, horizon: usize) -> BackupCase {
    let mut system = integrator(horizon, 100.0, 100.0);
    system.dt = 0.5;
    let schema = ["x".to_string()];
    let a = rng.random_range(0..horizon);
    let b = rng.random_range(a..=horizon);
    let reach = rng.random_range(-1.5..1.5);
    let floor = rng.random_range(-2.0..0.0);
    let phi = parse_formula(&format!("F[{a},{b}] (x - ({reach}) > 0) & G[0,{horizon}] (x - ({floor}) > 0)"), &schema).unwrap();
    let phi_safe = parse_formula(&format!("G[0,{horizon}] (x - ({floor}) > 0)"), &schema).unwrap();
    let mut spec = PolicySpec::new(1, 1, horizon, vec![-1.0], vec![1.0]);
    spec.hidden = vec![4];
    let net = PolicyNet::init(&spec, rng.random()).unwrap();
    BackupCase { system, phi, phi_safe, net, x0: rng.random_range(-0.5..0.5) }
}

/// Exact rollout of the integrator without the library's step function.
fn simulate(x0: f64, us: &[f64], dt: f64) -> Vec<f64> {
    let mut xs = vec![x0];
    for u in us {
        let x = *xs.last().unwrap();
        xs.push(x + u.clamp(-1.0, 1.0) * dt);
    }
    xs
}

/// Brute force over every prefix length and every grid prefix, completed
/// by the policy from the prefix endpoint: does any candidate satisfy `phi`?
pub fn exhaustive_feasible(case: &BackupCase, levels: usize, max_prefix: usize) -> bool {
    let h = case.system.horizon;
    let dt = case.system.dt;
    let centers: Vec<f64> = (0..levels).map(|i| -1.0 + (2.0 * i as f64 + 1.0) / levels as f64).collect();
    for t0 in 1..=max_prefix {
        let mut digits = vec![0usize; t0];
        loop {
            let prefix: Vec<f64> = digits.iter().map(|&d| centers[d]).collect();
            let xs = simulate(case.x0, &prefix, dt);
            let plan = case.net.predict(&[*xs.last().unwrap()]).unwrap();
            let mut us = prefix.clone();
            us.extend(plan.iter().take(h - t0).map(|r| r[0]));
            let states = simulate(case.x0, &us, dt);
            let tr = Trace::new(vec!["x".to_string()], vec![states], dt).unwrap();
            if eval_boolean(&tr, 0, &case.phi).unwrap() {
                return true;
            }
            let mut i = 0;
            while i < t0 {
                digits[i] += 1;
                if digits[i] < levels {
                    break;
                }
                digits[i] = 0;
                i += 1;
            }
            if i == t0 {
                break;
            }
        }
    }
    false
}

/// One-dimensional integrator with a 4-step horizon.
pub fn tiny_integrator() -> BenchmarkSpec<f64, Integrator> {
    let sampler = Sampler { scenarios: vec![Scenario::new("start", 1.0, vec![Dist::Uniform(0.0, 0.3)])] };
    let goal = Goal { terms: vec![(0, GoalTarget::Const(0.25))] };
    BenchmarkSpec::build(
        "tiny",
        "integrator",
        integrator(4, 0.8, 100.0),
        "F[0,4] (x - 0.2 > 0) & G[0,4] (x + 0.5 > 0)".into(),
        "G[0,4] (x + 0.5 > 0)".into(),
        sampler,
        goal,
    )
    .unwrap()
}
