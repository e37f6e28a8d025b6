//! Test-time control: receding-horizon execution of the policy, violation
//! monitoring with a grid-search backup, planning baselines and closed-loop
//! evaluation.
//!
//! At each step the policy predicts a full control horizon and the predicted
//! exact rollout is checked against `Φ`. On a violation the backup enumerates
//! grid control prefixes of length `T0 = 1, 2, ...`, completes each with the
//! policy from the prefix endpoint and picks, in order of preference:
//!
//! 1. the most robust candidate satisfying `Φ`,
//! 2. the most robust candidate satisfying the safety part `φ_safe`,
//! 3. the candidate whose safe prefix is longest.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{BenchmarkSpec, Sampler};
use crate::diff::{Real, Tape, Var, VarCtx};
use crate::dynamics::{HybridModel, HybridSystem};
use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::policy::PolicyNet;
use crate::stl::{eval_boolean, robustness, smooth_robustness, Formula, Trace};
use crate::trainer::episode_rng;

/// Which branch produced an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    PolicyOk,
    BackupFullStl,
    BackupSafetyOnly,
    BackupLongestSafePrefix,
    /// Produced by a planning baseline.
    Planner,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::PolicyOk => "policy-ok",
            Status::BackupFullStl => "backup-full-stl",
            Status::BackupSafetyOnly => "backup-safety-only",
            Status::BackupLongestSafePrefix => "backup-longest-safe-prefix",
            Status::Planner => "planner",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanResult<T> {
    /// First control, within bounds.
    pub action: Vec<T>,
    /// Predicted exact trace of `T + 1` states.
    pub predicted: Trace<T>,
    /// Robustness of `Φ` on the predicted trace at step 0.
    pub robustness: T,
    pub status: Status,
    /// True when the returned plan is predicted to violate `Φ`.
    pub violation: bool,
}

/// The system and specifications a controller works against.
#[derive(Debug, Clone, Copy)]
pub struct Task<'a, T, M> {
    pub system: &'a HybridSystem<T, M>,
    pub phi: &'a Formula,
    pub phi_safe: &'a Formula,
}

impl<'a, T: Scalar, M: HybridModel<T>> Task<'a, T, M> {
    pub fn of(b: &'a BenchmarkSpec<T, M>) -> Self {
        Task { system: &b.system, phi: &b.phi, phi_safe: &b.phi_safe }
    }

    /// Exact rollout of a control sequence with the prediction generator.
    pub fn predict(&self, x: &[T], controls: &[Vec<T>]) -> Result<Trace<T>> {
        let mut rng = self.system.reset_rng();
        Ok(self.system.rollout_hard(x, controls, &mut rng)?.trace)
    }

    fn score(&self, x: &[T], controls: &[Vec<T>]) -> Result<(T, Trace<T>)> {
        let tr = self.predict(x, controls)?;
        let rho = robustness(&tr, 0, self.phi)?;
        Ok((rho, tr))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackupConfig {
    /// Bins per control dimension.
    pub levels: usize,
    /// Longest prefix tried.
    pub max_prefix: usize,
    /// Batch size of policy evaluations at prefix endpoints.
    pub batch: usize,
}

impl Default for BackupConfig {
    fn default() -> Self {
        BackupConfig { levels: 5, max_prefix: 2, batch: 1024 }
    }
}

impl BackupConfig {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::Config(format!("backup needs at least 2 levels, got {}", self.levels)));
        }
        if self.max_prefix == 0 || self.max_prefix > horizon {
            return Err(Error::Config(format!("backup prefix must be in 1..={horizon}, got {}", self.max_prefix)));
        }
        if self.batch == 0 {
            return Err(Error::Config("backup batch must be positive".into()));
        }
        Ok(())
    }
}

/// Bin centers of `[lo, hi]` split into `levels` equal cells.
pub fn grid_centers<T: Scalar>(lo: T, hi: T, levels: usize) -> Vec<T> {
    let w = (hi - lo) / T::of(levels as f64);
    (0..levels).map(|i| lo + w * T::of(i as f64 + 0.5)).collect()
}

/// Prefix `index` of the enumeration: digit `s * m + j` (base `levels`,
/// least significant first) picks the bin of control `j` at step `s`.
pub fn grid_prefix<T: Scalar>(index: usize, steps: usize, grids: &[Vec<T>]) -> Vec<Vec<T>> {
    let levels = grids[0].len();
    let mut rest = index;
    (0..steps)
        .map(|_| {
            grids
                .iter()
                .map(|g| {
                    let d = rest % levels;
                    rest /= levels;
                    g[d]
                })
                .collect()
        })
        .collect()
}

/// Number of prefixes of length `t0`: `levels^(m t0)`.
pub fn prefix_count(levels: usize, m: usize, t0: usize) -> Option<usize> {
    levels.checked_pow((m * t0) as u32)
}

/// Longest `s` such that the states `0..s` are free of safety violations:
/// the first failing step of each top-level Always clause, minimized over
/// conjuncts. Other clauses count as all-or-nothing at step 0.
pub fn safe_prefix_len<T: Scalar>(trace: &Trace<T>, f: &Formula) -> Result<usize> {
    Ok(match f {
        Formula::And(gs) => {
            let mut best = trace.len();
            for g in gs {
                best = best.min(safe_prefix_len(trace, g)?);
            }
            best
        }
        Formula::Always(i, g) => {
            let last = (trace.len() - 1).saturating_sub(g.horizon()).min(i.hi());
            let mut s = i.lo();
            while s <= last {
                if !eval_boolean(trace, s, g)? {
                    return Ok(s);
                }
                s += 1;
            }
            trace.len()
        }
        _ => {
            if eval_boolean(trace, 0, f)? {
                trace.len()
            } else {
                0
            }
        }
    })
}

struct Candidate<T> {
    prefix_len: usize,
    index: usize,
    trace: Trace<T>,
    rho: T,
    safe: bool,
    safe_len: usize,
}

fn clamp_action<T: Scalar, M: HybridModel<T>>(sys: &HybridSystem<T, M>, u: &[T]) -> Vec<T> {
    sys.clamp_control(u)
}

/// Scores every grid prefix of length `t0`, each completed by the policy.
fn candidates<T: Scalar, M: HybridModel<T>>(
    net: &PolicyNet<T>,
    task: &Task<T, M>,
    x: &[T],
    t0: usize,
    cfg: &BackupConfig,
) -> Result<Vec<Candidate<T>>> {
    let sys = task.system;
    let m = sys.control_dim();
    let horizon = sys.horizon;
    let grids: Vec<Vec<T>> = (0..m).map(|j| grid_centers(sys.u_min[j], sys.u_max[j], cfg.levels)).collect();
    let count = prefix_count(cfg.levels, m, t0)
        .ok_or_else(|| Error::Config(format!("backup grid of {}^{} overflows", cfg.levels, m * t0)))?;
    let mut out = Vec::with_capacity(count);
    let mut start = 0;
    while start < count {
        let end = (start + cfg.batch).min(count);
        // Prefix rollouts, keeping each generator for the completion.
        let prefixes: Vec<Option<(Vec<Vec<T>>, Vec<Vec<T>>, ChaCha8Rng)>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let us = grid_prefix(i, t0, &grids);
                let mut rng = sys.reset_rng();
                let mut states = vec![x.to_vec()];
                for u in &us {
                    match sys.hard_step(states.last().unwrap(), u, &mut rng) {
                        Ok(s) => states.push(s),
                        Err(_) => return None,
                    }
                }
                Some((states, us, rng))
            })
            .collect();
        let endpoints: Vec<Vec<T>> =
            prefixes.iter().map(|p| p.as_ref().map_or_else(|| x.to_vec(), |(s, _, _)| s.last().unwrap().clone())).collect();
        // One batched forward pass for all endpoints of this chunk.
        let plans = net.predict_batch(&endpoints)?;
        let scored: Vec<Option<Candidate<T>>> = prefixes
            .into_par_iter()
            .zip(plans.into_par_iter())
            .enumerate()
            .map(|(k, (p, plan))| {
                let (mut states, _, mut rng) = p?;
                for u in plan.iter().take(horizon - t0) {
                    let next = sys.hard_step(states.last().unwrap(), u, &mut rng).ok()?;
                    states.push(next);
                }
                let trace = Trace::from_states(sys.schema().to_vec(), states, sys.dt.f64()).ok()?;
                let rho = robustness(&trace, 0, task.phi).ok()?;
                let safe = eval_boolean(&trace, 0, task.phi_safe).ok()?;
                let safe_len = safe_prefix_len(&trace, task.phi_safe).ok()?;
                Some(Candidate { prefix_len: t0, index: start + k, trace, rho, safe, safe_len })
            })
            .collect();
        out.extend(scored.into_iter().flatten());
        start = end;
    }
    Ok(out)
}

fn first_action<T: Scalar>(c: &Candidate<T>, grids: &[Vec<T>]) -> Vec<T> {
    grid_prefix(c.index, 1, grids).remove(0)
}

/// Grid-search backup. Call after the policy's own plan was found to
/// violate `Φ`.
pub fn backup_search<T: Scalar, M: HybridModel<T>>(
    net: &PolicyNet<T>,
    task: &Task<T, M>,
    x: &[T],
    cfg: &BackupConfig,
) -> Result<PlanResult<T>> {
    let sys = task.system;
    cfg.validate(sys.horizon)?;
    let grids: Vec<Vec<T>> =
        (0..sys.control_dim()).map(|j| grid_centers(sys.u_min[j], sys.u_max[j], cfg.levels)).collect();
    let mut safety_best: Option<Candidate<T>> = None;
    let mut prefix_best: Option<Candidate<T>> = None;
    for t0 in 1..=cfg.max_prefix {
        let cands = candidates(net, task, x, t0, cfg)?;
        let mut full: Option<&Candidate<T>> = None;
        for c in &cands {
            if c.rho > T::zero() && full.is_none_or(|b| c.rho > b.rho) {
                full = Some(c);
            }
        }
        if let Some(c) = full {
            return Ok(PlanResult {
                action: first_action(c, &grids),
                predicted: c.trace.clone(),
                robustness: c.rho,
                status: Status::BackupFullStl,
                violation: false,
            });
        }
        for c in cands {
            // Safety-only winner comes from the shortest prefix that has one.
            let better_safe = c.safe
                && safety_best.as_ref().is_none_or(|b| b.prefix_len == t0 && c.rho > b.rho);
            if better_safe {
                safety_best = Some(c);
            } else if prefix_best.as_ref().is_none_or(|b| c.safe_len > b.safe_len) {
                prefix_best = Some(c);
            }
        }
    }
    if let Some(c) = safety_best {
        return Ok(PlanResult {
            action: first_action(&c, &grids),
            robustness: c.rho,
            predicted: c.trace,
            status: Status::BackupSafetyOnly,
            violation: true,
        });
    }
    match prefix_best {
        Some(c) => Ok(PlanResult {
            action: first_action(&c, &grids),
            robustness: c.rho,
            predicted: c.trace,
            status: Status::BackupLongestSafePrefix,
            violation: true,
        }),
        None => Err(Error::NonFiniteState),
    }
}

/// One receding-horizon step of the policy, with optional backup.
pub fn mpc_step<T: Scalar, M: HybridModel<T>>(
    net: &PolicyNet<T>,
    task: &Task<T, M>,
    x: &[T],
    backup: Option<&BackupConfig>,
) -> Result<PlanResult<T>> {
    let plan = net.predict(x)?;
    let (rho, trace) = task.score(x, &plan)?;
    if rho > T::zero() || backup.is_none() {
        return Ok(PlanResult {
            action: clamp_action(task.system, &plan[0]),
            predicted: trace,
            robustness: rho,
            status: Status::PolicyOk,
            violation: !(rho > T::zero()),
        });
    }
    backup_search(net, task, x, backup.unwrap())
}

/// Probability lower bound that the backup grid contains a prefix within
/// `delta` (max-norm, every step) of a uniformly distributed solution:
/// `min(1, ((2L - 4) delta)^(m T) / prod_j (u_max_j - u_min_j)^T)`.
pub fn theorem1_bound(m: usize, t: usize, levels: usize, delta: f64, u_min: &[f64], u_max: &[f64]) -> Result<f64> {
    if levels < 2 {
        return Err(Error::Config(format!("bound needs L >= 2, got {levels}")));
    }
    if !(delta > 0.0) {
        return Err(Error::Config(format!("delta must be positive, got {delta}")));
    }
    if u_min.len() != m || u_max.len() != m {
        return Err(Error::Dimension { expected: m, got: u_min.len().min(u_max.len()) });
    }
    if u_min.iter().zip(u_max).any(|(lo, hi)| !(lo < hi)) {
        return Err(Error::Config("bounds need u_min < u_max".into()));
    }
    let num = ((2.0 * levels as f64 - 4.0) * delta).powi((m * t) as i32);
    let den: f64 = u_min.iter().zip(u_max).map(|(lo, hi)| (hi - lo).powi(t as i32)).product();
    Ok((num / den).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CemConfig {
    pub iterations: usize,
    pub population: usize,
    pub elite_frac: f64,
    /// Initial standard deviation as a fraction of the half range.
    pub init_std: f64,
    pub seed: u64,
}

impl Default for CemConfig {
    fn default() -> Self {
        CemConfig { iterations: 5, population: 100, elite_frac: 0.1, init_std: 0.5, seed: 0 }
    }
}

fn sample_normal<T: Scalar>(rng: &mut ChaCha8Rng, mean: T, std: T) -> T {
    let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    mean + std * T::of(z)
}

/// Cross-entropy planning over open-loop control sequences, scored by
/// robustness. Sample 0 of every generation is the current mean.
pub fn cem_plan<T: Scalar, M: HybridModel<T>>(task: &Task<T, M>, x: &[T], cfg: &CemConfig) -> Result<PlanResult<T>> {
    if cfg.population == 0 || cfg.iterations == 0 || !(cfg.elite_frac > 0.0 && cfg.elite_frac <= 1.0) {
        return Err(Error::Config("cem needs iterations, population >= 1 and elite_frac in (0, 1]".into()));
    }
    let sys = task.system;
    let (h, m) = (sys.horizon, sys.control_dim());
    let two = T::of(2.0);
    let mut mean: Vec<Vec<T>> = (0..h).map(|_| (0..m).map(|j| (sys.u_min[j] + sys.u_max[j]) / two).collect()).collect();
    let floor = T::of(1e-3);
    let mut std: Vec<Vec<T>> =
        (0..h).map(|_| (0..m).map(|j| (sys.u_max[j] - sys.u_min[j]) / two * T::of(cfg.init_std)).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_elite = ((cfg.population as f64 * cfg.elite_frac).ceil() as usize).clamp(1, cfg.population);
    let mut best: Option<(T, Vec<Vec<T>>, Trace<T>)> = None;
    for _ in 0..cfg.iterations {
        let mut pop = vec![mean.clone()];
        for _ in 1..cfg.population {
            pop.push(
                (0..h)
                    .map(|t| sys.clamp_control(&(0..m).map(|j| sample_normal(&mut rng, mean[t][j], std[t][j])).collect::<Vec<_>>()))
                    .collect(),
            );
        }
        let scored: Vec<(T, Trace<T>)> = pop.par_iter().map(|us| task.score(x, us)).collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| scored[b].0.partial_cmp(&scored[a].0).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
        let top = order[0];
        if best.as_ref().is_none_or(|b| scored[top].0 > b.0) {
            best = Some((scored[top].0, pop[top].clone(), scored[top].1.clone()));
        }
        let elite = &order[..n_elite];
        let ne = T::of(n_elite as f64);
        for t in 0..h {
            for j in 0..m {
                let mu = elite.iter().map(|&i| pop[i][t][j]).sum::<T>() / ne;
                let var = elite.iter().map(|&i| (pop[i][t][j] - mu).powi(2)).sum::<T>() / ne;
                mean[t][j] = mu;
                std[t][j] = var.sqrt().max(floor);
            }
        }
    }
    let (rho, us, trace) = best.expect("at least one iteration");
    Ok(PlanResult { action: us[0].clone(), predicted: trace, robustness: rho, status: Status::Planner, violation: !(rho > T::zero()) })
}

/// Random shooting: best of `samples` uniform control sequences.
pub fn shoot_plan<T: Scalar, M: HybridModel<T>>(task: &Task<T, M>, x: &[T], samples: usize, seed: u64) -> Result<PlanResult<T>> {
    if samples == 0 {
        return Err(Error::Config("shooting needs at least one sample".into()));
    }
    let sys = task.system;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pop: Vec<Vec<Vec<T>>> = (0..samples)
        .map(|_| {
            (0..sys.horizon)
                .map(|_| (0..sys.control_dim()).map(|j| T::uniform(&(), &mut rng, sys.u_min[j], sys.u_max[j])).collect())
                .collect()
        })
        .collect();
    let scored: Vec<(T, Trace<T>)> = pop.par_iter().map(|us| task.score(x, us)).collect::<Result<_>>()?;
    let mut best = 0;
    for i in 1..samples {
        if scored[i].0 > scored[best].0 {
            best = i;
        }
    }
    let (rho, trace) = scored[best].clone();
    Ok(PlanResult { action: pop[best][0].clone(), predicted: trace, robustness: rho, status: Status::Planner, violation: !(rho > T::zero()) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradConfig {
    pub steps: usize,
    pub lr: f64,
    /// Smooth robustness sharpness.
    pub k: f64,
}

impl Default for GradConfig {
    fn default() -> Self {
        GradConfig { steps: 50, lr: 0.05, k: 50.0 }
    }
}

/// Smooth robustness of `controls` and its gradient, through the smoothed
/// dynamics.
pub fn control_gradient<T: Scalar, M: HybridModel<T>>(
    task: &Task<T, M>,
    x: &[T],
    controls: &[Vec<T>],
    k: T,
) -> Result<(T, Vec<Vec<T>>)> {
    let sys = task.system;
    let tape = Tape::new();
    let ctx = VarCtx::new(tape.clone(), 1);
    let x0: Vec<Var<T>> = x.iter().map(|&v| tape.scalar(v)).collect();
    let us: Vec<Vec<Var<T>>> = controls.iter().map(|row| row.iter().map(|&v| tape.scalar(v)).collect()).collect();
    let mut rng = sys.reset_rng();
    let tr = sys.rollout_smooth(&ctx, &x0, &us, &mut rng)?.trace;
    let rho = smooth_robustness(&tr, 0, task.phi, k, &ctx)?;
    let g = tape.backward(&rho)?;
    let grad = us.iter().map(|row| row.iter().map(|v| g.wrt(v)[0]).collect()).collect();
    Ok((rho.item(), grad))
}

/// Gradient ascent on smooth robustness over the raw control sequence,
/// starting from `init` (midpoints when `None`). Also returns the robustness
/// history and the final controls.
pub fn grad_plan<T: Scalar, M: HybridModel<T>>(
    task: &Task<T, M>,
    x: &[T],
    cfg: &GradConfig,
    init: Option<Vec<Vec<T>>>,
) -> Result<(PlanResult<T>, Vec<T>, Vec<Vec<T>>)> {
    let sys = task.system;
    let two = T::of(2.0);
    let mut us = init.unwrap_or_else(|| {
        (0..sys.horizon).map(|_| (0..sys.control_dim()).map(|j| (sys.u_min[j] + sys.u_max[j]) / two).collect()).collect()
    });
    let lr = T::of(cfg.lr);
    let mut history = Vec::with_capacity(cfg.steps);
    for it in 0..cfg.steps {
        let (rho, g) = control_gradient(task, x, &us, T::of(cfg.k))?;
        if !rho.is_finite() || g.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(it));
        }
        history.push(rho);
        for (row, grow) in us.iter_mut().zip(&g) {
            for (u, gv) in row.iter_mut().zip(grow) {
                *u += lr * *gv;
            }
        }
        for row in us.iter_mut() {
            *row = sys.clamp_control(row);
        }
    }
    let (rho, trace) = task.score(x, &us)?;
    let plan = PlanResult { action: us[0].clone(), predicted: trace, robustness: rho, status: Status::Planner, violation: !(rho > T::zero()) };
    Ok((plan, history, us))
}

/// Anything that picks an action for the current state.
pub trait Controller<T: Scalar, M: HybridModel<T>> {
    fn name(&self) -> String;
    fn plan(&mut self, task: &Task<T, M>, x: &[T], step: usize) -> Result<PlanResult<T>>;
}

pub struct PolicyController<T> {
    pub net: PolicyNet<T>,
    pub backup: Option<BackupConfig>,
}

impl<T: Scalar, M: HybridModel<T>> Controller<T, M> for PolicyController<T> {
    fn name(&self) -> String {
        if self.backup.is_some() { "policy+backup".into() } else { "policy".into() }
    }

    fn plan(&mut self, task: &Task<T, M>, x: &[T], _step: usize) -> Result<PlanResult<T>> {
        mpc_step(&self.net, task, x, self.backup.as_ref())
    }
}

pub struct CemController {
    pub cfg: CemConfig,
    calls: u64,
}

impl CemController {
    pub fn new(cfg: CemConfig) -> Self {
        CemController { cfg, calls: 0 }
    }
}

impl<T: Scalar, M: HybridModel<T>> Controller<T, M> for CemController {
    fn name(&self) -> String {
        format!("cem-{}", self.cfg.population)
    }

    fn plan(&mut self, task: &Task<T, M>, x: &[T], _step: usize) -> Result<PlanResult<T>> {
        let cfg = CemConfig { seed: self.cfg.seed.wrapping_add(self.calls), ..self.cfg.clone() };
        self.calls += 1;
        cem_plan(task, x, &cfg)
    }
}

pub struct ShootController {
    pub samples: usize,
    pub seed: u64,
    calls: u64,
}

impl ShootController {
    pub fn new(samples: usize, seed: u64) -> Self {
        ShootController { samples, seed, calls: 0 }
    }
}

impl<T: Scalar, M: HybridModel<T>> Controller<T, M> for ShootController {
    fn name(&self) -> String {
        "shoot".into()
    }

    fn plan(&mut self, task: &Task<T, M>, x: &[T], _step: usize) -> Result<PlanResult<T>> {
        self.calls += 1;
        shoot_plan(task, x, self.samples, self.seed.wrapping_add(self.calls))
    }
}

pub struct GradController {
    pub cfg: GradConfig,
    /// Previous plan shifted by one step, used as a warm start.
    warm: Option<Vec<Vec<f64>>>,
}

impl GradController {
    pub fn new(cfg: GradConfig) -> Self {
        GradController { cfg, warm: None }
    }
}

impl<T: Scalar, M: HybridModel<T>> Controller<T, M> for GradController {
    fn name(&self) -> String {
        "grad".into()
    }

    fn plan(&mut self, task: &Task<T, M>, x: &[T], step: usize) -> Result<PlanResult<T>> {
        let init = if step == 0 {
            None
        } else {
            self.warm.as_ref().map(|w| w.iter().map(|r| r.iter().map(|&v| T::of(v)).collect()).collect())
        };
        let (plan, _, us) = grad_plan(task, x, &self.cfg, init)?;
        let mut shifted: Vec<Vec<f64>> = us.iter().skip(1).map(|r| r.iter().map(|v| v.f64()).collect()).collect();
        shifted.push(shifted.last().cloned().unwrap_or_else(|| us[0].iter().map(|v| v.f64()).collect()));
        self.warm = Some(shifted);
        Ok(plan)
    }
}

/// One closed-loop episode: `states` has one more row than `actions`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub robustness: Vec<f64>,
    pub status: Vec<Status>,
    pub windows: usize,
    pub satisfied: usize,
    pub safe: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub controller: String,
    pub episodes: usize,
    pub steps: usize,
    /// Satisfied windows over all windows.
    pub accuracy: f64,
    /// Episodes whose windows all satisfy `φ_safe`.
    pub safety_rate: f64,
    /// Mean wallclock seconds per control step.
    pub step_time: f64,
    pub status_counts: BTreeMap<String, usize>,
    /// True when no window could be scored.
    pub no_data: bool,
    #[serde(skip)]
    pub logs: Vec<EpisodeLog>,
}

/// Runs `episodes` closed-loop episodes of `length` steps on exact dynamics
/// from initial states drawn with `seed`, scoring every full window.
pub fn evaluate<T: Scalar, M: HybridModel<T>, C: Controller<T, M> + ?Sized>(
    controller: &mut C,
    task: &Task<T, M>,
    sampler: &Sampler<T>,
    episodes: usize,
    length: usize,
    seed: u64,
) -> Result<EvalReport> {
    let sys = task.system;
    let x0s = sampler.sample_n(episodes, seed)?;
    let mut report = EvalReport { controller: controller.name(), episodes, ..Default::default() };
    let (mut windows, mut satisfied, mut safe_eps, mut time) = (0usize, 0usize, 0usize, 0.0f64);
    for (e, x0) in x0s.into_iter().enumerate() {
        let mut rng = episode_rng(seed.wrapping_add(1), e);
        let mut states = vec![x0];
        let mut log = EpisodeLog {
            states: Vec::new(),
            actions: Vec::new(),
            robustness: Vec::new(),
            status: Vec::new(),
            windows: 0,
            satisfied: 0,
            safe: true,
        };
        for t in 0..length {
            let x = states.last().unwrap().clone();
            let clock = Instant::now();
            let plan = controller.plan(task, &x, t)?;
            time += clock.elapsed().as_secs_f64();
            report.steps += 1;
            *report.status_counts.entry(plan.status.as_str().to_string()).or_default() += 1;
            let next = sys.hard_step(&x, &plan.action, &mut rng)?;
            log.actions.push(plan.action.iter().map(|v| v.f64()).collect());
            log.robustness.push(plan.robustness.f64());
            log.status.push(plan.status);
            states.push(next);
        }
        let trace = Trace::from_states(sys.schema().to_vec(), states, sys.dt.f64())?;
        let h = task.phi.horizon().max(task.phi_safe.horizon());
        for t in 0..trace.len().saturating_sub(h) {
            log.windows += 1;
            if eval_boolean(&trace, t, task.phi)? {
                log.satisfied += 1;
            }
            if !eval_boolean(&trace, t, task.phi_safe)? {
                log.safe = false;
            }
        }
        windows += log.windows;
        satisfied += log.satisfied;
        if log.safe && log.windows > 0 {
            safe_eps += 1;
        }
        log.states = (0..trace.len()).map(|t| trace.state(t).iter().map(|v| v.f64()).collect()).collect();
        report.logs.push(log);
    }
    report.no_data = windows == 0;
    if windows > 0 {
        report.accuracy = satisfied as f64 / windows as f64;
        report.safety_rate = safe_eps as f64 / episodes as f64;
    }
    if report.steps > 0 {
        report.step_time = time / report.steps as f64;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::tests::{sys, Integrator};
    use crate::policy::PolicySpec;
    use crate::stl::parse_formula;

    fn task_parts(text: &str) -> (HybridSystem<f64, Integrator>, Formula) {
        let s = sys(100.0, 100.0);
        let f = parse_formula(text, &["x".to_string()]).unwrap();
        (s, f)
    }

    fn zero_policy(s: &HybridSystem<f64, Integrator>) -> PolicyNet<f64> {
        let mut spec = PolicySpec::new(1, 1, s.horizon, s.u_min.clone(), s.u_max.clone());
        spec.hidden = vec![4];
        let mut net = PolicyNet::init(&spec, 0).unwrap();
        net.params.iter_mut().for_each(|p| *p = 0.0);
        net
    }

    #[test]
    fn coverage_bound_examples() {
        let b = theorem1_bound(1, 2, 4, 0.1, &[-1.0], &[1.0]).unwrap();
        assert!((b - 0.04).abs() < 1e-12);
        assert_eq!(theorem1_bound(1, 2, 4, 5.0, &[-1.0], &[1.0]).unwrap(), 1.0);
        assert!(theorem1_bound(1, 2, 1, 0.1, &[-1.0], &[1.0]).is_err());
        assert_eq!(theorem1_bound(1, 2, 2, 0.1, &[-1.0], &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn grid_enumeration() {
        assert_eq!(prefix_count(5, 1, 2), Some(25));
        let grids = vec![grid_centers(-1.0, 1.0, 4)];
        assert_eq!(grids[0], vec![-0.75, -0.25, 0.25, 0.75]);
        assert_eq!(grid_prefix(6, 2, &grids), vec![vec![0.25], vec![-0.25]]);
    }

    #[test]
    fn backup_finds_reaching_prefix() {
        // The zero policy holds still; reaching x > 0.6 by step 3 needs
        // large controls early.
        let (s, f) = task_parts("F[0,3] (x - 0.6 > 0)");
        let safe = parse_formula("G[0,3] (x + 10 > 0)", &["x".to_string()]).unwrap();
        let task = Task { system: &s, phi: &f, phi_safe: &safe };
        let net = zero_policy(&s);
        let cfg = BackupConfig { levels: 3, max_prefix: 3, batch: 7 };
        let plain = mpc_step(&net, &task, &[0.0], None).unwrap();
        assert!(plain.violation && plain.status == Status::PolicyOk);
        let r = mpc_step(&net, &task, &[0.0], Some(&cfg)).unwrap();
        assert_eq!(r.status, Status::BackupFullStl);
        assert!(r.robustness > 0.0);
        assert!(r.action[0] > 0.0);
    }

    #[test]
    fn inescapable_violation_falls_back_to_longest_prefix() {
        let (s, f) = task_parts("G[0,3] (x - 5 > 0)");
        let task = Task { system: &s, phi: &f, phi_safe: &f };
        let net = zero_policy(&s);
        let r = backup_search(&net, &task, &[0.0], &BackupConfig { levels: 3, max_prefix: 2, batch: 4 }).unwrap();
        assert_eq!(r.status, Status::BackupLongestSafePrefix);
        assert!(r.action[0] >= -5.0 && r.action[0] <= 5.0);
    }

    #[test]
    fn safety_only_branch_respects_safe_formula() {
        let (s, f) = task_parts("F[0,3] (x - 9 > 0) & G[0,3] (x + 1 > 0)");
        let safe = parse_formula("G[0,3] (x + 1 > 0)", &["x".to_string()]).unwrap();
        let task = Task { system: &s, phi: &f, phi_safe: &safe };
        let net = zero_policy(&s);
        let r = backup_search(&net, &task, &[0.0], &BackupConfig { levels: 3, max_prefix: 2, batch: 100 }).unwrap();
        assert_eq!(r.status, Status::BackupSafetyOnly);
        assert!(eval_boolean(&r.predicted, 0, &safe).unwrap());
    }

    #[test]
    fn cem_reaches_interior_optimum() {
        // rho = 0.5 - |x_3 - 1|, maximized when the controls sum to 10.
        let (s, f) = task_parts("G[3,3] (0.5 - abs(x - 1) > 0)");
        let task = Task { system: &s, phi: &f, phi_safe: &f };
        let cfg = CemConfig { iterations: 20, population: 200, elite_frac: 0.1, init_std: 0.5, seed: 3 };
        let r = cem_plan(&task, &[0.0], &cfg).unwrap();
        let x3 = *r.predicted.at(0, 3);
        assert!((x3 - 1.0).abs() < 0.05, "{x3}");
        let again = cem_plan(&task, &[0.0], &cfg).unwrap();
        assert_eq!(again.action, r.action);
    }

    #[test]
    fn cem_population_one_evaluates_mean() {
        let (s, f) = task_parts("G[3,3] (0.5 - abs(x - 1) > 0)");
        let task = Task { system: &s, phi: &f, phi_safe: &f };
        let r = cem_plan(&task, &[0.0], &CemConfig { iterations: 3, population: 1, ..Default::default() }).unwrap();
        assert_eq!(r.action, vec![0.0]);
    }

    #[test]
    fn grad_plan_reaches_and_lr_zero_is_identity() {
        let (s, f) = task_parts("F[0,3] (x - 0.5 > 0)");
        let task = Task { system: &s, phi: &f, phi_safe: &f };
        let (r, _, _) = grad_plan(&task, &[0.0], &GradConfig { steps: 200, lr: 0.5, k: 20.0 }, None).unwrap();
        assert!(r.robustness > 0.0);
        let init = vec![vec![1.0], vec![-2.0], vec![0.5]];
        let (r, _, _) = grad_plan(&task, &[0.0], &GradConfig { steps: 10, lr: 0.0, k: 20.0 }, Some(init.clone())).unwrap();
        assert_eq!(r.action, init[0]);
        let (_, hist, _) = grad_plan(&task, &[0.0], &GradConfig { steps: 30, lr: 0.01, k: 20.0 }, Some(vec![vec![3.0]; 3])).unwrap();
        assert!(hist.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn zero_episodes_report() {
        let (s, f) = task_parts("F[0,3] (x > 0)");
        let task = Task { system: &s, phi: &f, phi_safe: &f };
        let sampler = Sampler { scenarios: vec![crate::benchmarks::Scenario::new("a", 1.0, vec![crate::benchmarks::Dist::Const(0.0)])] };
        let mut c = PolicyController { net: zero_policy(&s), backup: None };
        let r = evaluate(&mut c, &task, &sampler, 0, 10, 0).unwrap();
        assert!(r.no_data);
        assert_eq!(r.accuracy, 0.0);
    }
}
