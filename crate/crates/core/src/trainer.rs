//! Self-supervised policy training through smoothed dynamics.
//!
//! Each step rolls a minibatch of initial states forward under the policy's
//! predicted controls on the tape, scores the traces with smooth robustness
//! and minimizes
//!
//! ```text
//! L = L_perf + lambda * mean(softplus_k(gamma - rho_k))
//! ```
//!
//! where `softplus_k(z) = smooth_max(0, z)` with the robustness sharpness
//! `k`. Accuracy is measured on exact rollouts.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{BenchmarkSpec, Goal, GoalTarget};
use crate::diff::{Gradients, Real, Tape, Var, VarCtx};
use crate::dynamics::HybridModel;
use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::policy::{PolicyNet, PolicySpec};
use crate::stl::{eval_boolean, smooth_robustness, Formula, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub benchmark: String,
    /// Truncation level of the robustness hinge.
    pub gamma: f64,
    /// Sharpness of the smooth min/max.
    pub k: f64,
    /// Weight of the STL term.
    pub lambda: f64,
    /// Training set size.
    pub n_train: usize,
    /// Validation set size as a fraction of `n_train`.
    pub val_fraction: f64,
    pub batch: usize,
    pub steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub hidden: Vec<usize>,
    /// Steps between metric rows.
    pub eval_every: usize,
    /// Number of training states scored for the train accuracy column.
    pub train_eval: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            benchmark: "traffic".into(),
            gamma: 0.5,
            k: 500.0,
            lambda: 1.0,
            n_train: 2000,
            val_fraction: 0.2,
            batch: 64,
            steps: 5000,
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            hidden: vec![256, 256, 256],
            eval_every: 250,
            train_eval: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.gamma >= 0.0) {
            return bad(format!("gamma must be nonnegative, got {}", self.gamma));
        }
        if !(self.k > 0.0) {
            return bad(format!("k must be positive, got {}", self.k));
        }
        if !(self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.batch == 0 || self.n_train < self.batch {
            return bad(format!("need 1 <= batch <= n_train, got batch {} and n_train {}", self.batch, self.n_train));
        }
        if !(self.lr >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("learning rate and moment coefficients out of range".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1".into());
        }
        if !(self.val_fraction > 0.0) {
            return bad("val_fraction must be positive".into());
        }
        Ok(())
    }

    pub fn n_val(&self) -> usize {
        ((self.n_train as f64 * self.val_fraction).round() as usize).max(1)
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: usize,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { m: vec![T::zero(); n], v: vec![T::zero(); n], t: 0, lr: T::of(lr), beta1: T::of(beta1), beta2: T::of(beta2), eps: T::of(eps) }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t as i32);
        let c2 = one - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// One row of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: usize,
    pub loss: f64,
    pub stl_loss: f64,
    pub perf_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub wallclock: f64,
}

impl MetricRow {
    pub const HEADER: &'static str = "step,loss,stl_loss,perf_loss,train_acc,val_acc,wallclock";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.3}",
            self.step, self.loss, self.stl_loss, self.perf_loss, self.train_acc, self.val_acc, self.wallclock
        )
    }
}

/// Loss components of one minibatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub stl: f64,
    pub perf: f64,
}

#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub net: PolicyNet<T>,
    /// Parameters with the best validation accuracy so far.
    pub best: PolicyNet<T>,
    pub best_val: f64,
    pub adam: Adam<T>,
    pub step: usize,
    pub train_set: Vec<Vec<T>>,
    pub val_set: Vec<Vec<T>>,
    pub history: Vec<MetricRow>,
}

/// `n` i.i.d. draws from the benchmark's initial-state distribution.
pub fn sample_initial_states<T: Scalar, M>(bench: &BenchmarkSpec<T, M>, n: usize, seed: u64) -> Result<Vec<Vec<T>>> {
    bench.sampler.sample_n(n, seed)
}

/// Mean hinge `max(0, gamma - rho)`: exact when `k` is `None`, otherwise
/// `smooth_max(0, gamma - rho)` with sharpness `k`.
pub fn truncated_loss<T: Scalar>(scores: &[T], gamma: T, k: Option<T>) -> T {
    if scores.is_empty() {
        return T::zero();
    }
    let sum: T = scores
        .iter()
        .map(|&r| match k {
            None => (gamma - r).max(T::zero()),
            Some(k) => <T as Real<T>>::smooth_max(&[T::zero(), gamma - r], k),
        })
        .sum();
    sum / T::of(scores.len() as f64)
}

/// Per-sample smooth hinge on a batched trace; returns the batch mean.
pub fn stl_loss<T: Scalar>(trace: &Trace<Var<T>>, f: &Formula, gamma: T, k: T, ctx: &VarCtx<T>) -> Result<Var<T>> {
    let rho = smooth_robustness(trace, 0, f, k, ctx)?;
    let zero = <Var<T> as Real<T>>::constant(ctx, T::zero());
    let hinge = Var::try_smooth_max(&[zero, -rho + gamma], k)?;
    Ok(hinge.mean())
}

/// Distance to the goal for every trace state, `out[t]`.
pub fn goal_distances<T: Scalar, V: Real<T>>(trace: &Trace<V>, goal: &Goal, ctx: &V::Ctx) -> Vec<V> {
    (0..trace.len())
        .map(|t| {
            let mut sq = goal.terms.iter().map(|&(c, target)| {
                let tv = match target {
                    GoalTarget::Const(v) => V::constant(ctx, T::of(v)),
                    GoalTarget::Channel(j) => trace.at(j, t).clone(),
                };
                (trace.at(c, t).clone() - tv).square()
            });
            let first = sq.next().expect("goal with terms");
            sq.fold(first, |a, b| a + b).sqrt()
        })
        .collect()
}

/// Mean Euclidean distance to the goal over batch and time; `None` when the
/// benchmark has no goal.
pub fn perf_loss<T: Scalar>(trace: &Trace<Var<T>>, goal: &Goal, ctx: &VarCtx<T>) -> Result<Option<Var<T>>> {
    if goal.is_none() {
        return Ok(None);
    }
    let d = goal_distances(trace, goal, ctx);
    let n = T::of(d.len() as f64);
    let mut it = d.into_iter();
    let first = it.next().expect("nonempty trace");
    let sum = it.fold(first, |a, b| a + b);
    Ok(Some(sum.mean() * (T::one() / n)))
}

/// Same as [`perf_loss`] on one plain trace.
pub fn perf_loss_plain<T: Scalar>(trace: &Trace<T>, goal: &Goal) -> T {
    if goal.is_none() {
        return T::zero();
    }
    let d = goal_distances(trace, goal, &());
    d.iter().copied().sum::<T>() / T::of(d.len() as f64)
}

/// Total loss and its gradient with respect to the flat parameters for one
/// minibatch. `reset_seed` drives the randomness of smoothed jumps.
pub fn loss_and_grad<T: Scalar, M: HybridModel<T>>(
    net: &PolicyNet<T>,
    bench: &BenchmarkSpec<T, M>,
    cfg: &TrainConfig,
    xs: &[Vec<T>],
    reset_seed: u64,
) -> Result<(LossParts, Vec<T>)> {
    let tape = Tape::new();
    let ctx = VarCtx::new(tape.clone(), xs.len());
    let params = net.tape_params(&tape);
    let n = net.state_dim();
    let x0: Vec<Var<T>> = (0..n).map(|i| tape.vector(xs.iter().map(|x| x[i]).collect())).collect();
    let controls = net.predict_tape(&params, &x0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(reset_seed);
    let trace = bench.system.rollout_smooth(&ctx, &x0, &controls, &mut rng)?.trace;
    let stl = stl_loss(&trace, &bench.phi_train, T::of(cfg.gamma), T::of(cfg.k), &ctx)?;
    let perf = perf_loss(&trace, &bench.goal, &ctx)?;
    let weighted = stl.scale(T::of(cfg.lambda));
    let total = match &perf {
        Some(p) => p.clone() + weighted,
        None => weighted,
    };
    let parts = LossParts {
        total: total.item().f64(),
        stl: stl.item().f64(),
        perf: perf.as_ref().map_or(0.0, |p| p.item().f64()),
    };
    let grads: Gradients<T> = tape.backward(&total)?;
    Ok((parts, params.flat_grad(&grads)))
}

/// Generator for the resets of exact rollout `i` under `seed`.
pub fn episode_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

/// Fraction of initial states whose exact open-loop rollout of the
/// policy's plan satisfies `Φ` at step 0.
pub fn open_loop_accuracy<T: Scalar, M: HybridModel<T>>(net: &PolicyNet<T>, bench: &BenchmarkSpec<T, M>, xs: &[Vec<T>], seed: u64) -> Result<f64> {
    if xs.is_empty() {
        return Ok(0.0);
    }
    let plans = net.predict_batch(xs)?;
    let ok: Vec<bool> = xs
        .par_iter()
        .zip(plans.par_iter())
        .enumerate()
        .map(|(i, (x, u))| {
            let mut rng = episode_rng(seed, i);
            let tr = bench.system.rollout_hard(x, u, &mut rng)?.trace;
            eval_boolean(&tr, 0, &bench.phi)
        })
        .collect::<Result<_>>()?;
    Ok(ok.iter().filter(|&&b| b).count() as f64 / xs.len() as f64)
}

impl<T: Scalar> TrainState<T> {
    /// Fresh policy and data sets for `bench`.
    pub fn init<M: HybridModel<T>>(bench: &BenchmarkSpec<T, M>, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let (center, scale) = bench.sampler.normalization(T::one());
        let mut spec = PolicySpec::new(
            bench.system.state_dim(),
            bench.system.control_dim(),
            bench.system.horizon,
            bench.system.u_min.clone(),
            bench.system.u_max.clone(),
        );
        spec.hidden = cfg.hidden.clone();
        spec.input_center = center;
        spec.input_scale = scale;
        let net = PolicyNet::init(&spec, cfg.seed)?;
        let train_set = sample_initial_states(bench, cfg.n_train, cfg.seed.wrapping_add(1))?;
        let val_set = sample_initial_states(bench, cfg.n_val(), cfg.seed.wrapping_add(2))?;
        let adam = Adam::new(net.num_params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
        Ok(TrainState { best: net.clone(), net, best_val: f64::NEG_INFINITY, adam, step: 0, train_set, val_set, history: Vec::new() })
    }

    /// Train and validation accuracy of the current parameters.
    pub fn accuracies<M: HybridModel<T>>(&self, bench: &BenchmarkSpec<T, M>, cfg: &TrainConfig) -> Result<(f64, f64)> {
        let n = cfg.train_eval.min(self.train_set.len());
        let train = open_loop_accuracy(&self.net, bench, &self.train_set[..n], cfg.seed.wrapping_add(3))?;
        let val = open_loop_accuracy(&self.net, bench, &self.val_set, cfg.seed.wrapping_add(4))?;
        Ok((train, val))
    }
}

/// Runs the training loop, handing each metric row to `on_row`.
pub fn train<T: Scalar, M: HybridModel<T>>(
    bench: &BenchmarkSpec<T, M>,
    cfg: &TrainConfig,
    mut on_row: impl FnMut(&MetricRow),
) -> Result<TrainState<T>> {
    let mut st = TrainState::init(bench, cfg)?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(5));
    let mut order: Vec<usize> = (0..st.train_set.len()).collect();
    let mut cursor = order.len();
    let (mut acc, mut count) = (LossParts { total: 0.0, stl: 0.0, perf: 0.0 }, 0usize);
    while st.step < cfg.steps {
        if cursor + cfg.batch > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + cfg.batch];
        cursor += cfg.batch;
        let xs: Vec<Vec<T>> = idx.iter().map(|&i| st.train_set[i].clone()).collect();
        let reset_seed = rand::Rng::random::<u64>(&mut rng);
        let (parts, grad) = loss_and_grad(&st.net, bench, cfg, &xs, reset_seed)?;
        if !parts.total.is_finite() {
            return Err(Error::NonFiniteLoss { step: st.step, batch: idx.to_vec() });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { step: st.step, batch: idx.to_vec() });
        }
        st.adam.step(&mut st.net.params, &grad);
        st.step += 1;
        acc.total += parts.total;
        acc.stl += parts.stl;
        acc.perf += parts.perf;
        count += 1;
        if st.step % cfg.eval_every == 0 || st.step == cfg.steps {
            let (train_acc, val_acc) = st.accuracies(bench, cfg)?;
            let c = count as f64;
            let row = MetricRow {
                step: st.step,
                loss: acc.total / c,
                stl_loss: acc.stl / c,
                perf_loss: acc.perf / c,
                train_acc,
                val_acc,
                wallclock: start.elapsed().as_secs_f64(),
            };
            if val_acc > st.best_val {
                st.best_val = val_acc;
                st.best = st.net.clone();
            }
            on_row(&row);
            st.history.push(row);
            acc = LossParts { total: 0.0, stl: 0.0, perf: 0.0 };
            count = 0;
        }
    }
    if st.history.is_empty() {
        let (_, val) = st.accuracies(bench, cfg)?;
        st.best_val = val;
        st.best = st.net.clone();
    }
    Ok(st)
}
