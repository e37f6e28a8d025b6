//! Hybrid systems and their exact and smoothed rollouts.
//!
//! A model supplies a flow map `f(x, u)`, a membership function `I_C(x)`
//! (positive on the flow set) and a jump map `h(x)`. The exact step is
//! `x + f dt` on the flow set and `h(x)` elsewhere. The smoothed step blends
//! the two with `I = (1 + tanh(w I_C(x))) / 2`:
//!
//! ```text
//! x' = I (x + f(x, u) dt) + (1 - I) h(x)
//! ```
//!
//! Models take an optional indicator sharpness so any switching inside the
//! flow or jump maps is hard in exact mode and tanh-smoothed in training.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diff::{indicator, Real};
use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::stl::Trace;

/// Flow map, jump map and membership function of a hybrid system.
pub trait HybridModel<T: Scalar>: Send + Sync {
    /// State channel names, in state order.
    fn schema(&self) -> &[String];

    fn control_dim(&self) -> usize;

    fn state_dim(&self) -> usize {
        self.schema().len()
    }

    fn flow<V: Real<T>>(&self, ctx: &V::Ctx, x: &[V], u: &[V], sharp: Option<T>) -> Vec<V>;

    /// Positive on the flow set, nonpositive on the jump set.
    fn membership<V: Real<T>>(&self, ctx: &V::Ctx, x: &[V], sharp: Option<T>) -> V;

    /// Reset map. Exogenous randomness comes from `rng`.
    fn jump<V: Real<T>>(&self, ctx: &V::Ctx, x: &[V], rng: &mut ChaCha8Rng, sharp: Option<T>) -> Vec<V>;
}

/// A model together with its step size, horizon and control bounds.
#[derive(Debug, Clone)]
pub struct HybridSystem<T, M> {
    pub model: M,
    pub dt: T,
    /// Planning horizon in steps.
    pub horizon: usize,
    pub u_min: Vec<T>,
    pub u_max: Vec<T>,
    /// Sharpness of the smoothed membership indicator.
    pub w: T,
    /// Seed of the generator used for resets inside predicted rollouts.
    pub reset_seed: u64,
}

/// Which step function a rollout uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Hard,
    Smooth,
}

/// States visited and controls applied.
#[derive(Debug, Clone)]
pub struct RolloutResult<V> {
    pub trace: Trace<V>,
    /// `controls[t][j]`.
    pub controls: Vec<Vec<V>>,
}

impl<T: Scalar, M: HybridModel<T>> HybridSystem<T, M> {
    pub fn validate(&self) -> Result<()> {
        let m = self.model.control_dim();
        if !(self.dt > T::zero()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least one step".into()));
        }
        if self.u_min.len() != m || self.u_max.len() != m {
            return Err(Error::Dimension { expected: m, got: self.u_min.len().min(self.u_max.len()) });
        }
        if self.u_min.iter().zip(&self.u_max).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::Config("control bounds need u_min < u_max".into()));
        }
        if !(self.w > T::zero()) {
            return Err(Error::Config(format!("blend sharpness w must be positive, got {}", self.w)));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.model.control_dim()
    }

    pub fn schema(&self) -> &[String] {
        self.model.schema()
    }

    /// Generator used for resets in a predicted rollout.
    pub fn reset_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.reset_seed)
    }

    fn check_dims(&self, x: usize, u: usize) -> Result<()> {
        if x != self.state_dim() {
            return Err(Error::Dimension { expected: self.state_dim(), got: x });
        }
        if u != self.control_dim() {
            return Err(Error::Dimension { expected: self.control_dim(), got: u });
        }
        Ok(())
    }

    /// Clamps a control vector into bounds.
    pub fn clamp_control(&self, u: &[T]) -> Vec<T> {
        u.iter().zip(self.u_min.iter().zip(&self.u_max)).map(|(&v, (&lo, &hi))| v.max(lo).min(hi)).collect()
    }

    /// Exact step: explicit Euler on the flow set, reset on the jump set.
    pub fn hard_step(&self, x: &[T], u: &[T], rng: &mut ChaCha8Rng) -> Result<Vec<T>> {
        self.check_dims(x.len(), u.len())?;
        let u = self.clamp_control(u);
        let next = if self.model.membership(&(), x, None) > T::zero() {
            let f = self.model.flow(&(), x, &u, None);
            x.iter().zip(f).map(|(&xi, fi)| xi + fi * self.dt).collect::<Vec<T>>()
        } else {
            self.model.jump(&(), x, rng, None)
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState);
        }
        Ok(next)
    }

    /// Smoothed step. Works on plain scalars and on batched tape values.
    pub fn smooth_step<V: Real<T>>(&self, ctx: &V::Ctx, x: &[V], u: &[V], rng: &mut ChaCha8Rng) -> Result<Vec<V>> {
        self.check_dims(x.len(), u.len())?;
        let sharp = Some(self.w);
        let u: Vec<V> =
            u.iter().zip(self.u_min.iter().zip(&self.u_max)).map(|(v, (&lo, &hi))| v.clamp(lo, hi)).collect();
        let blend = indicator(&self.model.membership(ctx, x, sharp), sharp);
        let f = self.model.flow(ctx, x, &u, sharp);
        let h = self.model.jump(ctx, x, rng, sharp);
        let one_minus = -blend.clone() + T::one();
        let next: Vec<V> = x
            .iter()
            .zip(f)
            .zip(h)
            .map(|((xi, fi), hi)| blend.clone() * (xi.clone() + fi * self.dt) + one_minus.clone() * hi)
            .collect();
        if next.iter().any(|v| !v.all_finite()) {
            return Err(Error::NonFiniteState);
        }
        Ok(next)
    }

    /// Exact rollout of `controls` (one row per step) from `x0`.
    pub fn rollout_hard(&self, x0: &[T], controls: &[Vec<T>], rng: &mut ChaCha8Rng) -> Result<RolloutResult<T>> {
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(x0.to_vec());
        for u in controls {
            let next = self.hard_step(states.last().unwrap(), u, rng)?;
            states.push(next);
        }
        let applied = controls.iter().map(|u| self.clamp_control(u)).collect();
        Ok(RolloutResult { trace: Trace::from_states(self.schema().to_vec(), states, self.dt.f64())?, controls: applied })
    }

    /// Smoothed rollout; `x0` and `controls` may be batched tape values.
    pub fn rollout_smooth<V: Real<T>>(
        &self,
        ctx: &V::Ctx,
        x0: &[V],
        controls: &[Vec<V>],
        rng: &mut ChaCha8Rng,
    ) -> Result<RolloutResult<V>> {
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(x0.to_vec());
        for u in controls {
            let next = self.smooth_step(ctx, states.last().unwrap(), u, rng)?;
            states.push(next);
        }
        Ok(RolloutResult {
            trace: Trace::from_states(self.schema().to_vec(), states, self.dt.f64())?,
            controls: controls.to_vec(),
        })
    }

    /// Exact or smoothed rollout on plain scalars, seeded from `reset_seed`.
    pub fn rollout(&self, x0: &[T], controls: &[Vec<T>], mode: Mode) -> Result<RolloutResult<T>> {
        let mut rng = self.reset_rng();
        match mode {
            Mode::Hard => self.rollout_hard(x0, controls, &mut rng),
            Mode::Smooth => self.rollout_smooth(&(), x0, controls, &mut rng),
        }
    }
}
