//! [`Real`]: the value abstraction shared by exact and differentiable code.
//!
//! Dynamics, expression evaluation and robustness are written once against
//! `Real<T>`. Plain scalars give exact evaluation; [`Var`] values record onto
//! a tape and carry a batch of samples elementwise.

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::Float;
use rand::Rng;

use super::kernels;
use super::tape::{Tape, Var};
use crate::num::Scalar;

pub trait Real<T: Scalar>:
    Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<T, Output = Self>
    + Sub<T, Output = Self>
    + Mul<T, Output = Self>
{
    /// What is needed to mint new values (nothing for scalars, a tape and
    /// batch size for tape values).
    type Ctx: Clone + Debug;

    fn constant(ctx: &Self::Ctx, c: T) -> Self;

    /// Independent uniform draws in `[lo, hi)`, one per batch element.
    fn uniform<R: Rng + ?Sized>(ctx: &Self::Ctx, rng: &mut R, lo: T, hi: T) -> Self;

    /// Like [`Real::uniform`] but picks from a finite set of values.
    fn choose<R: Rng + ?Sized>(ctx: &Self::Ctx, rng: &mut R, options: &[T]) -> Self;

    /// Picks one row of `table` per batch element; returns one value per
    /// column.
    fn gather<R: Rng + ?Sized>(ctx: &Self::Ctx, rng: &mut R, table: &[Vec<T>]) -> Vec<Self>;

    fn div(&self, other: &Self) -> Self;
    fn square(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn abs(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn tanh(&self) -> Self;
    fn rem_euclid(&self, p: T) -> Self;
    /// 1 where the value is `>= 0`, else 0. Carries no gradient.
    fn step(&self) -> Self;
    fn clamp(&self, lo: T, hi: T) -> Self;
    fn max_of(xs: &[Self]) -> Self;
    fn min_of(xs: &[Self]) -> Self;
    fn smooth_max(xs: &[Self], k: T) -> Self;
    fn smooth_min(xs: &[Self], k: T) -> Self;
    /// True when every batch entry is finite.
    fn all_finite(&self) -> bool;
}

impl<T: Scalar> Real<T> for T {
    type Ctx = ();

    fn constant(_: &(), c: T) -> T {
        c
    }

    fn uniform<R: Rng + ?Sized>(_: &(), rng: &mut R, lo: T, hi: T) -> T {
        lo + (hi - lo) * T::of(rng.random::<f64>())
    }

    fn choose<R: Rng + ?Sized>(_: &(), rng: &mut R, options: &[T]) -> T {
        options[rng.random_range(0..options.len())]
    }

    fn gather<R: Rng + ?Sized>(_: &(), rng: &mut R, table: &[Vec<T>]) -> Vec<T> {
        table[rng.random_range(0..table.len())].clone()
    }

    fn div(&self, other: &T) -> T {
        *self / *other
    }
    fn square(&self) -> T {
        *self * *self
    }
    fn sqrt(&self) -> T {
        Float::sqrt(*self)
    }
    fn abs(&self) -> T {
        Float::abs(*self)
    }
    fn exp(&self) -> T {
        Float::exp(*self)
    }
    fn ln(&self) -> T {
        Float::ln(*self)
    }
    fn sin(&self) -> T {
        Float::sin(*self)
    }
    fn cos(&self) -> T {
        Float::cos(*self)
    }
    fn tanh(&self) -> T {
        Float::tanh(*self)
    }
    fn rem_euclid(&self, p: T) -> T {
        let r = *self % p;
        if r < T::zero() {
            r + p
        } else {
            r
        }
    }
    fn step(&self) -> T {
        if *self >= T::zero() {
            T::one()
        } else {
            T::zero()
        }
    }
    fn clamp(&self, lo: T, hi: T) -> T {
        self.max(lo).min(hi)
    }
    fn max_of(xs: &[T]) -> T {
        xs.iter().copied().fold(T::neg_infinity(), T::max)
    }
    fn min_of(xs: &[T]) -> T {
        xs.iter().copied().fold(T::infinity(), T::min)
    }
    fn smooth_max(xs: &[T], k: T) -> T {
        kernels::smooth_max(xs, k)
    }
    fn smooth_min(xs: &[T], k: T) -> T {
        kernels::smooth_min(xs, k)
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

/// Context for minting tape values: the tape and the batch width.
#[derive(Clone, Debug)]
pub struct VarCtx<T> {
    pub tape: Tape<T>,
    pub batch: usize,
}

impl<T: Scalar> VarCtx<T> {
    pub fn new(tape: Tape<T>, batch: usize) -> Self {
        assert!(batch >= 1);
        VarCtx { tape, batch }
    }
}

impl<T: Scalar> Real<T> for Var<T> {
    type Ctx = VarCtx<T>;

    fn constant(ctx: &VarCtx<T>, c: T) -> Var<T> {
        ctx.tape.scalar(c)
    }

    fn uniform<R: Rng + ?Sized>(ctx: &VarCtx<T>, rng: &mut R, lo: T, hi: T) -> Var<T> {
        let v = (0..ctx.batch).map(|_| <T as Real<T>>::uniform(&(), rng, lo, hi)).collect();
        ctx.tape.vector(v)
    }

    fn choose<R: Rng + ?Sized>(ctx: &VarCtx<T>, rng: &mut R, options: &[T]) -> Var<T> {
        let v = (0..ctx.batch).map(|_| <T as Real<T>>::choose(&(), rng, options)).collect();
        ctx.tape.vector(v)
    }

    fn gather<R: Rng + ?Sized>(ctx: &VarCtx<T>, rng: &mut R, table: &[Vec<T>]) -> Vec<Var<T>> {
        let rows: Vec<&Vec<T>> = (0..ctx.batch).map(|_| &table[rng.random_range(0..table.len())]).collect();
        (0..table[0].len()).map(|c| ctx.tape.vector(rows.iter().map(|r| r[c]).collect())).collect()
    }

    fn div(&self, other: &Var<T>) -> Var<T> {
        self.try_div(other).expect("tape division")
    }
    fn square(&self) -> Var<T> {
        Var::square(self)
    }
    fn sqrt(&self) -> Var<T> {
        self.try_sqrt().expect("tape sqrt")
    }
    fn abs(&self) -> Var<T> {
        Var::abs(self)
    }
    fn exp(&self) -> Var<T> {
        Var::exp(self)
    }
    fn ln(&self) -> Var<T> {
        self.try_ln().expect("tape log")
    }
    fn sin(&self) -> Var<T> {
        Var::sin(self)
    }
    fn cos(&self) -> Var<T> {
        Var::cos(self)
    }
    fn tanh(&self) -> Var<T> {
        Var::tanh(self)
    }
    fn rem_euclid(&self, p: T) -> Var<T> {
        Var::rem_euclid(self, p)
    }
    fn step(&self) -> Var<T> {
        self.detached_map(|x| <T as Real<T>>::step(&x))
    }
    fn clamp(&self, lo: T, hi: T) -> Var<T> {
        Var::clamp(self, lo, hi)
    }
    fn max_of(xs: &[Var<T>]) -> Var<T> {
        Var::try_max_of(xs).expect("tape max")
    }
    fn min_of(xs: &[Var<T>]) -> Var<T> {
        Var::try_min_of(xs).expect("tape min")
    }
    fn smooth_max(xs: &[Var<T>], k: T) -> Var<T> {
        Var::try_smooth_max(xs, k).expect("tape smooth max")
    }
    fn smooth_min(xs: &[Var<T>], k: T) -> Var<T> {
        Var::try_smooth_min(xs, k).expect("tape smooth min")
    }
    fn all_finite(&self) -> bool {
        self.value().iter().all(|v| v.is_finite())
    }
}

/// Indicator of `arg >= 0`: a hard step, or `(1 + tanh(w arg)) / 2`.
pub fn indicator<T: Scalar, V: Real<T>>(arg: &V, sharpness: Option<T>) -> V {
    match sharpness {
        None => arg.step(),
        Some(w) => (arg.clone() * w).tanh() * T::of(0.5) + T::of(0.5),
    }
}
