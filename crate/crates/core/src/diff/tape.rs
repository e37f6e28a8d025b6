//! Append-only reverse-mode tape over dense arrays.
//!
//! Every node stores its forward value as a row-major `rows x cols` array.
//! Elementwise binary ops accept equal shapes or a `1 x 1` operand that is
//! broadcast. Node inputs always point at earlier nodes, so one reverse
//! sweep over the node list visits each node exactly once.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::rc::Rc;

use super::kernels;
use crate::error::{Error, Result};
use crate::num::Scalar;

pub type Shape = (usize, usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Square(usize),
    Sqrt(usize),
    Exp(usize),
    Log(usize),
    Tanh(usize),
    Sin(usize),
    Cos(usize),
    Relu(usize),
    Abs(usize),
    /// Value shifted by a piecewise constant; derivative one.
    PassThrough(usize),
    /// Derivative one inside `[lo, hi]`, zero outside.
    Clamp(usize, T, T),
    Scale(usize, T),
    ClipSmooth(usize, T, T),
    Sum(usize),
    Mean(usize),
    Dot(usize, usize),
    MatVec(usize, usize),
    Affine(usize, usize, usize),
    Linear(usize, usize, usize),
    Column(usize, usize),
    StackColumns(Vec<usize>),
    SmoothMax(Vec<usize>, T),
    Select(Vec<usize>, Vec<u32>),
}

struct Node<T> {
    op: Op<T>,
    value: Vec<T>,
    shape: Shape,
}

struct Inner<T> {
    nodes: Vec<Node<T>>,
}

/// Recording tape. Cheap to clone; clones share the same node list.
pub struct Tape<T> {
    inner: Rc<RefCell<Inner<T>>>,
}

impl<T> Clone for Tape<T> {
    fn clone(&self) -> Self {
        Tape { inner: Rc::clone(&self.inner) }
    }
}

impl<T> Default for Tape<T> {
    fn default() -> Self {
        Tape { inner: Rc::new(RefCell::new(Inner { nodes: Vec::new() })) }
    }
}

impl<T> fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tape({} nodes)", self.inner.borrow().nodes.len())
    }
}

/// Handle to one node of a [`Tape`].
pub struct Var<T> {
    tape: Tape<T>,
    id: usize,
}

impl<T> Clone for Var<T> {
    fn clone(&self) -> Self {
        Var { tape: self.tape.clone(), id: self.id }
    }
}

impl<T: Scalar> fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self.tape.inner.borrow();
        let n = &inner.nodes[self.id];
        write!(f, "Var#{}{:?}", self.id, n.shape)?;
        if n.value.len() <= 4 {
            write!(f, "{:?}", n.value)?;
        }
        Ok(())
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, op: Op<T>, value: Vec<T>, shape: Shape) -> Var<T> {
        debug_assert_eq!(value.len(), shape.0 * shape.1);
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node { op, value, shape });
        Var { tape: self.clone(), id: inner.nodes.len() - 1 }
    }

    /// Input node with the given row-major data.
    pub fn leaf(&self, value: Vec<T>, shape: Shape) -> Var<T> {
        assert_eq!(value.len(), shape.0 * shape.1, "leaf data does not match shape");
        self.push(Op::Leaf, value, shape)
    }

    pub fn scalar(&self, v: T) -> Var<T> {
        self.leaf(vec![v], (1, 1))
    }

    /// Column vector.
    pub fn vector(&self, v: Vec<T>) -> Var<T> {
        let n = v.len();
        self.leaf(v, (n, 1))
    }

    pub fn matrix(&self, rows: usize, cols: usize, data: Vec<T>) -> Var<T> {
        self.leaf(data, (rows, cols))
    }

    fn same_tape(&self, v: &Var<T>) {
        assert!(Rc::ptr_eq(&self.inner, &v.tape.inner), "variables belong to different tapes");
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: &Var<T>) -> Result<Gradients<T>> {
        self.same_tape(output);
        let inner = self.inner.borrow();
        let nodes = &inner.nodes;
        let out = &nodes[output.id];
        if out.shape != (1, 1) {
            return Err(Error::NonScalarOutput(out.shape));
        }
        let mut adj: Vec<Option<Vec<T>>> = vec![None; nodes.len()];
        adj[output.id] = Some(vec![T::one()]);
        for i in (0..=output.id).rev() {
            let Some(g) = adj[i].take() else { continue };
            backprop(nodes, i, &g, &mut adj);
            adj[i] = Some(g);
        }
        Ok(Gradients { adj })
    }
}

fn acc<'a, T: Scalar>(adj: &'a mut [Option<Vec<T>>], nodes: &[Node<T>], id: usize) -> &'a mut Vec<T> {
    adj[id].get_or_insert_with(|| vec![T::zero(); nodes[id].value.len()])
}

/// Adds an elementwise contribution, summing when the input was broadcast.
fn acc_elem<T: Scalar>(
    adj: &mut [Option<Vec<T>>],
    nodes: &[Node<T>],
    id: usize,
    n: usize,
    f: impl Fn(usize) -> T,
) {
    let a = acc(adj, nodes, id);
    if a.len() == 1 && n != 1 {
        let mut s = T::zero();
        for e in 0..n {
            s += f(e);
        }
        a[0] += s;
    } else {
        for (e, ae) in a.iter_mut().enumerate() {
            *ae += f(e);
        }
    }
}

#[inline]
fn at<T: Copy>(v: &[T], e: usize) -> T {
    if v.len() == 1 {
        v[0]
    } else {
        v[e]
    }
}

fn backprop<T: Scalar>(nodes: &[Node<T>], i: usize, g: &[T], adj: &mut [Option<Vec<T>>]) {
    let node = &nodes[i];
    let n = g.len();
    let y = &node.value;
    let val = |id: usize| -> &[T] { &nodes[id].value };
    let one = T::one();
    let two = one + one;
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            acc_elem(adj, nodes, *a, n, |e| g[e]);
            acc_elem(adj, nodes, *b, n, |e| g[e]);
        }
        Op::Sub(a, b) => {
            acc_elem(adj, nodes, *a, n, |e| g[e]);
            acc_elem(adj, nodes, *b, n, |e| -g[e]);
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            acc_elem(adj, nodes, *a, n, |e| g[e] * at(vb, e));
            acc_elem(adj, nodes, *b, n, |e| g[e] * at(va, e));
        }
        Op::Div(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            acc_elem(adj, nodes, *a, n, |e| g[e] / at(vb, e));
            acc_elem(adj, nodes, *b, n, |e| {
                let d = at(vb, e);
                -g[e] * at(va, e) / (d * d)
            });
        }
        Op::Neg(a) => acc_elem(adj, nodes, *a, n, |e| -g[e]),
        Op::Square(a) => {
            let va = val(*a);
            acc_elem(adj, nodes, *a, n, |e| g[e] * two * va[e]);
        }
        // Zero subgradient at the origin keeps distances to a reached goal finite.
        Op::Sqrt(a) => acc_elem(adj, nodes, *a, n, |e| if y[e] > T::zero() { g[e] / (two * y[e]) } else { T::zero() }),
        Op::Exp(a) => acc_elem(adj, nodes, *a, n, |e| g[e] * y[e]),
        Op::Log(a) => {
            let va = val(*a);
            acc_elem(adj, nodes, *a, n, |e| g[e] / va[e]);
        }
        Op::Tanh(a) => acc_elem(adj, nodes, *a, n, |e| g[e] * (one - y[e] * y[e])),
        Op::Sin(a) => {
            let va = val(*a);
            acc_elem(adj, nodes, *a, n, |e| g[e] * va[e].cos());
        }
        Op::Cos(a) => {
            let va = val(*a);
            acc_elem(adj, nodes, *a, n, |e| -g[e] * va[e].sin());
        }
        Op::Relu(a) => {
            let va = val(*a);
            acc_elem(adj, nodes, *a, n, |e| if va[e] > T::zero() { g[e] } else { T::zero() });
        }
        Op::Abs(a) => {
            let va = val(*a);
            acc_elem(adj, nodes, *a, n, |e| {
                if va[e] > T::zero() {
                    g[e]
                } else if va[e] < T::zero() {
                    -g[e]
                } else {
                    T::zero()
                }
            });
        }
        Op::PassThrough(a) => acc_elem(adj, nodes, *a, n, |e| g[e]),
        Op::Clamp(a, lo, hi) => {
            let va = val(*a);
            let (lo, hi) = (*lo, *hi);
            acc_elem(adj, nodes, *a, n, |e| if va[e] >= lo && va[e] <= hi { g[e] } else { T::zero() });
        }
        Op::Scale(a, c) => {
            let c = *c;
            acc_elem(adj, nodes, *a, n, |e| g[e] * c);
        }
        Op::ClipSmooth(a, lo, hi) => {
            // y = mid + half tanh((x - mid)/half)  =>  dy/dx = 1 - tanh^2
            let (mid, half) = kernels::mid_half(*lo, *hi);
            acc_elem(adj, nodes, *a, n, |e| {
                let th = (y[e] - mid) / half;
                g[e] * (one - th * th)
            });
        }
        Op::Sum(a) => {
            let m = nodes[*a].value.len();
            let a = acc(adj, nodes, *a);
            for ae in a.iter_mut().take(m) {
                *ae += g[0];
            }
        }
        Op::Mean(a) => {
            let m = nodes[*a].value.len();
            let s = g[0] / T::of(m as f64);
            let a = acc(adj, nodes, *a);
            for ae in a.iter_mut() {
                *ae += s;
            }
        }
        Op::Dot(a, b) => {
            let (va, vb) = (val(*a).to_vec(), val(*b).to_vec());
            kernels::axpy(g[0], &vb, acc(adj, nodes, *a));
            kernels::axpy(g[0], &va, acc(adj, nodes, *b));
        }
        Op::MatVec(w, x) | Op::Affine(w, x, _) => {
            let (out, inp) = nodes[*w].shape;
            let (vw, vx) = (val(*w).to_vec(), val(*x).to_vec());
            let mut dw = vec![T::zero(); out * inp];
            let mut db = vec![T::zero(); out];
            kernels::linear_grad_params(g, 1, inp, &vx, out, &mut dw, &mut db);
            kernels::linear_grad_input(g, 1, inp, &vw, out, acc(adj, nodes, *x));
            kernels::axpy(one, &dw, acc(adj, nodes, *w));
            if let Op::Affine(_, _, b) = &node.op {
                kernels::axpy(one, &db, acc(adj, nodes, *b));
            }
        }
        Op::Linear(x, w, b) => {
            let (batch, inp) = nodes[*x].shape;
            let out = nodes[*w].shape.0;
            let mut dw = vec![T::zero(); out * inp];
            let mut db = vec![T::zero(); out];
            kernels::linear_grad_params(g, batch, inp, val(*x), out, &mut dw, &mut db);
            let vw = val(*w).to_vec();
            kernels::linear_grad_input(g, batch, inp, &vw, out, acc(adj, nodes, *x));
            kernels::axpy(one, &dw, acc(adj, nodes, *w));
            kernels::axpy(one, &db, acc(adj, nodes, *b));
        }
        Op::Column(x, j) => {
            let (rows, cols) = nodes[*x].shape;
            let j = *j;
            let a = acc(adj, nodes, *x);
            for r in 0..rows {
                a[r * cols + j] += g[r];
            }
        }
        Op::StackColumns(ids) => {
            let (rows, cols) = node.shape;
            for (j, &id) in ids.iter().enumerate() {
                let a = acc(adj, nodes, id);
                if a.len() == 1 {
                    for r in 0..rows {
                        a[0] += g[r * cols + j];
                    }
                } else {
                    for r in 0..rows {
                        a[r] += g[r * cols + j];
                    }
                }
            }
        }
        Op::SmoothMax(ids, k) => {
            // d/dx_i = exp(k (x_i - y))
            let k = *k;
            for &id in ids {
                let vx = val(id).to_vec();
                acc_elem(adj, nodes, id, n, |e| g[e] * ((at(&vx, e) - y[e]) * k).exp());
            }
        }
        Op::Select(ids, choice) => {
            for (slot, &id) in ids.iter().enumerate() {
                acc_elem(adj, nodes, id, n, |e| if choice[e] as usize == slot { g[e] } else { T::zero() });
            }
        }
    }
}

/// Adjoints produced by [`Tape::backward`], indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    adj: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Adjoint of `v`; zeros when the output does not depend on it.
    pub fn wrt(&self, v: &Var<T>) -> Vec<T> {
        match self.adj.get(v.id).and_then(|a| a.as_ref()) {
            Some(a) => a.clone(),
            None => vec![T::zero(); v.len()],
        }
    }

    /// Adjoint by raw node id.
    pub fn by_id(&self, id: usize) -> Option<&[T]> {
        self.adj.get(id).and_then(|a| a.as_deref())
    }
}

fn broadcast_shape(op: &'static str, a: Shape, b: Shape) -> Result<Shape> {
    if a == b || b == (1, 1) {
        Ok(a)
    } else if a == (1, 1) {
        Ok(b)
    } else {
        Err(Error::ShapeMismatch { op, lhs: a, rhs: b })
    }
}

impl<T: Scalar> Var<T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &Tape<T> {
        &self.tape
    }

    pub fn shape(&self) -> Shape {
        self.tape.inner.borrow().nodes[self.id].shape
    }

    pub fn len(&self) -> usize {
        let s = self.shape();
        s.0 * s.1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copy of the forward value.
    pub fn value(&self) -> Vec<T> {
        self.tape.inner.borrow().nodes[self.id].value.clone()
    }

    /// Forward value of a single-element node.
    pub fn item(&self) -> T {
        let inner = self.tape.inner.borrow();
        let n = &inner.nodes[self.id];
        assert_eq!(n.value.len(), 1, "item() on non-scalar");
        n.value[0]
    }

    fn with_value<R>(&self, f: impl FnOnce(&[T], Shape) -> R) -> R {
        let inner = self.tape.inner.borrow();
        let n = &inner.nodes[self.id];
        f(&n.value, n.shape)
    }

    fn unary(&self, op: Op<T>, f: impl Fn(T) -> T) -> Var<T> {
        let (value, shape) = self.with_value(|v, s| (v.iter().map(|&x| f(x)).collect(), s));
        self.tape.push(op, value, shape)
    }

    fn binary(&self, other: &Var<T>, name: &'static str, f: impl Fn(T, T) -> T) -> Result<(Vec<T>, Shape)> {
        self.tape.same_tape(other);
        let inner = self.tape.inner.borrow();
        let (a, b) = (&inner.nodes[self.id], &inner.nodes[other.id]);
        let shape = broadcast_shape(name, a.shape, b.shape)?;
        let n = shape.0 * shape.1;
        let value = (0..n).map(|e| f(at(&a.value, e), at(&b.value, e))).collect();
        Ok((value, shape))
    }

    pub fn try_add(&self, o: &Var<T>) -> Result<Var<T>> {
        let (v, s) = self.binary(o, "add", |a, b| a + b)?;
        Ok(self.tape.push(Op::Add(self.id, o.id), v, s))
    }

    pub fn try_sub(&self, o: &Var<T>) -> Result<Var<T>> {
        let (v, s) = self.binary(o, "sub", |a, b| a - b)?;
        Ok(self.tape.push(Op::Sub(self.id, o.id), v, s))
    }

    pub fn try_mul(&self, o: &Var<T>) -> Result<Var<T>> {
        let (v, s) = self.binary(o, "mul", |a, b| a * b)?;
        Ok(self.tape.push(Op::Mul(self.id, o.id), v, s))
    }

    /// Elementwise division; a zero divisor is a domain error.
    pub fn try_div(&self, o: &Var<T>) -> Result<Var<T>> {
        if let Some(&z) = o.value().iter().find(|d| **d == T::zero()) {
            return Err(Error::Domain { op: "div", value: z.f64() });
        }
        let (v, s) = self.binary(o, "div", |a, b| a / b)?;
        Ok(self.tape.push(Op::Div(self.id, o.id), v, s))
    }

    /// Natural log; non-positive inputs are a domain error.
    pub fn try_ln(&self) -> Result<Var<T>> {
        if let Some(&z) = self.value().iter().find(|x| **x <= T::zero()) {
            return Err(Error::Domain { op: "log", value: z.f64() });
        }
        Ok(self.unary(Op::Log(self.id), T::ln))
    }

    pub fn try_sqrt(&self) -> Result<Var<T>> {
        if let Some(&z) = self.value().iter().find(|x| **x < T::zero()) {
            return Err(Error::Domain { op: "sqrt", value: z.f64() });
        }
        Ok(self.unary(Op::Sqrt(self.id), T::sqrt))
    }

    pub fn neg(&self) -> Var<T> {
        self.unary(Op::Neg(self.id), |x| -x)
    }

    pub fn square(&self) -> Var<T> {
        self.unary(Op::Square(self.id), |x| x * x)
    }

    pub fn exp(&self) -> Var<T> {
        self.unary(Op::Exp(self.id), T::exp)
    }

    pub fn tanh(&self) -> Var<T> {
        self.unary(Op::Tanh(self.id), T::tanh)
    }

    pub fn sin(&self) -> Var<T> {
        self.unary(Op::Sin(self.id), T::sin)
    }

    pub fn cos(&self) -> Var<T> {
        self.unary(Op::Cos(self.id), T::cos)
    }

    pub fn relu(&self) -> Var<T> {
        self.unary(Op::Relu(self.id), |x| if x > T::zero() { x } else { T::zero() })
    }

    pub fn abs(&self) -> Var<T> {
        self.unary(Op::Abs(self.id), T::abs)
    }

    /// Euclidean remainder by a positive constant.
    pub fn rem_euclid(&self, p: T) -> Var<T> {
        self.unary(Op::PassThrough(self.id), |x| {
            let r = x % p;
            if r < T::zero() {
                r + p
            } else {
                r
            }
        })
    }

    pub fn clamp(&self, lo: T, hi: T) -> Var<T> {
        self.unary(Op::Clamp(self.id, lo, hi), |x| x.max(lo).min(hi))
    }

    /// `c * x`
    pub fn scale(&self, c: T) -> Var<T> {
        self.unary(Op::Scale(self.id, c), |x| x * c)
    }

    /// `x + c`
    pub fn shift(&self, c: T) -> Var<T> {
        self.unary(Op::PassThrough(self.id), |x| x + c)
    }

    /// Squashes into `(lo, hi)` with a scaled tanh.
    pub fn clip_smooth(&self, lo: T, hi: T) -> Var<T> {
        self.unary(Op::ClipSmooth(self.id, lo, hi), |x| kernels::clip_smooth(x, lo, hi))
    }

    /// Zero-gradient copy with every element mapped through `f`.
    pub fn detached_map(&self, f: impl Fn(T) -> T) -> Var<T> {
        let (value, shape) = self.with_value(|v, s| (v.iter().map(|&x| f(x)).collect(), s));
        self.tape.push(Op::Leaf, value, shape)
    }

    pub fn sum(&self) -> Var<T> {
        let s = self.with_value(|v, _| v.iter().copied().sum());
        self.tape.push(Op::Sum(self.id), vec![s], (1, 1))
    }

    pub fn mean(&self) -> Var<T> {
        let s = self.with_value(|v, _| v.iter().copied().sum::<T>() / T::of(v.len() as f64));
        self.tape.push(Op::Mean(self.id), vec![s], (1, 1))
    }

    pub fn try_dot(&self, o: &Var<T>) -> Result<Var<T>> {
        self.tape.same_tape(o);
        let (sa, sb) = (self.shape(), o.shape());
        if sa.0 * sa.1 != sb.0 * sb.1 {
            return Err(Error::ShapeMismatch { op: "dot", lhs: sa, rhs: sb });
        }
        let v = {
            let inner = self.tape.inner.borrow();
            kernels::dot(&inner.nodes[self.id].value, &inner.nodes[o.id].value)
        };
        Ok(self.tape.push(Op::Dot(self.id, o.id), vec![v], (1, 1)))
    }

    /// `W x` for `W: out x inp`, `x: inp x 1`.
    pub fn try_matvec(&self, x: &Var<T>) -> Result<Var<T>> {
        let (y, out) = self.matvec_value(x, None)?;
        Ok(self.tape.push(Op::MatVec(self.id, x.id), y, (out, 1)))
    }

    /// `W x + b`.
    pub fn try_affine(&self, x: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        let (y, out) = self.matvec_value(x, Some(b))?;
        Ok(self.tape.push(Op::Affine(self.id, x.id, b.id), y, (out, 1)))
    }

    fn matvec_value(&self, x: &Var<T>, b: Option<&Var<T>>) -> Result<(Vec<T>, usize)> {
        self.tape.same_tape(x);
        let inner = self.tape.inner.borrow();
        let w = &inner.nodes[self.id];
        let xv = &inner.nodes[x.id];
        let (out, inp) = w.shape;
        if xv.shape != (inp, 1) {
            return Err(Error::ShapeMismatch { op: "matvec", lhs: w.shape, rhs: xv.shape });
        }
        let zeros;
        let bias: &[T] = match b {
            Some(b) => {
                let bn = &inner.nodes[b.id];
                if bn.shape != (out, 1) {
                    return Err(Error::ShapeMismatch { op: "affine", lhs: w.shape, rhs: bn.shape });
                }
                &bn.value
            }
            None => {
                zeros = vec![T::zero(); out];
                &zeros
            }
        };
        Ok((kernels::linear(&xv.value, 1, inp, &w.value, out, bias), out))
    }

    /// Row-batched affine map: `self` is `batch x inp`, `w` is `out x inp`,
    /// `b` is `out x 1`; result is `batch x out`.
    pub fn try_linear(&self, w: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        self.tape.same_tape(w);
        self.tape.same_tape(b);
        let (y, shape) = {
            let inner = self.tape.inner.borrow();
            let (x, wn, bn) = (&inner.nodes[self.id], &inner.nodes[w.id], &inner.nodes[b.id]);
            let (batch, inp) = x.shape;
            let (out, winp) = wn.shape;
            if winp != inp {
                return Err(Error::ShapeMismatch { op: "linear", lhs: x.shape, rhs: wn.shape });
            }
            if bn.shape != (out, 1) {
                return Err(Error::ShapeMismatch { op: "linear bias", lhs: wn.shape, rhs: bn.shape });
            }
            (kernels::linear(&x.value, batch, inp, &wn.value, out, &bn.value), (batch, out))
        };
        Ok(self.tape.push(Op::Linear(self.id, w.id, b.id), y, shape))
    }

    /// Column `j` of a `rows x cols` node as a `rows x 1` node.
    pub fn column(&self, j: usize) -> Var<T> {
        let (v, rows) = self.with_value(|v, (rows, cols)| {
            assert!(j < cols, "column {j} out of range for {cols} columns");
            ((0..rows).map(|r| v[r * cols + j]).collect::<Vec<_>>(), rows)
        });
        self.tape.push(Op::Column(self.id, j), v, (rows, 1))
    }

    /// Builds a `rows x n` matrix from `n` column vectors (`1 x 1` columns
    /// broadcast down the rows).
    pub fn try_stack_columns(cols: &[Var<T>]) -> Result<Var<T>> {
        let first = cols.first().expect("stack_columns of nothing");
        let tape = first.tape.clone();
        let inner = tape.inner.borrow();
        let mut rows = 1;
        for c in cols {
            tape.same_tape(c);
            let s = inner.nodes[c.id].shape;
            if s.1 != 1 {
                return Err(Error::ShapeMismatch { op: "stack_columns", lhs: s, rhs: (rows, 1) });
            }
            if s.0 != 1 {
                if rows != 1 && rows != s.0 {
                    return Err(Error::ShapeMismatch { op: "stack_columns", lhs: s, rhs: (rows, 1) });
                }
                rows = s.0;
            }
        }
        let n = cols.len();
        let mut v = vec![T::zero(); rows * n];
        for (j, c) in cols.iter().enumerate() {
            let cv = &inner.nodes[c.id].value;
            for r in 0..rows {
                v[r * n + j] = at(cv, r);
            }
        }
        drop(inner);
        Ok(tape.push(Op::StackColumns(cols.iter().map(|c| c.id).collect()), v, (rows, n)))
    }

    fn list_shape(name: &'static str, xs: &[Var<T>]) -> Result<Shape> {
        let first = xs.first().expect("empty operand list");
        let mut shape = (1, 1);
        for x in xs {
            first.tape.same_tape(x);
            shape = broadcast_shape(name, shape, x.shape())?;
        }
        Ok(shape)
    }

    /// Elementwise `(1/k) ln sum_i exp(k x_i)` with max shift.
    pub fn try_smooth_max(xs: &[Var<T>], k: T) -> Result<Var<T>> {
        if xs.len() == 1 {
            return Ok(xs[0].clone());
        }
        let shape = Self::list_shape("smooth_max", xs)?;
        let n = shape.0 * shape.1;
        let tape = xs[0].tape.clone();
        let value = {
            let inner = tape.inner.borrow();
            let vals: Vec<&[T]> = xs.iter().map(|x| inner.nodes[x.id].value.as_slice()).collect();
            let mut buf = vec![T::zero(); xs.len()];
            (0..n)
                .map(|e| {
                    for (b, v) in buf.iter_mut().zip(&vals) {
                        *b = at(v, e);
                    }
                    kernels::smooth_max(&buf, k)
                })
                .collect()
        };
        Ok(tape.push(Op::SmoothMax(xs.iter().map(|x| x.id).collect(), k), value, shape))
    }

    pub fn try_smooth_min(xs: &[Var<T>], k: T) -> Result<Var<T>> {
        let neg: Vec<Var<T>> = xs.iter().map(|x| x.neg()).collect();
        Ok(Self::try_smooth_max(&neg, k)?.neg())
    }

    fn select(xs: &[Var<T>], pick_max: bool) -> Result<Var<T>> {
        if xs.len() == 1 {
            return Ok(xs[0].clone());
        }
        let shape = Self::list_shape("select", xs)?;
        let n = shape.0 * shape.1;
        let tape = xs[0].tape.clone();
        let (value, choice) = {
            let inner = tape.inner.borrow();
            let vals: Vec<&[T]> = xs.iter().map(|x| inner.nodes[x.id].value.as_slice()).collect();
            let mut value = Vec::with_capacity(n);
            let mut choice = Vec::with_capacity(n);
            for e in 0..n {
                let mut best = 0usize;
                for (i, v) in vals.iter().enumerate().skip(1) {
                    let (cur, cand) = (at(vals[best], e), at(v, e));
                    if (pick_max && cand > cur) || (!pick_max && cand < cur) {
                        best = i;
                    }
                }
                value.push(at(vals[best], e));
                choice.push(best as u32);
            }
            (value, choice)
        };
        Ok(tape.push(Op::Select(xs.iter().map(|x| x.id).collect(), choice), value, shape))
    }

    /// Exact elementwise maximum; the gradient flows to the first maximizer.
    pub fn try_max_of(xs: &[Var<T>]) -> Result<Var<T>> {
        Self::select(xs, true)
    }

    pub fn try_min_of(xs: &[Var<T>]) -> Result<Var<T>> {
        Self::select(xs, false)
    }
}

macro_rules! var_binop {
    ($tr:ident, $m:ident, $try:ident) => {
        impl<T: Scalar> $tr for Var<T> {
            type Output = Var<T>;
            fn $m(self, rhs: Var<T>) -> Var<T> {
                self.$try(&rhs).expect(concat!("Var ", stringify!($m)))
            }
        }
        impl<T: Scalar> $tr<&Var<T>> for &Var<T> {
            type Output = Var<T>;
            fn $m(self, rhs: &Var<T>) -> Var<T> {
                self.$try(rhs).expect(concat!("Var ", stringify!($m)))
            }
        }
    };
}

var_binop!(Add, add, try_add);
var_binop!(Sub, sub, try_sub);
var_binop!(Mul, mul, try_mul);

impl<T: Scalar> Neg for Var<T> {
    type Output = Var<T>;
    fn neg(self) -> Var<T> {
        Var::neg(&self)
    }
}

impl<T: Scalar> Add<T> for Var<T> {
    type Output = Var<T>;
    fn add(self, c: T) -> Var<T> {
        self.shift(c)
    }
}

impl<T: Scalar> Sub<T> for Var<T> {
    type Output = Var<T>;
    fn sub(self, c: T) -> Var<T> {
        self.shift(-c)
    }
}

impl<T: Scalar> Mul<T> for Var<T> {
    type Output = Var<T>;
    fn mul(self, c: T) -> Var<T> {
        self.scale(c)
    }
}
