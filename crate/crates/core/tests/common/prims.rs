//! Every differentiable tape primitive behind one scalar-valued harness.

use rand::Rng;
use stlnpc::diff::{Shape, Tape, Var};

pub type Build = fn(&Tape<f64>, &[Var<f64>]) -> Var<f64>;

pub struct Prim {
    pub name: &'static str,
    pub shapes: Vec<Shape>,
    pub build: Build,
    /// Input range; positive-only primitives get a positive range.
    pub range: (f64, f64),
    /// Inputs closer than this to a kink are redrawn.
    pub kinks: fn(f64) -> f64,
}

fn smooth(_: f64) -> f64 {
    f64::INFINITY
}

fn at_zero(x: f64) -> f64 {
    x.abs()
}

fn v3() -> Vec<Shape> {
    vec![(3, 1)]
}

fn v3x2() -> Vec<Shape> {
    vec![(3, 1), (3, 1)]
}

pub fn catalog() -> Vec<Prim> {
    let p = |name, shapes, build: Build| Prim { name, shapes, build, range: (-2.0, 2.0), kinks: smooth };
    vec![
        p("add", v3x2(), |_, x| &x[0] + &x[1]),
        p("sub", v3x2(), |_, x| &x[0] - &x[1]),
        p("mul", v3x2(), |_, x| &x[0] * &x[1]),
        Prim { range: (0.5, 2.0), ..p("div", v3x2(), |_, x| x[0].try_div(&x[1]).unwrap()) },
        p("neg", v3(), |_, x| x[0].neg()),
        p("square", v3(), |_, x| x[0].square()),
        p("exp", v3(), |_, x| x[0].exp()),
        Prim { range: (0.5, 2.0), ..p("ln", v3(), |_, x| x[0].try_ln().unwrap()) },
        Prim { range: (0.5, 2.0), ..p("sqrt", v3(), |_, x| x[0].try_sqrt().unwrap()) },
        p("tanh", v3(), |_, x| x[0].tanh()),
        p("sin", v3(), |_, x| x[0].sin()),
        p("cos", v3(), |_, x| x[0].cos()),
        Prim { kinks: at_zero, ..p("relu", v3(), |_, x| x[0].relu()) },
        Prim { kinks: at_zero, ..p("abs", v3(), |_, x| x[0].abs()) },
        Prim { kinks: |x| (x.abs() - 1.0).abs(), ..p("clamp", v3(), |_, x| x[0].clamp(-1.0, 1.0)) },
        Prim { kinks: |x| (x - 1.5 * (x / 1.5).floor()).min(1.5 - (x - 1.5 * (x / 1.5).floor())), ..p("rem_euclid", v3(), |_, x| x[0].rem_euclid(1.5)) },
        p("scale", v3(), |_, x| x[0].scale(-1.7)),
        p("shift", v3(), |_, x| x[0].shift(0.3)),
        p("clip_smooth", v3(), |_, x| x[0].clip_smooth(-1.0, 1.5)),
        p("sum", v3(), |_, x| x[0].sum()),
        p("mean", v3(), |_, x| x[0].mean()),
        p("dot", v3x2(), |_, x| x[0].try_dot(&x[1]).unwrap()),
        p("matvec", vec![(2, 3), (3, 1)], |_, x| x[0].try_matvec(&x[1]).unwrap()),
        p("affine", vec![(2, 3), (3, 1), (2, 1)], |_, x| x[0].try_affine(&x[1], &x[2]).unwrap()),
        p("linear", vec![(2, 3), (2, 3), (2, 1)], |_, x| x[0].try_linear(&x[1], &x[2]).unwrap()),
        p("column", vec![(2, 3)], |_, x| x[0].column(1)),
        p("stack_columns", v3x2(), |_, x| Var::try_stack_columns(&[x[0].clone(), x[1].square()]).unwrap()),
        p("smooth_max", v3x2(), |_, x| Var::try_smooth_max(&[x[0].clone(), x[1].clone()], 1.0).unwrap()),
        p("smooth_min", v3x2(), |_, x| Var::try_smooth_min(&[x[0].clone(), x[1].clone()], 1.0).unwrap()),
        p("broadcast", vec![(1, 1), (3, 1)], |_, x| &x[0] * &x[1]),
    ]
}

impl Prim {
    pub fn input_len(&self) -> usize {
        self.shapes.iter().map(|s| s.0 * s.1).sum()
    }

    /// Draws inputs in range and away from kinks. Binary max/min style
    /// primitives also keep their operands apart.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        loop {
            let x: Vec<f64> = (0..self.input_len()).map(|_| rng.random_range(self.range.0..self.range.1)).collect();
            if x.iter().all(|&v| (self.kinks)(v) > 0.05) {
                return x;
            }
        }
    }

    /// Weighted sum of the primitive's output and its gradient at `x`.
    pub fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let tape = Tape::new();
        let mut off = 0;
        let leaves: Vec<Var<f64>> = self
            .shapes
            .iter()
            .map(|&s| {
                let n = s.0 * s.1;
                let v = tape.leaf(x[off..off + n].to_vec(), s);
                off += n;
                v
            })
            .collect();
        let y = (self.build)(&tape, &leaves);
        let w: Vec<f64> = (0..y.len()).map(|i| 0.7 + 0.3 * i as f64).collect();
        let out = y.try_dot(&tape.vector(w)).unwrap();
        let g = tape.backward(&out).unwrap();
        (out.item(), leaves.iter().flat_map(|l| g.wrt(l)).collect())
    }
}
