//! Multilayer perceptron mapping a state to a horizon of bounded controls.
//!
//! Model file layout (JSON):
//!
//! ```text
//! {
//!   "format": "stlnpc-policy", "version": 1,
//!   "sizes": [n, h1, ..., m*T],          // layer widths, input first
//!   "activations": ["relu", ..., "clip"], // one tag per weight layer
//!   "control_dim": m, "horizon": T,
//!   "u_min": [..m], "u_max": [..m],
//!   "input_center": [..n], "input_scale": [..n],
//!   "params": [...]                       // per layer: W (out x in, row-major), then b
//! }
//! ```
//!
//! Output entry `t * m + j` is control `j` at step `t`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::diff::{kernels, Tape, Var};
use crate::error::{Error, Result};
use crate::num::Scalar;

pub const FORMAT: &str = "stlnpc-policy";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// `mid + half * tanh(z)` into the control bounds.
    Clip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet<T> {
    pub format: String,
    pub version: u32,
    pub sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub control_dim: usize,
    pub horizon: usize,
    pub u_min: Vec<T>,
    pub u_max: Vec<T>,
    pub input_center: Vec<T>,
    pub input_scale: Vec<T>,
    pub params: Vec<T>,
}

/// Network shape and bounds used by [`PolicyNet::init`].
#[derive(Debug, Clone)]
pub struct PolicySpec<T> {
    pub state_dim: usize,
    pub control_dim: usize,
    pub horizon: usize,
    pub hidden: Vec<usize>,
    pub u_min: Vec<T>,
    pub u_max: Vec<T>,
    pub input_center: Vec<T>,
    pub input_scale: Vec<T>,
}

impl<T: Scalar> PolicySpec<T> {
    /// Unnormalized inputs and the default three hidden layers of 256.
    pub fn new(state_dim: usize, control_dim: usize, horizon: usize, u_min: Vec<T>, u_max: Vec<T>) -> Self {
        PolicySpec {
            state_dim,
            control_dim,
            horizon,
            hidden: vec![256, 256, 256],
            u_min,
            u_max,
            input_center: vec![T::zero(); state_dim],
            input_scale: vec![T::one(); state_dim],
        }
    }
}

/// Taped copy of the parameters, one `(W, b)` pair per layer.
pub struct TapedParams<T> {
    pub layers: Vec<(Var<T>, Var<T>)>,
}

impl<T: Scalar> TapedParams<T> {
    /// Gradient of the flat parameter vector.
    pub fn flat_grad(&self, g: &crate::diff::Gradients<T>) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend(g.wrt(w));
            out.extend(g.wrt(b));
        }
        out
    }
}

impl<T: Scalar> PolicyNet<T> {
    /// Uniform `±1/sqrt(fan_in)` weights, zero biases.
    pub fn init(spec: &PolicySpec<T>, seed: u64) -> Result<Self> {
        if spec.state_dim == 0 || spec.control_dim == 0 || spec.horizon == 0 {
            return Err(Error::Config("policy dimensions must be at least one".into()));
        }
        if spec.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layers must be nonempty".into()));
        }
        let mut sizes = vec![spec.state_dim];
        sizes.extend(&spec.hidden);
        sizes.push(spec.control_dim * spec.horizon);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(&sizes));
        for win in sizes.windows(2) {
            let (inp, out) = (win[0], win[1]);
            let bound = 1.0 / (inp as f64).sqrt();
            params.extend((0..inp * out).map(|_| T::of(rng.random_range(-bound..bound))));
            params.extend((0..out).map(|_| T::zero()));
        }
        let mut activations = vec![Activation::Relu; sizes.len() - 2];
        activations.push(Activation::Clip);
        let net = PolicyNet {
            format: FORMAT.into(),
            version: VERSION,
            sizes,
            activations,
            control_dim: spec.control_dim,
            horizon: spec.horizon,
            u_min: spec.u_min.clone(),
            u_max: spec.u_max.clone(),
            input_center: spec.input_center.clone(),
            input_scale: spec.input_scale.clone(),
            params,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Model(m.into()));
        if self.format != FORMAT || self.version != VERSION {
            return bad("unsupported format or version");
        }
        if self.sizes.len() < 2 || self.activations.len() != self.sizes.len() - 1 {
            return bad("layer sizes and activations disagree");
        }
        if self.activations.last() != Some(&Activation::Clip)
            || self.activations[..self.activations.len() - 1].iter().any(|a| *a != Activation::Relu)
        {
            return bad("expected relu hidden layers and a clip output layer");
        }
        if *self.sizes.last().unwrap() != self.control_dim * self.horizon {
            return bad("output width is not control_dim * horizon");
        }
        if self.u_min.len() != self.control_dim || self.u_max.len() != self.control_dim {
            return bad("control bounds have the wrong length");
        }
        if self.u_min.iter().zip(&self.u_max).any(|(a, b)| !(a < b)) {
            return bad("control bounds need u_min < u_max");
        }
        let n = self.sizes[0];
        if self.input_center.len() != n || self.input_scale.len() != n {
            return bad("input normalization has the wrong length");
        }
        if self.input_scale.iter().any(|s| !(*s > T::zero())) {
            return bad("input scales must be positive");
        }
        if self.params.len() != param_count(&self.sizes) {
            return bad("parameter count does not match layer sizes");
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn normalize_into(&self, x: &[T], out: &mut Vec<T>) {
        for ((&v, &c), &s) in x.iter().zip(&self.input_center).zip(&self.input_scale) {
            out.push((v + (-c)) * (T::one() / s));
        }
    }

    /// Controls for a batch of states: `out[b][t][j]`.
    pub fn predict_batch(&self, xs: &[Vec<T>]) -> Result<Vec<Vec<Vec<T>>>> {
        let n = self.state_dim();
        let batch = xs.len();
        let mut h = Vec::with_capacity(batch * n);
        for x in xs {
            if x.len() != n {
                return Err(Error::Dimension { expected: n, got: x.len() });
            }
            self.normalize_into(x, &mut h);
        }
        let mut off = 0;
        let layers = self.sizes.len() - 1;
        for l in 0..layers {
            let (inp, out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + inp * out];
            let b = &self.params[off + inp * out..off + inp * out + out];
            off += inp * out + out;
            h = kernels::linear(&h, batch, inp, w, out, b);
            if l + 1 < layers {
                for v in h.iter_mut() {
                    if !(*v > T::zero()) {
                        *v = T::zero();
                    }
                }
            }
        }
        let (m, width) = (self.control_dim, m_width(self));
        Ok((0..batch)
            .map(|b| {
                (0..self.horizon)
                    .map(|t| {
                        (0..m)
                            .map(|j| {
                                let (mid, half) = kernels::mid_half(self.u_min[j], self.u_max[j]);
                                mid + half * h[b * width + t * m + j].tanh()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect())
    }

    /// Controls for one state: `out[t][j]`.
    pub fn predict(&self, x: &[T]) -> Result<Vec<Vec<T>>> {
        Ok(self.predict_batch(&[x.to_vec()])?.pop().unwrap())
    }

    /// Records the parameters as leaves on `tape`.
    pub fn tape_params(&self, tape: &Tape<T>) -> TapedParams<T> {
        let mut off = 0;
        let layers = self
            .sizes
            .windows(2)
            .map(|win| {
                let (inp, out) = (win[0], win[1]);
                let w = tape.matrix(out, inp, self.params[off..off + inp * out].to_vec());
                let b = tape.vector(self.params[off + inp * out..off + inp * out + out].to_vec());
                off += inp * out + out;
                (w, b)
            })
            .collect();
        TapedParams { layers }
    }

    /// Taped forward pass. `x[i]` is state channel `i` as a `batch x 1` (or
    /// broadcast `1 x 1`) node; the result is `out[t][j]`, each `batch x 1`.
    pub fn predict_tape(&self, params: &TapedParams<T>, x: &[Var<T>]) -> Result<Vec<Vec<Var<T>>>> {
        let n = self.state_dim();
        if x.len() != n {
            return Err(Error::Dimension { expected: n, got: x.len() });
        }
        let cols: Vec<Var<T>> = x
            .iter()
            .zip(&self.input_center)
            .zip(&self.input_scale)
            .map(|((v, &c), &s)| v.shift(-c).scale(T::one() / s))
            .collect();
        let mut h = Var::try_stack_columns(&cols)?;
        let last = params.layers.len() - 1;
        for (l, (w, b)) in params.layers.iter().enumerate() {
            h = h.try_linear(w, b)?;
            if l < last {
                h = h.relu();
            }
        }
        let m = self.control_dim;
        Ok((0..self.horizon)
            .map(|t| {
                (0..m)
                    .map(|j| {
                        let (mid, half) = kernels::mid_half(self.u_min[j], self.u_max[j]);
                        h.column(t * m + j).tanh().scale(half).shift(mid)
                    })
                    .collect()
            })
            .collect())
    }
}

fn m_width<T>(net: &PolicyNet<T>) -> usize {
    net.control_dim * net.horizon
}

/// `sum over layers of (fan_in + 1) * fan_out`.
pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

impl<T: Scalar + Serialize + DeserializeOwned> PolicyNet<T> {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: PolicyNet<T> = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        net.validate()?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(hidden: Vec<usize>) -> PolicySpec<f64> {
        let mut s = PolicySpec::new(3, 2, 4, vec![-1.0, 0.0], vec![1.0, 3.0]);
        s.hidden = hidden;
        s
    }

    #[test]
    fn parameter_count_example() {
        let mut s = PolicySpec::new(7, 1, 10, vec![-1.0], vec![1.0]);
        s.hidden = vec![256, 256, 256];
        let layers = [(7, 256), (256, 256), (256, 256), (256, 10)];
        let expect: usize = layers.iter().map(|(i, o)| i * o + o).sum();
        assert_eq!(expect, 136_202);
        assert_eq!(PolicyNet::init(&s, 0).unwrap().num_params(), expect);
    }

    #[test]
    fn deterministic_init() {
        let a = PolicyNet::init(&spec(vec![8, 8]), 5).unwrap();
        let b = PolicyNet::init(&spec(vec![8, 8]), 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, PolicyNet::init(&spec(vec![8, 8]), 6).unwrap());
    }

    #[test]
    fn zero_input_gives_midpoint() {
        let net = PolicyNet::init(&spec(vec![8]), 0).unwrap();
        let u = net.predict(&[0.0, 0.0, 0.0]).unwrap();
        for row in u {
            assert_eq!(row, vec![0.0, 1.5]);
        }
    }

    #[test]
    fn tape_matches_plain_bitwise() {
        let mut s = spec(vec![16, 9]);
        s.input_center = vec![0.5, -1.0, 2.0];
        s.input_scale = vec![2.0, 0.5, 3.0];
        let net = PolicyNet::init(&s, 3).unwrap();
        let xs = vec![vec![0.1, 0.2, 0.3], vec![-4.0, 5.0, 1e3], vec![0.0, 0.0, 0.0]];
        let plain = net.predict_batch(&xs).unwrap();
        let tape = Tape::new();
        let p = net.tape_params(&tape);
        let cols: Vec<Var<f64>> = (0..3).map(|i| tape.vector(xs.iter().map(|x| x[i]).collect())).collect();
        let taped = net.predict_tape(&p, &cols).unwrap();
        for t in 0..4 {
            for j in 0..2 {
                let v = taped[t][j].value();
                for b in 0..3 {
                    assert_eq!(v[b], plain[b][t][j]);
                }
            }
        }
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let net = PolicyNet::init(&spec(vec![5]), 11).unwrap();
        let back = PolicyNet::<f64>::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(back, net);
        let x = [0.3, -0.7, 1.1];
        assert_eq!(back.predict(&x).unwrap(), net.predict(&x).unwrap());
    }

    #[test]
    fn rejects_bad_input_width() {
        let net = PolicyNet::init(&spec(vec![5]), 1).unwrap();
        assert!(net.predict(&[1.0]).is_err());
        let mut broken = net.clone();
        broken.params.pop();
        assert!(PolicyNet::<f64>::from_json(&broken.to_json().unwrap()).is_err());
    }
}
