//! A small fully connected network with exact backpropagation.
//!
//! Parameters live in one flat `Vec<f64>`: for each layer, the row-major
//! `out × in` weight matrix followed by the `out` biases. Gradients use the
//! same layout, which keeps the optimizer and finite-difference checks
//! trivial.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    LeakyRelu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                // NaN must propagate so a poisoned input is detected
                if x < 0.0 {
                    0.0
                } else {
                    x
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    0.01 * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `x`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.01
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    /// `(out, in)` per layer.
    shapes: Vec<(usize, usize)>,
    params: Vec<f64>,
    pub hidden: Activation,
    pub output: Activation,
}

/// Activations kept from a batch forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    n: usize,
    /// `inputs[l]` is the `n × in_l` input to layer `l`; the last entry is the output.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations per layer, `n × out_l`.
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.inputs.last().expect("network has at least one layer")
    }

    pub fn rows(&self) -> usize {
        self.n
    }
}

impl Network {
    /// Zero-initialised network with layer widths `dims[0] → … → dims[last]`.
    pub fn zeros(dims: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Shape(format!("invalid layer widths {dims:?}")));
        }
        let shapes: Vec<(usize, usize)> = dims.windows(2).map(|w| (w[1], w[0])).collect();
        let total = shapes.iter().map(|(o, i)| o * i + o).sum();
        Ok(Network {
            shapes,
            params: vec![0.0; total],
            hidden,
            output,
        })
    }

    /// Uniform fan-in/fan-out initialisation (He-scaled for ReLU-like
    /// activations), zero biases.
    pub fn init(dims: &[usize], hidden: Activation, output: Activation, seed: u64) -> Result<Self> {
        let mut net = Network::zeros(dims, hidden, output)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut off = 0;
        for (l, &(out, inp)) in net.shapes.clone().iter().enumerate() {
            let act = if l + 1 == net.shapes.len() { output } else { hidden };
            let limit = match act {
                Activation::Relu | Activation::LeakyRelu => (6.0 / inp as f64).sqrt(),
                _ => (6.0 / (inp + out) as f64).sqrt(),
            };
            for w in &mut net.params[off..off + out * inp] {
                *w = rng.gen_range(-limit..limit);
            }
            off += out * inp + out;
        }
        Ok(net)
    }

    /// Builds a network from explicit `(weights, biases)` per layer.
    pub fn from_layers(layers: Vec<(usize, usize, Vec<f64>, Vec<f64>)>, hidden: Activation, output: Activation) -> Result<Self> {
        let mut shapes = Vec::new();
        let mut params = Vec::new();
        for (l, (out, inp, w, b)) in layers.into_iter().enumerate() {
            if w.len() != out * inp || b.len() != out || out == 0 || inp == 0 {
                return Err(Error::Shape(format!("layer {l}: inconsistent {out}x{inp} weights")));
            }
            if let Some(&(prev_out, _)) = shapes.last() {
                if prev_out != inp {
                    return Err(Error::Shape(format!("layer {l} expects {inp} inputs, previous emits {prev_out}")));
                }
            }
            shapes.push((out, inp));
            params.extend(w);
            params.extend(b);
        }
        if shapes.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        Ok(Network {
            shapes,
            params,
            hidden,
            output,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.shapes[0].1
    }

    pub fn output_dim(&self) -> usize {
        self.shapes.last().unwrap().0
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// `(weights, biases)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let off = self.offset(l);
        let (out, inp) = self.shapes[l];
        (&self.params[off..off + out * inp], &self.params[off + out * inp..off + out * inp + out])
    }

    fn offset(&self, l: usize) -> usize {
        self.shapes[..l].iter().map(|(o, i)| o * i + o).sum()
    }

    fn activation(&self, l: usize) -> Activation {
        if l + 1 == self.shapes.len() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|x| x.is_finite())
    }

    /// Forward pass for a single input row.
    pub fn forward_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has dim {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut cur = x.to_vec();
        let mut off = 0;
        for (l, &(out, inp)) in self.shapes.iter().enumerate() {
            let act = self.activation(l);
            let w = &self.params[off..off + out * inp];
            let b = &self.params[off + out * inp..off + out * inp + out];
            let next: Vec<f64> = (0..out)
                .map(|j| act.apply(b[j] + dot(&w[j * inp..(j + 1) * inp], &cur)))
                .collect();
            cur = next;
            off += out * inp + out;
        }
        Ok(cur)
    }

    /// Forward pass over `n` rows stored contiguously in `x`.
    pub fn forward_batch(&self, x: &[f64], n: usize) -> Result<ForwardCache> {
        if x.len() != n * self.input_dim() {
            return Err(Error::Shape(format!(
                "batch of {} values is not {n} rows of dim {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.shapes.len() + 1);
        let mut pre = Vec::with_capacity(self.shapes.len());
        inputs.push(x.to_vec());
        let mut off = 0;
        for (l, &(out, inp)) in self.shapes.iter().enumerate() {
            let act = self.activation(l);
            let w = &self.params[off..off + out * inp];
            let b = &self.params[off + out * inp..off + out * inp + out];
            let src = inputs.last().unwrap();
            let mut z = vec![0.0; n * out];
            for r in 0..n {
                let row = &src[r * inp..(r + 1) * inp];
                for j in 0..out {
                    z[r * out + j] = b[j] + dot(&w[j * inp..(j + 1) * inp], row);
                }
            }
            let a: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
            pre.push(z);
            inputs.push(a);
            off += out * inp + out;
        }
        Ok(ForwardCache { n, inputs, pre })
    }

    /// Backpropagates `grad_out` (`n × out_dim`, gradient of the loss with
    /// respect to the network output) and adds parameter gradients into
    /// `grads`. Returns the gradient with respect to the input when asked.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        grad_out: &[f64],
        grads: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        assert_eq!(grads.len(), self.params.len());
        let n = cache.n;
        let mut g = grad_out.to_vec();
        let layers = self.shapes.len();
        for l in (0..layers).rev() {
            let (out, inp) = self.shapes[l];
            let act = self.activation(l);
            let off = self.offset(l);
            // dL/dz
            for (gv, &z) in g.iter_mut().zip(&cache.pre[l]) {
                *gv *= act.derivative(z);
            }
            let x = &cache.inputs[l];
            {
                let (gw, gb) = grads[off..off + out * inp + out].split_at_mut(out * inp);
                for r in 0..n {
                    let row = &x[r * inp..(r + 1) * inp];
                    for j in 0..out {
                        let gz = g[r * out + j];
                        if gz == 0.0 {
                            continue;
                        }
                        gb[j] += gz;
                        axpy(gz, row, &mut gw[j * inp..(j + 1) * inp]);
                    }
                }
            }
            if l == 0 && !want_input_grad {
                return None;
            }
            let w = &self.params[off..off + out * inp];
            let mut gx = vec![0.0; n * inp];
            for r in 0..n {
                let dst = &mut gx[r * inp..(r + 1) * inp];
                for j in 0..out {
                    let gz = g[r * out + j];
                    if gz != 0.0 {
                        axpy(gz, &w[j * inp..(j + 1) * inp], dst);
                    }
                }
            }
            g = gx;
        }
        Some(g)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Adam with bias correction, over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}
