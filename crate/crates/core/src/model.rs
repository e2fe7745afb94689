//! Fully connected feed-forward networks with exact backpropagation.
//!
//! Weights live in one flat [`Vector`]. Layer `l` (mapping `in_l` inputs to
//! `out_l` units) occupies `(in_l + 1) * out_l` consecutive entries: the
//! `out_l x in_l` weight matrix in row-major order, followed by `out_l` biases.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numeric::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a` (and `z`).
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::InvalidArgument(format!("unknown activation `{other}`"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

/// Output nonlinearity paired with its loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputHead {
    /// Sigmoid outputs, squared error averaged over the `K` outputs.
    SigmoidMse,
    /// Softmax outputs, cross-entropy.
    SoftmaxCrossEntropy,
}

impl FromStr for OutputHead {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(OutputHead::SigmoidMse),
            "ce" | "cross-entropy" => Ok(OutputHead::SoftmaxCrossEntropy),
            other => Err(Error::InvalidArgument(format!("unknown loss `{other}`"))),
        }
    }
}

impl fmt::Display for OutputHead {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputHead::SigmoidMse => "mse",
            OutputHead::SoftmaxCrossEntropy => "ce",
        })
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// A labelled example: standardized features and a one-hot target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    features: Vector,
    target: Vector,
}

impl Sample {
    pub fn new(features: Vector, class: usize, classes: usize) -> Result<Self> {
        if class >= classes {
            return Err(Error::InvalidArgument(format!(
                "class {class} out of range for {classes} classes"
            )));
        }
        let mut target = Vector::zeros(classes);
        target[class] = 1.0;
        Ok(Sample { features, target })
    }

    pub fn features(&self) -> &Vector {
        &self.features
    }

    pub fn target(&self) -> &Vector {
        &self.target
    }

    pub fn class(&self) -> usize {
        self.target.iter().position(|&t| t == 1.0).unwrap_or(0)
    }

    pub(crate) fn features_mut(&mut self) -> &mut Vector {
        &mut self.features
    }
}

/// Loss and gradient of one mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEval {
    pub loss: f64,
    pub gradient: Vector,
    pub batch_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    hidden: Activation,
    head: OutputHead,
}

impl MlpSpec {
    /// `layer_sizes` is `[D, H_1, ..., H_L, K]`.
    pub fn new(layer_sizes: Vec<usize>, hidden: Activation, head: OutputHead) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "a network needs at least input and output layers".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer sizes must be >= 1, got {layer_sizes:?}"
            )));
        }
        Ok(MlpSpec {
            layer_sizes,
            hidden,
            head,
        })
    }

    /// `depth` hidden layers of `width` units each.
    pub fn uniform(
        inputs: usize,
        width: usize,
        depth: usize,
        outputs: usize,
        hidden: Activation,
        head: OutputHead,
    ) -> Result<Self> {
        let mut sizes = vec![inputs];
        sizes.extend(std::iter::repeat_n(width, depth));
        sizes.push(outputs);
        Self::new(sizes, hidden, head)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn outputs(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn head(&self) -> OutputHead {
        self.head
    }

    /// Number of weights and biases.
    pub fn parameter_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    fn check(&self, x: &Vector) -> Result<()> {
        if x.len() != self.parameter_count() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: self.parameter_count(),
            });
        }
        Ok(())
    }

    /// Mean loss over `batch`.
    pub fn forward_loss<'a, I>(&self, x: &Vector, batch: I) -> Result<f64>
    where
        I: IntoIterator<Item = &'a Sample>,
    {
        self.check(x)?;
        let mut scratch = Scratch::new(self);
        let mut total = 0.0;
        let mut count = 0usize;
        for s in batch {
            self.forward(x, s.features.as_slice(), &mut scratch);
            total += self.sample_loss(&scratch, s.target.as_slice());
            count += 1;
        }
        if count == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        Ok(total / count as f64)
    }

    /// Mean loss and its exact gradient over `batch`.
    pub fn backprop_gradient<'a, I>(&self, x: &Vector, batch: I) -> Result<BatchEval>
    where
        I: IntoIterator<Item = &'a Sample>,
    {
        self.check(x)?;
        let mut scratch = Scratch::new(self);
        let mut grad = vec![0.0; x.len()];
        let mut total = 0.0;
        let mut count = 0usize;
        for s in batch {
            self.forward(x, s.features.as_slice(), &mut scratch);
            total += self.sample_loss(&scratch, s.target.as_slice());
            self.backward(x, s.target.as_slice(), &mut scratch, &mut grad);
            count += 1;
        }
        if count == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let inv = 1.0 / count as f64;
        for g in &mut grad {
            *g *= inv;
        }
        Ok(BatchEval {
            loss: total * inv,
            gradient: grad.into(),
            batch_id: 0,
        })
    }

    /// Network outputs for one input.
    pub fn predict(&self, x: &Vector, features: &Vector) -> Result<Vector> {
        self.check(x)?;
        let mut scratch = Scratch::new(self);
        self.forward(x, features.as_slice(), &mut scratch);
        Ok(scratch.activations.last().unwrap().clone().into())
    }

    fn forward(&self, x: &Vector, input: &[f64], sc: &mut Scratch) {
        let w = x.as_slice();
        let layers = self.layer_sizes.len() - 1;
        sc.activations[0].copy_from_slice(input);
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let weights = &w[offset..offset + n_in * n_out];
            let biases = &w[offset + n_in * n_out..offset + (n_in + 1) * n_out];
            offset += (n_in + 1) * n_out;
            let (prev, rest) = sc.activations.split_at_mut(l + 1);
            let a_in = &prev[l];
            let z = &mut sc.preactivations[l];
            for j in 0..n_out {
                let row = &weights[j * n_in..(j + 1) * n_in];
                z[j] = biases[j] + row.iter().zip(a_in).map(|(a, b)| a * b).sum::<f64>();
            }
            let a_out = &mut rest[0];
            if l + 1 < layers {
                for j in 0..n_out {
                    a_out[j] = self.hidden.apply(z[j]);
                }
            } else {
                match self.head {
                    OutputHead::SigmoidMse => {
                        for j in 0..n_out {
                            a_out[j] = sigmoid(z[j]);
                        }
                    }
                    OutputHead::SoftmaxCrossEntropy => {
                        let lse = log_sum_exp(z);
                        for j in 0..n_out {
                            a_out[j] = (z[j] - lse).exp();
                        }
                    }
                }
            }
        }
    }

    fn sample_loss(&self, sc: &Scratch, target: &[f64]) -> f64 {
        let y = sc.activations.last().unwrap();
        match self.head {
            OutputHead::SigmoidMse => {
                let k = y.len() as f64;
                y.iter()
                    .zip(target)
                    .map(|(a, t)| (a - t) * (a - t))
                    .sum::<f64>()
                    / k
            }
            OutputHead::SoftmaxCrossEntropy => {
                let z = sc.preactivations.last().unwrap();
                let lse = log_sum_exp(z);
                -z.iter()
                    .zip(target)
                    .map(|(zk, t)| t * (zk - lse))
                    .sum::<f64>()
            }
        }
    }

    fn backward(&self, x: &Vector, target: &[f64], sc: &mut Scratch, grad: &mut [f64]) {
        let w = x.as_slice();
        let layers = self.layer_sizes.len() - 1;
        let offsets = &sc.offsets;

        // dL/dz for the output layer
        {
            let y = sc.activations.last().unwrap();
            let delta = &mut sc.deltas[layers - 1];
            match self.head {
                OutputHead::SigmoidMse => {
                    let k = y.len() as f64;
                    for j in 0..y.len() {
                        delta[j] = 2.0 / k * (y[j] - target[j]) * y[j] * (1.0 - y[j]);
                    }
                }
                OutputHead::SoftmaxCrossEntropy => {
                    let mass: f64 = target.iter().sum();
                    for j in 0..y.len() {
                        delta[j] = mass * y[j] - target[j];
                    }
                }
            }
        }

        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let offset = offsets[l];
            let a_in = &sc.activations[l];
            let (lower, upper) = sc.deltas.split_at_mut(l);
            let delta = &upper[0];
            {
                let g = &mut grad[offset..offset + (n_in + 1) * n_out];
                for j in 0..n_out {
                    let dj = delta[j];
                    let row = &mut g[j * n_in..(j + 1) * n_in];
                    for (gi, ai) in row.iter_mut().zip(a_in) {
                        *gi += dj * ai;
                    }
                    g[n_in * n_out + j] += dj;
                }
            }
            if l > 0 {
                let weights = &w[offset..offset + n_in * n_out];
                let z_prev = &sc.preactivations[l - 1];
                let prev_delta = &mut lower[l - 1];
                for i in 0..n_in {
                    let mut s = 0.0;
                    for j in 0..n_out {
                        s += weights[j * n_in + i] * delta[j];
                    }
                    prev_delta[i] = s * self.hidden.derivative(z_prev[i], a_in[i]);
                }
            }
        }
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

struct Scratch {
    activations: Vec<Vec<f64>>,
    preactivations: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    offsets: Vec<usize>,
}

impl Scratch {
    fn new(spec: &MlpSpec) -> Self {
        let sizes = &spec.layer_sizes;
        let mut offsets = Vec::with_capacity(sizes.len() - 1);
        let mut off = 0;
        for w in sizes.windows(2) {
            offsets.push(off);
            off += (w[0] + 1) * w[1];
        }
        Scratch {
            activations: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            preactivations: sizes[1..].iter().map(|&n| vec![0.0; n]).collect(),
            deltas: sizes[1..].iter().map(|&n| vec![0.0; n]).collect(),
            offsets,
        }
    }
}

/// Hidden-unit count for a single hidden layer network:
/// `min(floor((M / Cr - K) / (D + K + 1)), D - 1)`, clamped below at 1.
pub fn hidden_units_heuristic(m: usize, d: usize, k: usize, cr: f64) -> usize {
    let h1 = ((m as f64 / cr - k as f64) / (d + k + 1) as f64).floor();
    let h2 = d as f64 - 1.0;
    let h = h1.min(h2);
    if h < 1.0 {
        1
    } else {
        h as usize
    }
}
