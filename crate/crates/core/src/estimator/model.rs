use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden layer widths used unless configured otherwise.
pub const DEFAULT_HIDDEN: [usize; 4] = [36, 24, 16, 16];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `ln(1 + e^a)`
    Softplus,
    /// `1 / (1 + e^-a)`
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Softplus => a.max(0.0) + (-a.abs()).exp().ln_1p(),
            Activation::Sigmoid => sigmoid(a),
        }
    }

    #[inline]
    pub fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Softplus => sigmoid(a),
            Activation::Sigmoid => {
                let s = sigmoid(a);
                s * (1.0 - s)
            }
        }
    }
}

#[inline]
fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer; `weights` is row-major `[outputs][inputs]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    #[inline]
    fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }
}

/// Per-feature standardisation `(v - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(width: usize) -> Self {
        Normalization {
            shift: vec![0.0; width],
            scale: vec![1.0; width],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub epochs_run: usize,
    pub train_mae: Option<f64>,
    pub test_mae: Option<f64>,
    pub seed: u64,
}

/// Feed-forward QoS estimator `f(x, z) -> [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorModel {
    pub(crate) history_len: usize,
    pub(crate) layers: Vec<Dense>,
    pub(crate) hidden_activation: Activation,
    pub(crate) output_activation: Activation,
    pub(crate) normalization: Normalization,
    pub(crate) metadata: TrainingMetadata,
}

/// Activations of one forward pass, kept for backpropagation.
pub(crate) struct Trace {
    /// Normalised input followed by each layer's post-activation output.
    pub outputs: Vec<Vec<f64>>,
    /// Pre-activation values per layer.
    pub pre: Vec<Vec<f64>>,
}

impl EstimatorModel {
    /// Seeded He-uniform initialisation with zero biases.
    pub fn new(history_len: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if history_len == 0 {
            return Err(Error::InvalidArgument("history length must be at least 1".into()));
        }
        if hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden layer sizes must be positive".into()));
        }
        let width = 2 * history_len + 3;
        let mut sizes = vec![width];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let mut d = Dense::zeros(w[0], w[1]);
                let limit = (6.0 / w[0] as f64).sqrt();
                d.weights
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-limit..limit));
                d
            })
            .collect();
        Ok(EstimatorModel {
            history_len,
            layers,
            hidden_activation: Activation::Softplus,
            output_activation: Activation::Sigmoid,
            normalization: Normalization::identity(width),
            metadata: TrainingMetadata {
                seed,
                ..TrainingMetadata::default()
            },
        })
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    /// Width of the full input `[x, z]`, i.e. `2H + 3`.
    pub fn input_width(&self) -> usize {
        2 * self.history_len + 3
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_width()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn metadata(&self) -> &TrainingMetadata {
        &self.metadata
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn with_output_activation(mut self, act: Activation) -> Self {
        self.output_activation = act;
        self
    }

    fn check(&self, x: f64, z: &[f64]) -> Result<()> {
        let expected = 2 * self.history_len + 2;
        if z.len() != expected {
            return Err(Error::Dimension {
                expected,
                actual: z.len(),
            });
        }
        if !x.is_finite() || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }

    pub(crate) fn normalized_input(&self, x: f64, z: &[f64]) -> Vec<f64> {
        let n = &self.normalization;
        std::iter::once(x)
            .chain(z.iter().copied())
            .enumerate()
            .map(|(i, v)| (v - n.shift[i]) / n.scale[i])
            .collect()
    }

    pub(crate) fn trace(&self, input: Vec<f64>) -> Trace {
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        outputs.push(input);
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let prev = &outputs[li];
            let act = if li == last {
                self.output_activation
            } else {
                self.hidden_activation
            };
            let a: Vec<f64> = (0..layer.outputs)
                .map(|o| {
                    layer.biases[o]
                        + layer.row(o).iter().zip(prev).map(|(w, v)| w * v).sum::<f64>()
                })
                .collect();
            outputs.push(a.iter().map(|&v| act.apply(v)).collect());
            pre.push(a);
        }
        Trace { outputs, pre }
    }

    /// Backpropagates `d_out` (gradient w.r.t. the scalar output) and
    /// returns the gradient w.r.t. the normalised input. When `grads` is
    /// given, parameter gradients are accumulated into it. The output slope
    /// is raised to at least `slope_floor` (0 gives the exact gradient).
    pub(crate) fn backward(
        &self,
        trace: &Trace,
        d_out: f64,
        slope_floor: f64,
        mut grads: Option<&mut [Dense]>,
    ) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let slope = self.output_activation.derivative(trace.pre[last][0]).max(slope_floor);
        let mut delta: Vec<f64> = vec![d_out * slope];
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &trace.outputs[li];
            if let Some(g) = grads.as_deref_mut() {
                let g = &mut g[li];
                for (o, &d) in delta.iter().enumerate() {
                    g.biases[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(gw, v)| *gw += d * v);
                }
            }
            let mut back = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    back.iter_mut()
                        .zip(layer.row(o))
                        .for_each(|(b, w)| *b += w * d);
                }
            }
            if li > 0 {
                let act = self.hidden_activation;
                back.iter_mut()
                    .zip(&trace.pre[li - 1])
                    .for_each(|(b, &a)| *b *= act.derivative(a));
            }
            delta = back;
        }
        delta
    }

    /// Predicted satisfaction in [0, 1].
    pub fn forward(&self, x: f64, z: &[f64]) -> Result<f64> {
        self.check(x, z)?;
        let t = self.trace(self.normalized_input(x, z));
        Ok(t.outputs[self.layers.len()][0])
    }

    /// Output pre-activation, so `forward = output_activation().apply(output_logit)`.
    pub fn output_logit(&self, x: f64, z: &[f64]) -> Result<f64> {
        self.check(x, z)?;
        let t = self.trace(self.normalized_input(x, z));
        Ok(t.pre[self.layers.len() - 1][0])
    }

    /// Exact `∂f/∂x` by reverse propagation.
    pub fn input_gradient(&self, x: f64, z: &[f64]) -> Result<f64> {
        Ok(self.forward_and_grad(x, z)?.1)
    }

    /// `(f(x, z), ∂f/∂x)` from one forward and one backward pass.
    pub fn forward_and_grad(&self, x: f64, z: &[f64]) -> Result<(f64, f64)> {
        self.check(x, z)?;
        let t = self.trace(self.normalized_input(x, z));
        let y = t.outputs[self.layers.len()][0];
        let d_input = self.backward(&t, 1.0, 0.0, None);
        Ok((y, d_input[0] / self.normalization.scale[0]))
    }

    /// Values and input gradients for a batch of `(x, z)` pairs.
    pub fn batch_forward_and_grad(&self, inputs: &[(f64, &[f64])]) -> Result<(Vec<f64>, Vec<f64>)> {
        if inputs.is_empty() {
            return Err(Error::Empty("estimator batch"));
        }
        let mut values = Vec::with_capacity(inputs.len());
        let mut grads = Vec::with_capacity(inputs.len());
        for &(x, z) in inputs {
            let (v, g) = self.forward_and_grad(x, z)?;
            values.push(v);
            grads.push(g);
        }
        Ok((values, grads))
    }
}
