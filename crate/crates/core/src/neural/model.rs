use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::NeuralError;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    ReLU,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputHead {
    Sigmoid,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    Bce,
    Mse,
}

impl OutputHead {
    pub fn loss_kind(self) -> LossKind {
        match self {
            OutputHead::Sigmoid => LossKind::Bce,
            OutputHead::Linear => LossKind::Mse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub n_layers: usize,
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub output_dim: usize,
    pub output_head: OutputHead,
}

impl MlpConfig {
    pub fn new(
        input_dim: usize,
        layer_sizes: Vec<usize>,
        output_dim: usize,
        output_head: OutputHead,
    ) -> Result<Self, NeuralError> {
        let config = Self {
            input_dim,
            n_layers: layer_sizes.len(),
            layer_sizes,
            activation: Activation::ReLU,
            output_dim,
            output_head,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.layer_sizes.len() != self.n_layers {
            return Err(NeuralError::InvalidConfig(format!(
                "n_layers is {} but {} layer sizes were given",
                self.n_layers,
                self.layer_sizes.len()
            )));
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.layer_sizes.contains(&0) {
            return Err(NeuralError::InvalidConfig("dimensions must be positive".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer, hidden layers first.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.n_layers + 2);
        dims.push(self.input_dim);
        dims.extend(&self.layer_sizes);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// One affine layer; `weights` has shape `(fan_in, fan_out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.weights.dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub layers: Vec<Dense>,
}

/// Gradients of the loss, one entry per layer, same shapes as the model.
pub type Gradients = Vec<Dense>;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Weights uniform in `±sqrt(6 / fan_in)`, biases zero.
pub fn init_model(config: &MlpConfig, seed: u64) -> Result<MlpModel, NeuralError> {
    config.validate()?;
    let mut rng = SplitMix64::new(seed);
    let layers = config
        .shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let bound = (6.0 / fan_in as f64).sqrt();
            Dense {
                weights: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.uniform(-bound, bound)),
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(MlpModel {
        config: config.clone(),
        layers,
    })
}

pub const BCE_CLIP: f64 = 1e-12;

/// Mean loss over every element of `outputs`.
pub fn loss(outputs: ArrayView2<f64>, targets: ArrayView2<f64>, kind: LossKind) -> Result<f64, NeuralError> {
    if outputs.dim() != targets.dim() {
        return Err(NeuralError::ShapeMismatch {
            expected: format!("{:?}", outputs.dim()),
            found: format!("{:?}", targets.dim()),
        });
    }
    let n = outputs.len();
    if n == 0 {
        return Err(NeuralError::EmptyDataset);
    }
    let mut total = 0.0;
    Zip::from(&outputs).and(&targets).for_each(|&p, &y| {
        total += match kind {
            LossKind::Bce => {
                let p = p.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            }
            LossKind::Mse => (p - y) * (p - y),
        };
    });
    Ok(total / n as f64)
}

impl MlpModel {
    pub fn n_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_input(&self, inputs: &ArrayView2<f64>) -> Result<(), NeuralError> {
        if inputs.ncols() != self.config.input_dim {
            return Err(NeuralError::ShapeMismatch {
                expected: format!("{} input columns", self.config.input_dim),
                found: format!("{} input columns", inputs.ncols()),
            });
        }
        Ok(())
    }

    fn head(&self, z: &mut Array2<f64>) {
        if self.config.output_head == OutputHead::Sigmoid {
            z.mapv_inplace(sigmoid);
        }
    }

    /// Affine + ReLU for hidden layers, affine + head for the last.
    pub fn forward(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        self.check_input(&inputs)?;
        let last = self.layers.len() - 1;
        let mut a: Option<Array2<f64>> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = match &a {
                None => inputs.dot(&layer.weights),
                Some(prev) => prev.dot(&layer.weights),
            };
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            } else {
                self.head(&mut z);
            }
            a = Some(z);
        }
        Ok(a.expect("model has at least one layer"))
    }

    /// Analytic gradients of the mean loss via backpropagation. The ReLU
    /// subgradient at zero is taken as zero. Returns the loss as well.
    pub fn gradients(
        &self,
        inputs: ArrayView2<f64>,
        targets: ArrayView2<f64>,
        kind: LossKind,
    ) -> Result<(f64, Gradients), NeuralError> {
        self.check_input(&inputs)?;
        if targets.dim() != (inputs.nrows(), self.config.output_dim) {
            return Err(NeuralError::ShapeMismatch {
                expected: format!("({}, {})", inputs.nrows(), self.config.output_dim),
                found: format!("{:?}", targets.dim()),
            });
        }
        if inputs.nrows() == 0 {
            return Err(NeuralError::EmptyDataset);
        }
        let last = self.layers.len() - 1;
        // Post-activation outputs of each hidden layer.
        let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(last);
        let mut out = Array2::zeros((0, 0));
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = if i == 0 {
                inputs.dot(&layer.weights)
            } else {
                hidden[i - 1].dot(&layer.weights)
            };
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
                hidden.push(z);
            } else {
                self.head(&mut z);
                out = z;
            }
        }
        let loss_value = loss(out.view(), targets, kind)?;

        // dL/dz at the head: sigmoid+BCE and linear+MSE both reduce to a
        // scaled residual.
        let count = out.len() as f64;
        let scale = match (self.config.output_head, kind) {
            (OutputHead::Sigmoid, LossKind::Bce) | (OutputHead::Linear, LossKind::Mse) => match kind {
                LossKind::Bce => 1.0 / count,
                LossKind::Mse => 2.0 / count,
            },
            _ => {
                return Err(NeuralError::InvalidConfig(
                    "loss must match the output head (BCE with Sigmoid, MSE with Linear)".into(),
                ))
            }
        };
        let mut delta = out;
        Zip::from(&mut delta).and(&targets).for_each(|d, &y| *d = (*d - y) * scale);

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let prev = if i == 0 { inputs } else { hidden[i - 1].view() };
            let weights = prev.t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut next = delta.dot(&self.layers[i].weights.t());
                Zip::from(&mut next).and(&hidden[i - 1]).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = next;
            }
            grads.push(Dense { weights, bias });
        }
        grads.reverse();
        Ok((loss_value, grads))
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}
