use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DetectorError, FeatureVector};

/// Hidden-layer nonlinearity. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Bias-free multilayer perceptron. `weights[l]` is row-major with
/// `layer_dims[l + 1]` rows and `layer_dims[l]` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpParams {
    pub fn new(layer_dims: Vec<usize>, weights: Vec<Vec<f64>>) -> Result<Self, DetectorError> {
        let p = Self { layer_dims, weights, activation: Activation::Tanh };
        p.validate()?;
        Ok(p)
    }

    /// Glorot-uniform initialisation, `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot<R: Rng + ?Sized>(layer_dims: Vec<usize>, rng: &mut R) -> Result<Self, DetectorError> {
        if layer_dims.len() < 2 {
            return Err(DetectorError::InvalidConfig("an MLP needs at least input and output dims".into()));
        }
        let weights = layer_dims
            .windows(2)
            .map(|w| {
                let a = (6.0 / (w[0] + w[1]) as f64).sqrt();
                (0..w[0] * w[1]).map(|_| rng.gen_range(-a..a)).collect()
            })
            .collect();
        Self::new(layer_dims, weights)
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.layer_dims.len() < 2 || self.layer_dims.contains(&0) {
            return Err(DetectorError::InvalidConfig(format!("bad layer dims {:?}", self.layer_dims)));
        }
        if self.weights.len() != self.layer_dims.len() - 1 {
            return Err(DetectorError::InvalidConfig(format!(
                "{} weight matrices for {} layers",
                self.weights.len(),
                self.layer_dims.len() - 1
            )));
        }
        for (l, w) in self.weights.iter().enumerate() {
            let expected = self.layer_dims[l] * self.layer_dims[l + 1];
            if w.len() != expected {
                return Err(DetectorError::InvalidConfig(format!("layer {l} has {} weights, expected {expected}", w.len())));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(DetectorError::InvalidConfig(format!("layer {l} has non-finite weights")));
            }
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated dims")
    }

    pub fn squared_weight_norm(&self) -> f64 {
        self.weights.iter().flatten().map(|w| w * w).sum()
    }

    /// Layer outputs for one input: `[x, h_1, ..., h_L]` where `h_L` is the embedding.
    fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut trace = Vec::with_capacity(self.weights.len() + 1);
        trace.push(x.to_vec());
        for (l, w) in self.weights.iter().enumerate() {
            let input = &trace[l];
            let (rows, cols) = (self.layer_dims[l + 1], self.layer_dims[l]);
            let last = l + 1 == self.weights.len();
            let out: Vec<f64> = (0..rows)
                .map(|r| {
                    let a: f64 = w[r * cols..(r + 1) * cols].iter().zip(input).map(|(wi, xi)| wi * xi).sum();
                    if last {
                        a
                    } else {
                        self.activation.apply(a)
                    }
                })
                .collect();
            trace.push(out);
        }
        trace
    }
}

/// Embedding `Omega(x; W)`.
pub fn mlp_forward(params: &MlpParams, x: &FeatureVector) -> Result<Vec<f64>, DetectorError> {
    if x.len() != params.input_dim() {
        return Err(DetectorError::DimensionMismatch { expected: params.input_dim(), got: x.len() });
    }
    Ok(params.forward_trace(x).pop().expect("trace has output"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveAndGradient {
    pub loss: f64,
    /// Mean squared distance to the centre, without the weight penalty.
    pub data_term: f64,
    /// Same layout as [`MlpParams::weights`].
    pub gradients: Vec<Vec<f64>>,
}

/// `(1/N) sum_i ||Omega(x_i) - c||^2 + (zeta/2) sum_l ||W_l||_F^2` and its
/// gradient with respect to every weight, by backpropagation.
pub fn svdd_objective_and_gradient(
    params: &MlpParams,
    center: &[f64],
    batch: &[FeatureVector],
    zeta: f64,
) -> Result<ObjectiveAndGradient, DetectorError> {
    if batch.is_empty() {
        return Err(DetectorError::EmptyDataset);
    }
    if center.len() != params.output_dim() {
        return Err(DetectorError::DimensionMismatch { expected: params.output_dim(), got: center.len() });
    }
    let n = batch.len() as f64;
    let n_layers = params.n_layers();
    let mut grads: Vec<Vec<f64>> = params.weights.iter().map(|w| vec![0.0; w.len()]).collect();
    let mut data_term = 0.0;
    for x in batch {
        if x.len() != params.input_dim() {
            return Err(DetectorError::DimensionMismatch { expected: params.input_dim(), got: x.len() });
        }
        let trace = params.forward_trace(x);
        let out = &trace[n_layers];
        let mut delta: Vec<f64> = out.iter().zip(center).map(|(o, c)| o - c).collect();
        data_term += delta.iter().map(|d| d * d).sum::<f64>();
        for d in delta.iter_mut() {
            *d *= 2.0 / n;
        }
        for l in (0..n_layers).rev() {
            let (rows, cols) = (params.layer_dims[l + 1], params.layer_dims[l]);
            let input = &trace[l];
            let g = &mut grads[l];
            for r in 0..rows {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                for (gi, xi) in g[r * cols..(r + 1) * cols].iter_mut().zip(input) {
                    *gi += d * xi;
                }
            }
            if l == 0 {
                break;
            }
            let w = &params.weights[l];
            let mut prev = vec![0.0; cols];
            for r in 0..rows {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                for (p, wi) in prev.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                    *p += d * wi;
                }
            }
            for (p, h) in prev.iter_mut().zip(input) {
                *p *= params.activation.derivative_from_output(*h);
            }
            delta = prev;
        }
    }
    data_term /= n;
    for (g, w) in grads.iter_mut().zip(&params.weights) {
        for (gi, wi) in g.iter_mut().zip(w) {
            *gi += zeta * wi;
        }
    }
    let loss = data_term + 0.5 * zeta * params.squared_weight_norm();
    Ok(ObjectiveAndGradient { loss, data_term, gradients: grads })
}
