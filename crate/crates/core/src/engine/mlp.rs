use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, NodeId};
use super::params::{ParamRole, ParamVector};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::contract(format!("unknown activation {other:?}"))),
        }
    }
}

/// Fully connected regression network `R^d -> R` with a linear output head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    widths: Vec<usize>,
    activation: Activation,
    params: ParamVector,
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases, drawn from the init stream of `seed`.
    pub fn new(widths: Vec<usize>, activation: Activation, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, Stream::Init);
        Self::build(widths, activation, |fan_in, fan_out| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            rng.random_range(-limit..=limit)
        })
    }

    pub fn zeros(widths: Vec<usize>, activation: Activation) -> Result<Self> {
        Self::build(widths, activation, |_, _| 0.0)
    }

    /// Rebuilds a model from a flat parameter array, e.g. a checkpoint.
    pub fn from_flat(widths: Vec<usize>, activation: Activation, values: &[f64]) -> Result<Self> {
        let mut model = Self::zeros(widths, activation)?;
        model.params.set_values(values)?;
        Ok(model)
    }

    fn build(
        widths: Vec<usize>,
        activation: Activation,
        mut init: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::contract("an MLP needs at least input and output widths"));
        }
        if widths.contains(&0) {
            return Err(Error::contract(format!("layer widths must be positive: {widths:?}")));
        }
        if *widths.last().unwrap() != 1 {
            return Err(Error::contract("the output width must be 1 (scalar regression)"));
        }
        let mut params = ParamVector::new();
        for (layer, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let w = (0..fan_in * fan_out).map(|_| init(fan_in, fan_out)).collect();
            params.push_segment(layer, ParamRole::Weight, vec![fan_in, fan_out], w);
            params.push_segment(layer, ParamRole::Bias, vec![1, fan_out], vec![0.0; fan_out]);
        }
        Ok(Self {
            widths,
            activation,
            params,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Records the forward pass on `graph` and returns the `(B, 1)` output node.
    pub fn forward(&self, graph: &mut Graph, inputs: &Tensor) -> Result<NodeId> {
        self.forward_with(graph, inputs, &self.params)
    }

    /// Forward pass using an explicit parameter vector laid out like this model's.
    pub fn forward_with(
        &self,
        graph: &mut Graph,
        inputs: &Tensor,
        params: &ParamVector,
    ) -> Result<NodeId> {
        if inputs.shape().len() != 2 || inputs.cols() != self.input_dim() {
            return Err(Error::Shape {
                context: "mlp forward input",
                expected: vec![inputs.rows(), self.input_dim()],
                got: inputs.shape().to_vec(),
            });
        }
        let mut h = graph.constant(inputs.clone());
        let n_layers = self.widths.len() - 1;
        for layer in 0..n_layers {
            let w = graph.param(params, 2 * layer);
            let b = graph.param(params, 2 * layer + 1);
            let z = graph.matmul(h, w)?;
            h = graph.add_row(z, b)?;
            if layer + 1 < n_layers {
                h = match self.activation {
                    Activation::Relu => graph.relu(h),
                    Activation::Tanh => graph.tanh(h),
                };
            }
        }
        Ok(h)
    }

    /// Plain inference, one prediction per input row.
    pub fn predict(&self, inputs: &Tensor) -> Result<Vec<f64>> {
        let mut graph = Graph::new();
        let out = self.forward(&mut graph, inputs)?;
        Ok(graph.value(out).data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_predicts_zero() {
        let m = MlpModel::zeros(vec![3, 5, 1], Activation::Relu).unwrap();
        let x = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.5, 9.0]).unwrap();
        assert_eq!(m.predict(&x).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_linear_layer_by_hand() {
        let m = MlpModel::from_flat(vec![1, 1], Activation::Relu, &[2.0, 1.0]).unwrap();
        let x = Tensor::matrix(1, 1, vec![3.0]).unwrap();
        assert_eq!(m.predict(&x).unwrap(), vec![7.0]);
    }

    #[test]
    fn tanh_output_bounded_by_head() {
        let m = MlpModel::new(vec![2, 6, 1], Activation::Tanh, 11).unwrap();
        let head = &m.params().values()[2 * 6 + 6..];
        let (w_out, b_out) = (&head[..6], head[6]);
        let bound: f64 = w_out.iter().map(|w| w.abs()).sum::<f64>() + b_out.abs();
        let x = Tensor::matrix(3, 2, vec![100.0, -50.0, 0.0, 0.0, -3.0, 7.0]).unwrap();
        for y in m.predict(&x).unwrap() {
            assert!(y.abs() <= bound);
        }
    }

    #[test]
    fn input_width_mismatch_names_shapes() {
        let m = MlpModel::zeros(vec![3, 1], Activation::Relu).unwrap();
        let x = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        match m.predict(&x).unwrap_err() {
            Error::Shape { expected, got, .. } => {
                assert_eq!(expected, vec![1, 3]);
                assert_eq!(got, vec![1, 2]);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn glorot_init_is_seeded_and_bounded() {
        let a = MlpModel::new(vec![4, 8, 1], Activation::Relu, 3).unwrap();
        let b = MlpModel::new(vec![4, 8, 1], Activation::Relu, 3).unwrap();
        let c = MlpModel::new(vec![4, 8, 1], Activation::Relu, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let limit = (6.0f64 / 12.0).sqrt();
        assert!(a.params().segment_values(0).iter().all(|w| w.abs() <= limit));
        assert!(a.params().segment_values(1).iter().all(|&b| b == 0.0));
    }

    #[test]
    fn rejects_non_scalar_head() {
        assert!(MlpModel::zeros(vec![2, 2], Activation::Relu).is_err());
    }
}
