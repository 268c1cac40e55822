//! Regression losses and the importance-weighted objective.

use serde::{Deserialize, Serialize};

use crate::engine::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    L1,
    L2,
}

impl LossKind {
    pub fn eval(self, pred: f64, target: f64) -> f64 {
        let r = pred - target;
        match self {
            LossKind::L1 => r.abs(),
            LossKind::L2 => r * r,
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(LossKind::L1),
            "l2" => Ok(LossKind::L2),
            other => Err(Error::contract(format!("unknown loss {other:?}"))),
        }
    }
}

/// Elementwise loss values for plain tensors.
pub fn per_sample_values(kind: LossKind, pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    pred.same_shape(target, "per-sample loss")?;
    Ok(pred.zip_map(target, |p, t| kind.eval(p, t)))
}

/// `(B, 1)` node of per-sample losses.
pub fn per_sample_loss(graph: &mut Graph, kind: LossKind, pred: NodeId, target: NodeId) -> Result<NodeId> {
    let diff = graph.sub(pred, target)?;
    Ok(match kind {
        LossKind::L1 => graph.abs(diff),
        LossKind::L2 => graph.square(diff),
    })
}

fn check_batch(graph: &Graph, pred: NodeId) -> Result<usize> {
    let b = graph.value(pred).len();
    if b == 0 {
        return Err(Error::contract("loss over an empty batch"));
    }
    Ok(b)
}

pub fn mean_loss(graph: &mut Graph, kind: LossKind, pred: NodeId, target: NodeId) -> Result<NodeId> {
    check_batch(graph, pred)?;
    let per = per_sample_loss(graph, kind, pred, target)?;
    graph.mean(per)
}

/// `(1/B)·Σ w_i·ℓ_i`. Divides by the batch size, not by `Σ w`.
pub fn weighted_mean_loss(
    graph: &mut Graph,
    kind: LossKind,
    pred: NodeId,
    target: NodeId,
    weights: &[f64],
) -> Result<NodeId> {
    let b = check_batch(graph, pred)?;
    if weights.len() != b {
        return Err(Error::Shape {
            context: "loss weights",
            expected: vec![b],
            got: vec![weights.len()],
        });
    }
    if let Some(i) = weights.iter().position(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::contract(format!("loss weight {i} is {}", weights[i])));
    }
    let per = per_sample_loss(graph, kind, pred, target)?;
    let shape = graph.value(per).shape().to_vec();
    let w = graph.constant(Tensor::new(shape, weights.to_vec())?);
    let weighted = graph.mul(per, w)?;
    graph.mean(weighted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ParamVector;

    fn scalar_loss(kind: LossKind, pred: &[f64], target: &[f64], weights: Option<&[f64]>) -> f64 {
        let mut g = Graph::new();
        let p = g.constant(Tensor::column(pred));
        let t = g.constant(Tensor::column(target));
        let l = match weights {
            Some(w) => weighted_mean_loss(&mut g, kind, p, t, w).unwrap(),
            None => mean_loss(&mut g, kind, p, t).unwrap(),
        };
        g.value(l).data()[0]
    }

    #[test]
    fn per_sample_by_hand() {
        let p = Tensor::column(&[3.0, 1.0]);
        let t = Tensor::column(&[1.0, 1.0]);
        assert_eq!(per_sample_values(LossKind::L2, &p, &t).unwrap().data(), &[4.0, 0.0]);
        assert_eq!(per_sample_values(LossKind::L1, &p, &t).unwrap().data(), &[2.0, 0.0]);
        assert!(per_sample_values(LossKind::L1, &p, &Tensor::column(&[1.0])).is_err());
    }

    #[test]
    fn mean_and_weighted_mean() {
        // per-sample L1 losses [2, 4]
        assert_eq!(scalar_loss(LossKind::L1, &[3.0, 5.0], &[1.0, 1.0], None), 3.0);
        assert_eq!(scalar_loss(LossKind::L1, &[3.0, 5.0], &[1.0, 1.0], Some(&[2.0, 0.0])), 2.0);
        assert_eq!(scalar_loss(LossKind::L2, &[1.0, 1.0], &[1.0, 1.0], None), 0.0);
    }

    #[test]
    fn unit_weights_match_mean_bitwise() {
        let pred = [0.1, -2.3, 7.7, 1e-3];
        let target = [0.3, 0.4, -1.2, 5.0];
        for kind in [LossKind::L1, LossKind::L2] {
            let a = scalar_loss(kind, &pred, &target, None);
            let b = scalar_loss(kind, &pred, &target, Some(&[1.0; 4]));
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn zero_weights_zero_gradient() {
        let mut params = ParamVector::from_values(vec![0.7, -0.2]);
        let mut g = Graph::new();
        let p = g.param(&params, 0);
        let t = g.constant(Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap());
        // reshape-free: treat the 1x2 param row as the batch
        let per = per_sample_loss(&mut g, LossKind::L2, p, t).unwrap();
        let w = g.constant(Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap());
        let m = g.mul(per, w).unwrap();
        let loss = g.mean(m).unwrap();
        assert_eq!(g.value(loss).data()[0], 0.0);
        g.backward(loss, &mut params).unwrap();
        assert!(params.grads().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn weight_validation() {
        let mut g = Graph::new();
        let p = g.constant(Tensor::column(&[1.0, 2.0]));
        let t = g.constant(Tensor::column(&[1.0, 2.0]));
        assert!(matches!(
            weighted_mean_loss(&mut g, LossKind::L1, p, t, &[1.0]),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            weighted_mean_loss(&mut g, LossKind::L1, p, t, &[1.0, -0.5]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn empty_batch_rejected() {
        let mut g = Graph::new();
        let p = g.constant(Tensor::new(vec![0, 1], vec![]).unwrap());
        let t = g.constant(Tensor::new(vec![0, 1], vec![]).unwrap());
        assert!(mean_loss(&mut g, LossKind::L2, p, t).is_err());
    }
}
