use super::graph::{Graph, NodeId};
use super::params::ParamVector;
use crate::error::{Error, Result};

/// How `hvp` evaluates `H·v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HvpMethod {
    /// Forward-over-reverse on the recorded graph; exact up to rounding.
    #[default]
    Exact,
    /// Central difference of gradients along `v/‖v‖` with step
    /// `1e-4·(1 + ‖θ‖∞)`, rescaled by `‖v‖`.
    FiniteDifference,
}

/// Builds a scalar loss on a fresh graph from the given parameters.
pub trait LossFn: Fn(&mut Graph, &ParamVector) -> Result<NodeId> {}
impl<F: Fn(&mut Graph, &ParamVector) -> Result<NodeId>> LossFn for F {}

fn check_finite(values: &[f64], context: &'static str) -> Result<()> {
    match values.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::Numeric { context, index }),
        None => Ok(()),
    }
}

/// Loss value and gradient at `params`.
pub fn value_and_grad(params: &ParamVector, loss_fn: &impl LossFn) -> Result<(f64, Vec<f64>)> {
    let mut p = params.clone();
    let mut graph = Graph::new();
    let loss = loss_fn(&mut graph, &p)?;
    let value = graph.value(loss).data()[0];
    graph.backward(loss, &mut p)?;
    Ok((value, p.grads().to_vec()))
}

pub fn hvp(
    params: &ParamVector,
    loss_fn: &impl LossFn,
    v: &[f64],
    method: HvpMethod,
) -> Result<Vec<f64>> {
    if v.len() != params.len() {
        return Err(Error::Shape {
            context: "hvp direction",
            expected: vec![params.len()],
            got: vec![v.len()],
        });
    }
    let hv = match method {
        HvpMethod::Exact => {
            let mut graph = Graph::new();
            let loss = loss_fn(&mut graph, params)?;
            graph.hessian_vector(loss, params.len(), v)?.1
        }
        HvpMethod::FiniteDifference => {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Ok(vec![0.0; v.len()]);
            }
            let inf = params.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let h = 1e-4 * (1.0 + inf);
            let shifted = |sign: f64| -> Result<Vec<f64>> {
                let mut p = params.clone();
                for (t, d) in p.values_mut().iter_mut().zip(v) {
                    *t += sign * h * d / norm;
                }
                Ok(value_and_grad(&p, loss_fn)?.1)
            };
            let plus = shifted(1.0)?;
            let minus = shifted(-1.0)?;
            plus.iter()
                .zip(&minus)
                .map(|(a, b)| (a - b) * norm / (2.0 * h))
                .collect()
        }
    };
    check_finite(&hv, "hessian-vector product")?;
    Ok(hv)
}
