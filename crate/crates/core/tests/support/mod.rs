//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use bsam_core::datagen::Batch;
use bsam_core::engine::{value_and_grad, Activation, Graph, LossFn, MlpModel, NodeId, ParamVector, Tensor};
use bsam_core::losses::{mean_loss, weighted_mean_loss, LossKind};
use bsam_core::Result;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use twofloat::TwoFloat;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_7e57)
}

pub fn gaussian_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn random_batch(rng: &mut impl Rng, b: usize, d: usize) -> Batch {
    let x = gaussian_vec(rng, b * d);
    let y = gaussian_vec(rng, b);
    Batch::new(Tensor::matrix(b, d, x).unwrap(), y).unwrap()
}

/// Closure computing the (optionally weighted) mean loss of `model` on `batch`.
pub fn loss_fn<'a>(
    model: &'a MlpModel,
    batch: &'a Batch,
    kind: LossKind,
    weights: Option<&'a [f64]>,
) -> impl Fn(&mut Graph, &ParamVector) -> Result<NodeId> + 'a {
    move |g: &mut Graph, p: &ParamVector| {
        let pred = model.forward_with(g, &batch.inputs, p)?;
        let target = g.constant(Tensor::column(&batch.targets));
        match weights {
            Some(w) => weighted_mean_loss(g, kind, pred, target, w),
            None => mean_loss(g, kind, pred, target),
        }
    }
}

/// Loss value only, from the recorded forward pass.
pub fn loss_value(params: &ParamVector, f: &impl LossFn) -> f64 {
    let mut g = Graph::new();
    let node = f(&mut g, params).unwrap();
    g.value(node).data()[0]
}

/// Central finite-difference gradient with step `h` per coordinate.
pub fn fd_gradient(params: &ParamVector, f: &impl LossFn, h: f64) -> Vec<f64> {
    let mut p = params.clone();
    (0..params.len())
        .map(|i| {
            let t = params.values()[i];
            p.values_mut()[i] = t + h;
            let plus = loss_value(&p, f);
            p.values_mut()[i] = t - h;
            let minus = loss_value(&p, f);
            p.values_mut()[i] = t;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Dense Hessian from central differences of autodiff gradients, symmetrized.
pub fn fd_hessian(params: &ParamVector, f: &impl LossFn, h: f64) -> DMatrix<f64> {
    let n = params.len();
    let mut hess = DMatrix::zeros(n, n);
    let mut p = params.clone();
    for j in 0..n {
        let t = params.values()[j];
        p.values_mut()[j] = t + h;
        let gp = value_and_grad(&p, f).unwrap().1;
        p.values_mut()[j] = t - h;
        let gm = value_and_grad(&p, f).unwrap().1;
        p.values_mut()[j] = t;
        for i in 0..n {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    (&hess + hess.transpose()) * 0.5
}

/// Eigenvalue of largest magnitude (signed) of a symmetric matrix.
pub fn dominant_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues
        .iter()
        .copied()
        .fold(0.0, |best: f64, v| if v.abs() > best.abs() { v } else { best })
}

pub fn max_relative_error(got: &[f64], want: &[f64]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs() / (1e-8 + w.abs()))
        .fold(0.0, f64::max)
}

/// Seeded tanh MLP with at most `max_params` parameters.
pub fn tiny_mlp(seed: u64, max_params: usize) -> MlpModel {
    let shapes: [&[usize]; 5] = [&[2, 8, 1], &[3, 6, 1], &[2, 4, 4, 1], &[4, 5, 1], &[1, 10, 1]];
    let widths = shapes[seed as usize % shapes.len()].to_vec();
    let m = MlpModel::new(widths, Activation::Tanh, seed).unwrap();
    assert!(m.num_params() <= max_params);
    m
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Forward pass of `model` plus (weighted) mean loss, re-implemented in
/// double-double arithmetic from the raw parameter layout.
pub fn loss_dd(
    model: &MlpModel,
    values: &[TwoFloat],
    batch: &Batch,
    kind: LossKind,
    weights: Option<&[f64]>,
) -> TwoFloat {
    let widths = model.widths();
    let b = batch.len();
    let mut total = TwoFloat::from(0.0);
    for i in 0..b {
        let mut h: Vec<TwoFloat> = batch.inputs.row(i).iter().map(|&x| TwoFloat::from(x)).collect();
        let mut offset = 0;
        for layer in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[layer], widths[layer + 1]);
            let w = &values[offset..offset + fan_in * fan_out];
            let bias = &values[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let mut z: Vec<TwoFloat> = bias.to_vec();
            for (p, hp) in h.iter().enumerate() {
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj += *hp * w[p * fan_out + j];
                }
            }
            if layer + 2 < widths.len() {
                for zj in &mut z {
                    *zj = match model.activation() {
                        Activation::Tanh => zj.tanh(),
                        Activation::Relu => {
                            if zj.hi() > 0.0 {
                                *zj
                            } else {
                                TwoFloat::from(0.0)
                            }
                        }
                    };
                }
            }
            h = z;
        }
        let r = h[0] - batch.targets[i];
        let l = match kind {
            LossKind::L1 => {
                if r.hi() < 0.0 {
                    -r
                } else {
                    r
                }
            }
            LossKind::L2 => r * r,
        };
        total += match weights {
            Some(w) => l * w[i],
            None => l,
        };
    }
    total / b as f64
}

/// Central differences of [`loss_dd`]; the `±h` shifts are exact in double-double.
pub fn fd_gradient_dd(
    model: &MlpModel,
    batch: &Batch,
    kind: LossKind,
    weights: Option<&[f64]>,
    h: f64,
) -> Vec<f64> {
    let base: Vec<TwoFloat> = model.params().values().iter().map(|&v| TwoFloat::from(v)).collect();
    let mut p = base.clone();
    (0..base.len())
        .map(|i| {
            p[i] = base[i] + h;
            let plus = loss_dd(model, &p, batch, kind, weights);
            p[i] = base[i] - h;
            let minus = loss_dd(model, &p, batch, kind, weights);
            p[i] = base[i];
            f64::from((plus - minus) / (2.0 * h))
        })
        .collect()
}
