//! Loss-landscape diagnostics: top Hessian eigenvalue, Hessian trace and
//! 1-D loss slices along filter-normalized random directions.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datagen::Batch;
use crate::engine::{hvp, Graph, HvpMethod, MlpModel, NodeId, ParamVector, Tensor};
use crate::error::{Error, Result};
use crate::losses::{mean_loss, LossKind};
use crate::rng::{stream_rng, Stream};

/// Mean loss of `model` on `batch`, as a closure over parameters.
pub fn batch_loss_fn<'a>(
    model: &'a MlpModel,
    batch: &'a Batch,
    kind: LossKind,
) -> impl Fn(&mut Graph, &ParamVector) -> Result<NodeId> + 'a {
    move |g: &mut Graph, p: &ParamVector| {
        let pred = model.forward_with(g, &batch.inputs, p)?;
        let target = g.constant(Tensor::column(&batch.targets));
        mean_loss(g, kind, pred, target)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub iters: usize,
    /// Relative change of the Rayleigh quotient that counts as converged.
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            iters: 200,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    /// Signed Rayleigh quotient of the dominant (largest-magnitude) eigenpair.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `H·v` vanished on three consecutive starts; `value` is 0.
    pub degenerate: bool,
}

fn random_unit(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let nv = norm(&v);
        if nv > 0.0 {
            return v.into_iter().map(|x| x / nv).collect();
        }
    }
}

/// Power iteration on an arbitrary symmetric operator.
pub fn power_iteration(
    n: usize,
    mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    cfg: &PowerConfig,
) -> Result<PowerResult> {
    if cfg.iters == 0 {
        return Err(Error::contract("power iteration needs at least one iteration"));
    }
    if n == 0 {
        return Err(Error::contract("power iteration on an empty operator"));
    }
    let mut rng = stream_rng(cfg.seed, Stream::Diagnostics);
    let mut v = random_unit(n, &mut rng);
    let mut rayleigh = f64::NAN;
    let mut zero_streak = 0;
    for it in 1..=cfg.iters {
        let hv = apply(&v)?;
        let hv_norm = norm(&hv);
        if !(hv_norm > f64::MIN_POSITIVE) {
            zero_streak += 1;
            if zero_streak >= 3 {
                return Ok(PowerResult { value: 0.0, iterations: it, converged: false, degenerate: true });
            }
            v = random_unit(n, &mut rng);
            continue;
        }
        zero_streak = 0;
        let next = dot(&v, &hv);
        v = hv.into_iter().map(|x| x / hv_norm).collect();
        if (next - rayleigh).abs() <= cfg.tol * next.abs().max(f64::MIN_POSITIVE) {
            return Ok(PowerResult { value: next, iterations: it, converged: true, degenerate: false });
        }
        rayleigh = next;
    }
    Ok(PowerResult { value: rayleigh, iterations: cfg.iters, converged: false, degenerate: false })
}

/// Dominant Hessian eigenvalue of the mean loss on `batch`.
pub fn lambda_max(model: &MlpModel, batch: &Batch, kind: LossKind, cfg: &PowerConfig) -> Result<PowerResult> {
    if batch.is_empty() {
        return Err(Error::contract("lambda_max on an empty subset"));
    }
    let loss = batch_loss_fn(model, batch, kind);
    let params = model.params();
    power_iteration(params.len(), |v| hvp(params, &loss, v, HvpMethod::Exact), cfg)
}

/// Per-probe values `zᵀHz` for Rademacher `z`.
pub fn hutchinson_samples(
    model: &MlpModel,
    batch: &Batch,
    kind: LossKind,
    probes: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if probes == 0 {
        return Err(Error::contract("hutchinson estimator needs at least one probe"));
    }
    if batch.is_empty() {
        return Err(Error::contract("hessian trace on an empty subset"));
    }
    let loss = batch_loss_fn(model, batch, kind);
    let params = model.params();
    let mut rng = stream_rng(seed, Stream::Probe);
    (0..probes)
        .map(|_| {
            let z: Vec<f64> = (0..params.len())
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let hz = hvp(params, &loss, &z, HvpMethod::Exact)?;
            Ok(dot(&z, &hz))
        })
        .collect()
}

/// Hutchinson estimate of `Tr(H)`.
pub fn hessian_trace(model: &MlpModel, batch: &Batch, kind: LossKind, probes: usize, seed: u64) -> Result<f64> {
    let samples = hutchinson_samples(model, batch, kind, probes, seed)?;
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetTag {
    All,
    Many,
    Medium,
    Few,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessReport {
    pub lambda_max: f64,
    pub trace: f64,
    pub probes: usize,
    pub power_iters: usize,
    pub subset: SubsetTag,
    pub seed: u64,
    pub n_samples: usize,
    pub degenerate: bool,
}

pub fn sharpness_report(
    model: &MlpModel,
    batch: &Batch,
    kind: LossKind,
    power: &PowerConfig,
    probes: usize,
    subset: SubsetTag,
) -> Result<SharpnessReport> {
    let top = lambda_max(model, batch, kind, power)?;
    let trace = hessian_trace(model, batch, kind, probes, power.seed)?;
    Ok(SharpnessReport {
        lambda_max: top.value,
        trace,
        probes,
        power_iters: top.iterations,
        subset,
        seed: power.seed,
        n_samples: batch.len(),
        degenerate: top.degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSlice {
    pub direction_seed: u64,
    pub offsets: Vec<f64>,
    pub losses: Vec<f64>,
    pub normalization: String,
}

impl LossSlice {
    /// Two-column `offset,loss` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("offset,loss\n");
        for (t, l) in self.offsets.iter().zip(&self.losses) {
            let _ = writeln!(out, "{t},{l}");
        }
        out
    }
}

/// Random direction with each parameter segment rescaled to the norm of the
/// matching segment of `params`.
pub fn filter_normalized_direction(params: &ParamVector, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, Stream::Diagnostics);
    let mut d: Vec<f64> = (0..params.len()).map(|_| rng.sample(StandardNormal)).collect();
    for seg in params.segments() {
        let target = norm(&params.values()[seg.range.clone()]);
        let part = &mut d[seg.range.clone()];
        let current = norm(part);
        let scale = if current > 0.0 { target / current } else { 0.0 };
        part.iter_mut().for_each(|x| *x *= scale);
    }
    d
}

/// Mean loss at `θ + t·d` for each offset `t`; the model is not modified.
pub fn loss_slice(
    model: &MlpModel,
    batch: &Batch,
    kind: LossKind,
    direction_seed: u64,
    offsets: &[f64],
) -> Result<LossSlice> {
    if let Some(t) = offsets.iter().find(|t| !t.is_finite()) {
        return Err(Error::contract(format!("slice offset {t} is not finite")));
    }
    let mut offsets = offsets.to_vec();
    offsets.sort_by(f64::total_cmp);
    let dir = filter_normalized_direction(model.params(), direction_seed);
    let loss_fn = batch_loss_fn(model, batch, kind);
    let mut probe = model.params().clone();
    let losses = offsets
        .iter()
        .map(|&t| {
            for ((p, &theta), &d) in probe.values_mut().iter_mut().zip(model.params().values()).zip(&dir) {
                *p = theta + t * d;
            }
            let mut g = Graph::new();
            let node = loss_fn(&mut g, &probe)?;
            Ok(g.value(node).data()[0])
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(LossSlice {
        direction_seed,
        offsets,
        losses,
        normalization: "filter".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_operator(diag: Vec<f64>) -> impl FnMut(&[f64]) -> Result<Vec<f64>> {
        move |v: &[f64]| Ok(v.iter().zip(&diag).map(|(x, d)| x * d).collect())
    }

    #[test]
    fn identity_operator_gives_one() {
        let r = power_iteration(5, diag_operator(vec![1.0; 5]), &PowerConfig::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6);
        assert!(r.converged);
    }

    #[test]
    fn diagonal_quadratic_top_eigenvalue() {
        // loss = 3θ0² + θ1²
        let r = power_iteration(2, diag_operator(vec![6.0, 2.0]), &PowerConfig::default()).unwrap();
        assert!((r.value - 6.0).abs() < 1e-4);
    }

    #[test]
    fn negative_dominant_eigenvalue_keeps_sign() {
        let r = power_iteration(3, diag_operator(vec![-5.0, 1.0, 2.0]), &PowerConfig::default()).unwrap();
        assert!((r.value + 5.0).abs() < 1e-4, "{r:?}");
    }

    #[test]
    fn zero_operator_is_degenerate() {
        let r = power_iteration(3, diag_operator(vec![0.0; 3]), &PowerConfig::default()).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn zero_iterations_rejected() {
        let cfg = PowerConfig { iters: 0, ..PowerConfig::default() };
        assert!(power_iteration(1, diag_operator(vec![1.0]), &cfg).is_err());
    }

    #[test]
    fn filter_normalization_matches_segment_norms() {
        let m = MlpModel::new(vec![3, 4, 1], crate::engine::Activation::Tanh, 5).unwrap();
        let d = filter_normalized_direction(m.params(), 1);
        for seg in m.params().segments() {
            let want = norm(&m.params().values()[seg.range.clone()]);
            let got = norm(&d[seg.range.clone()]);
            assert!((want - got).abs() < 1e-12, "{}", seg.name());
        }
    }
}
