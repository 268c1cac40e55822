use serde::{Deserialize, Serialize};

use super::perturbation::{compute_perturbation, PerturbationSpec};
use crate::datagen::Batch;
use crate::engine::{Graph, MlpModel, Tensor};
use crate::error::{Error, Result};
use crate::imbalance::{sample_weights, LabelHistogram, Region, RegionMap, WeightTable};
use crate::losses::{mean_loss, weighted_mean_loss, LossKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    AtTheta,
    AtPerturbed,
}

/// Mutable optimizer bookkeeping for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub lr: f64,
    pub weight_decay: f64,
    /// Last ascent step; meaningful only while `phase == AtPerturbed`.
    pub eps: Vec<f64>,
    pub phase: Phase,
    pub backward_passes: u64,
    pub steps: u64,
}

impl OptimizerState {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            eps: Vec::new(),
            phase: Phase::AtTheta,
            backward_passes: 0,
            steps: 0,
        }
    }
}

/// The descent objective: a loss and optional per-sample weights.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub loss: LossKind,
    pub weights: Option<&'a [f64]>,
}

impl<'a> Objective<'a> {
    pub fn plain(loss: LossKind) -> Self {
        Self { loss, weights: None }
    }

    pub fn weighted(loss: LossKind, weights: &'a [f64]) -> Self {
        Self { loss, weights: Some(weights) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Descent-objective loss at the point where its gradient was taken.
    pub loss: f64,
}

/// Loss and gradient of `objective` at the model's current parameters.
fn gradient(
    model: &MlpModel,
    batch: &Batch,
    objective: Objective<'_>,
    state: &mut OptimizerState,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::contract("optimizer step on an empty batch"));
    }
    let mut graph = Graph::new();
    let pred = model.forward(&mut graph, &batch.inputs)?;
    let target = graph.constant(Tensor::column(&batch.targets));
    let loss = match objective.weights {
        Some(w) => weighted_mean_loss(&mut graph, objective.loss, pred, target, w)?,
        None => mean_loss(&mut graph, objective.loss, pred, target)?,
    };
    let value = graph.value(loss).data()[0];
    if !value.is_finite() {
        return Err(Error::Numeric { context: "batch loss", index: 0 });
    }
    let mut params = model.params().clone();
    graph.backward(loss, &mut params)?;
    state.backward_passes += 1;
    if let Some(index) = params.grads().iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric { context: "gradient", index });
    }
    Ok((value, params.grads().to_vec()))
}

/// `θ ← θ − α·(g + λθ)`
fn descend(model: &mut MlpModel, grad: &[f64], state: &mut OptimizerState) {
    let (lr, decay) = (state.lr, state.weight_decay);
    for (t, g) in model.params_mut().values_mut().iter_mut().zip(grad) {
        *t -= lr * (g + decay * *t);
    }
    state.steps += 1;
}

pub fn sgd_step(
    model: &mut MlpModel,
    batch: &Batch,
    objective: Objective<'_>,
    state: &mut OptimizerState,
) -> Result<StepReport> {
    let (loss, grad) = gradient(model, batch, objective, state)?;
    descend(model, &grad, state);
    Ok(StepReport { loss })
}

/// Shared two-phase step: ascent gradient from `ascent`, ε*, descent
/// gradient at `θ + ε*`, restore `θ`, update.
fn two_phase_step(
    model: &mut MlpModel,
    batch: &Batch,
    ascent: Objective<'_>,
    objective: Objective<'_>,
    spec: &PerturbationSpec,
    state: &mut OptimizerState,
) -> Result<StepReport> {
    spec.validate()?;
    let (_, ascent_grad) = gradient(model, batch, ascent, state)?;
    let eps = compute_perturbation(&ascent_grad, spec);
    let saved = model.params().values().to_vec();
    let checksum = model.params().checksum();
    let perturbed = eps.iter().any(|&e| e != 0.0);
    if perturbed {
        for (t, e) in model.params_mut().values_mut().iter_mut().zip(&eps) {
            *t += e;
        }
    }
    state.eps = eps;
    state.phase = Phase::AtPerturbed;
    let descent = gradient(model, batch, objective, state);
    if perturbed {
        model.params_mut().set_values(&saved)?;
    }
    state.phase = Phase::AtTheta;
    if model.params().checksum() != checksum {
        return Err(Error::contract("parameters not restored after the perturbed phase"));
    }
    let (loss, grad) = descent?;
    descend(model, &grad, state);
    Ok(StepReport { loss })
}

pub fn sam_step(
    model: &mut MlpModel,
    batch: &Batch,
    objective: Objective<'_>,
    spec: &PerturbationSpec,
    state: &mut OptimizerState,
) -> Result<StepReport> {
    let ascent = Objective::plain(objective.loss);
    two_phase_step(model, batch, ascent, objective, spec, state)
}

/// SAM whose ascent loss is importance-weighted by the bin table.
pub fn bsam_step(
    model: &mut MlpModel,
    batch: &Batch,
    objective: Objective<'_>,
    spec: &PerturbationSpec,
    table: &WeightTable,
    hist: &LabelHistogram,
    state: &mut OptimizerState,
) -> Result<StepReport> {
    let w = sample_weights(hist, table, &batch.targets)?;
    let ascent = Objective::weighted(objective.loss, &w);
    two_phase_step(model, batch, ascent, objective, spec, state)
}

/// 0/1 mask selecting Few-region samples.
pub fn tail_mask(regions: &RegionMap, hist: &LabelHistogram, labels: &[f64]) -> Result<Vec<f64>> {
    labels
        .iter()
        .map(|&y| Ok(if regions.region_of(hist, y)? == Region::Few { 1.0 } else { 0.0 }))
        .collect()
}

/// SAM whose ascent gradient comes from the Few-region samples of the batch.
///
/// The masked full-batch mean differs from the Few-subset mean by the
/// positive factor `n_few / B`, which ε* ignores. With no Few samples the
/// ascent gradient is zero and the step reduces to plain descent.
pub fn imbsam_step(
    model: &mut MlpModel,
    batch: &Batch,
    objective: Objective<'_>,
    spec: &PerturbationSpec,
    regions: &RegionMap,
    hist: &LabelHistogram,
    state: &mut OptimizerState,
) -> Result<StepReport> {
    let mask = tail_mask(regions, hist, &batch.targets)?;
    let ascent = Objective::weighted(objective.loss, &mask);
    two_phase_step(model, batch, ascent, objective, spec, state)
}
