//! Mini-batch training loop shared by every optimizer.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datagen::RegressionDataset;
use crate::engine::{Activation, MlpModel};
use crate::error::{Error, Result};
use crate::imbalance::{sample_weights, LabelHistogram, RegionMap, WeightMode, WeightTable};
use crate::losses::LossKind;
use crate::metrics::{region_report, Metric, RegionReport};
use crate::optim::{
    bsam_step, imbsam_step, sam_step, sgd_step, Objective, OptimizerKind, OptimizerState,
    PerturbationSpec,
};
use crate::rng::{stream_rng, Stream};

/// Consecutive non-finite batches that abort a run.
pub const DIVERGENCE_PATIENCE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// `α·γ^⌊epoch/every⌋`
    StepDecay { gamma: f64, every: usize },
}

impl LrSchedule {
    pub fn lr_at(&self, base: f64, epoch: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::StepDecay { gamma, every } => base * gamma.powi((epoch / every.max(1)) as i32),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub schedule: LrSchedule,
    pub weight_decay: f64,
    pub shuffle_seed: u64,
    pub optimizer: OptimizerKind,
    pub perturbation: PerturbationSpec,
    pub loss: LossKind,
    /// Weighting of the descent objective; `None` is the vanilla mean loss.
    pub objective_weighting: Option<WeightMode>,
    /// Evaluate on the validation set after every epoch.
    pub validate_every_epoch: bool,
    pub metrics: Vec<Metric>,
}

impl TrainPlan {
    pub fn validate(&self, n_train: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::contract("epochs must be at least 1"));
        }
        if self.batch_size == 0 || self.batch_size > n_train {
            return Err(Error::contract(format!(
                "batch size {} must be in 1..={n_train}",
                self.batch_size
            )));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::contract(format!("learning rate {} must be non-negative", self.lr)));
        }
        if let LrSchedule::StepDecay { every: 0, .. } = self.schedule {
            return Err(Error::contract("step decay interval must be positive"));
        }
        self.perturbation.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Mean descent-objective loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub lrs: Vec<f64>,
    pub val_reports: Vec<Option<RegionReport>>,
    pub final_params: Vec<f64>,
    pub steps: u64,
    pub backward_passes: u64,
    pub wall_time_s: f64,
}

impl TrainTrace {
    /// Trace with the wall-clock field zeroed, for bitwise comparisons.
    pub fn without_timing(mut self) -> Self {
        self.wall_time_s = 0.0;
        self
    }
}

/// Per-epoch shuffled batches covering every index exactly once.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut impl rand::Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

pub struct TrainInputs<'a> {
    pub train: &'a RegressionDataset,
    pub val: Option<&'a RegressionDataset>,
    pub hist: &'a LabelHistogram,
    /// Bin weights for the BSAM ascent phase.
    pub weights: &'a WeightTable,
    pub regions: &'a RegionMap,
}

pub fn train(plan: &TrainPlan, model: &mut MlpModel, data: &TrainInputs<'_>) -> Result<TrainTrace> {
    let start = Instant::now();
    plan.validate(data.train.len())?;
    if data.hist.total() != data.train.len() {
        return Err(Error::contract("histogram was not built from this training set"));
    }
    let objective_weights = match plan.objective_weighting {
        None => None,
        Some(mode) => {
            let table = WeightTable::compute(data.hist, mode, true)?;
            Some(sample_weights(data.hist, &table, &data.train.labels)?)
        }
    };
    let mut rng = stream_rng(plan.shuffle_seed, Stream::Shuffle);
    let mut state = OptimizerState::new(plan.lr, plan.weight_decay);
    let mut trace = TrainTrace {
        epoch_losses: Vec::with_capacity(plan.epochs),
        lrs: Vec::with_capacity(plan.epochs),
        val_reports: Vec::with_capacity(plan.epochs),
        final_params: Vec::new(),
        steps: 0,
        backward_passes: 0,
        wall_time_s: 0.0,
    };
    let mut bad_streak = 0;
    for epoch in 0..plan.epochs {
        state.lr = plan.schedule.lr_at(plan.lr, epoch);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (b, idx) in epoch_batches(data.train.len(), plan.batch_size, &mut rng).iter().enumerate() {
            let batch = data.train.batch(idx);
            let w: Option<Vec<f64>> = objective_weights
                .as_ref()
                .map(|all| idx.iter().map(|&i| all[i]).collect());
            let objective = Objective { loss: plan.loss, weights: w.as_deref() };
            let spec = &plan.perturbation;
            let step = match plan.optimizer {
                OptimizerKind::Sgd => sgd_step(model, &batch, objective, &mut state),
                OptimizerKind::Sam => sam_step(model, &batch, objective, spec, &mut state),
                OptimizerKind::Bsam => {
                    bsam_step(model, &batch, objective, spec, data.weights, data.hist, &mut state)
                }
                OptimizerKind::Imbsam => {
                    imbsam_step(model, &batch, objective, spec, data.regions, data.hist, &mut state)
                }
            };
            match step {
                Ok(r) => {
                    bad_streak = 0;
                    loss_sum += r.loss * idx.len() as f64;
                    seen += idx.len();
                }
                Err(Error::Numeric { .. }) => {
                    bad_streak += 1;
                    if bad_streak >= DIVERGENCE_PATIENCE {
                        return Err(Error::Diverged { epoch, batch: b });
                    }
                }
                Err(e) => return Err(e),
            }
        }
        trace.epoch_losses.push(if seen > 0 { loss_sum / seen as f64 } else { f64::NAN });
        trace.lrs.push(state.lr);
        let report = match (plan.validate_every_epoch, data.val) {
            (true, Some(val)) => {
                let pred = model.predict(&val.features)?;
                Some(region_report(&pred, &val.labels, data.hist, data.regions, &plan.metrics)?)
            }
            _ => None,
        };
        trace.val_reports.push(report);
    }
    trace.final_params = model.params().values().to_vec();
    trace.steps = state.steps;
    trace.backward_passes = state.backward_passes;
    trace.wall_time_s = start.elapsed().as_secs_f64();
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedProvenance {
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub data_seed: u64,
}

/// Final-parameter checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<f64>,
    pub seeds: SeedProvenance,
}

impl Checkpoint {
    pub fn new(model: &MlpModel, seeds: SeedProvenance) -> Self {
        Self {
            widths: model.widths().to_vec(),
            activation: model.activation(),
            params: model.params().values().to_vec(),
            seeds,
        }
    }

    pub fn to_model(&self) -> Result<MlpModel> {
        MlpModel::from_flat(self.widths.clone(), self.activation, &self.params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
