//! SGD baseline and the two-phase sharpness-aware family (SAM, BSAM, ImbSAM).

mod perturbation;
mod steps;

use serde::{Deserialize, Serialize};

pub use perturbation::{compute_perturbation, PerturbationSpec, PerturbationWeighting, GRAD_NORM_FLOOR};
pub use steps::{
    bsam_step, imbsam_step, sam_step, sgd_step, tail_mask, Objective, OptimizerState, Phase,
    StepReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Sam,
    Bsam,
    Imbsam,
}

impl OptimizerKind {
    /// Backward passes per step.
    pub fn passes_per_step(self) -> u64 {
        match self {
            OptimizerKind::Sgd => 1,
            _ => 2,
        }
    }

    /// Ascent weighting implied by the method.
    pub fn weighting(self) -> PerturbationWeighting {
        match self {
            OptimizerKind::Sgd | OptimizerKind::Sam => PerturbationWeighting::None,
            OptimizerKind::Bsam => PerturbationWeighting::Table,
            OptimizerKind::Imbsam => PerturbationWeighting::TailOnly,
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "sam" => Ok(OptimizerKind::Sam),
            "bsam" => Ok(OptimizerKind::Bsam),
            "imbsam" => Ok(OptimizerKind::Imbsam),
            other => Err(crate::Error::Contract(format!("unknown optimizer {other:?}"))),
        }
    }
}
