//! Built-in experiment configurations emitted by `gen-config`.

use std::path::PathBuf;

use bsam_core::datagen::{DatasetSpec, DensityProfile, FeatureMap};
use bsam_core::engine::Activation;
use bsam_core::imbalance::WeightMode;
use bsam_core::losses::LossKind;
use bsam_core::metrics::Metric;
use bsam_core::optim::OptimizerKind;
use bsam_core::sharpness::SubsetTag;
use bsam_core::trainer::LrSchedule;

use crate::config::{
    BinConfig, DataSource, ExperimentConfig, ModelConfig, OptimizerCell, SharpnessConfig, SubsetSide,
    SweepConfig, TrainConfig, SCHEMA_VERSION,
};

pub const NAMES: [&str; 3] = ["reduction-suite", "bsam-vs-baselines", "rho-ablation"];

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    match name {
        "reduction-suite" => Some(reduction_suite()),
        "bsam-vs-baselines" => Some(bsam_vs_baselines()),
        "rho-ablation" => Some(rho_ablation()),
        _ => None,
    }
}

fn cell(name: &str, kind: OptimizerKind, rho: f64, objective: Option<WeightMode>) -> OptimizerCell {
    OptimizerCell {
        name: name.into(),
        kind,
        rho,
        p: 2.0,
        objective,
        ascent_weights: WeightMode::Inv,
    }
}

fn dataset(n_train: usize, n_test: usize) -> DatasetSpec {
    DatasetSpec {
        n_train,
        n_test,
        lower: 1.0,
        upper: 11.0,
        profile: DensityProfile::Exponential { rate: 5.0 },
        features: FeatureMap::Trig { d: 4 },
        noise_sigma: 0.1,
        seed: 0,
    }
}

/// Count thresholds of the 20 000-sample default, scaled to `n_train`.
fn bins(n_train: usize) -> BinConfig {
    BinConfig {
        k: 20,
        many: 1500 * n_train / 20_000,
        few: 300 * n_train / 20_000,
    }
}

fn base(name: &str, n_train: usize, n_test: usize, epochs: usize) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        name: name.into(),
        output_dir: PathBuf::from("runs").join(name),
        seeds: vec![0],
        metrics: Metric::ALL.to_vec(),
        data: DataSource::Synthetic(dataset(n_train, n_test)),
        bins: bins(n_train),
        model: ModelConfig { hidden: vec![32, 32], activation: Activation::Tanh },
        train: TrainConfig {
            epochs,
            batch_size: 64,
            lr: 0.05,
            schedule: LrSchedule::Constant,
            weight_decay: 1e-4,
            loss: LossKind::L2,
            validate_every_epoch: false,
        },
        optimizers: Vec::new(),
        sweep: None,
        sharpness: None,
    }
}

fn sharpness(slices: bool) -> SharpnessConfig {
    SharpnessConfig {
        subset: SubsetTag::Few,
        side: SubsetSide::Test,
        loss: None,
        iters: 200,
        tol: 1e-6,
        probes: 50,
        max_samples: Some(500),
        slice_offsets: if slices { (-10..=10).map(|i| i as f64 * 0.05).collect() } else { Vec::new() },
    }
}

/// Small matrix whose rows exercise the reduction properties end to end:
/// ρ = 0 cells reproduce SGD and uniform-weight BSAM reproduces SAM.
fn reduction_suite() -> ExperimentConfig {
    let mut cfg = base("reduction-suite", 2000, 500, 3);
    cfg.seeds = vec![0, 1];
    let mut bsam_uniform = cell("bsam_uniform", OptimizerKind::Bsam, 0.05, None);
    bsam_uniform.ascent_weights = WeightMode::Uniform;
    cfg.optimizers = vec![
        cell("sgd", OptimizerKind::Sgd, 0.0, None),
        cell("sam_rho0", OptimizerKind::Sam, 0.0, None),
        cell("bsam_rho0", OptimizerKind::Bsam, 0.0, None),
        cell("imbsam_rho0", OptimizerKind::Imbsam, 0.0, None),
        cell("sam", OptimizerKind::Sam, 0.05, None),
        bsam_uniform,
    ];
    cfg
}

fn bsam_vs_baselines() -> ExperimentConfig {
    let mut cfg = base("bsam-vs-baselines", 8000, 2000, 15);
    cfg.seeds = (0..5).collect();
    cfg.optimizers = vec![
        cell("sgd", OptimizerKind::Sgd, 0.0, None),
        cell("sgd_sqinv", OptimizerKind::Sgd, 0.0, Some(WeightMode::Sqinv)),
        cell("sam", OptimizerKind::Sam, 0.05, None),
        cell("imbsam", OptimizerKind::Imbsam, 0.05, None),
        cell("bsam", OptimizerKind::Bsam, 0.05, Some(WeightMode::Sqinv)),
    ];
    cfg.sharpness = Some(sharpness(true));
    cfg
}

fn rho_ablation() -> ExperimentConfig {
    let mut cfg = base("rho-ablation", 4000, 1000, 8);
    cfg.seeds = vec![0];
    cfg.optimizers = vec![
        cell("sam", OptimizerKind::Sam, 0.05, None),
        cell("imbsam", OptimizerKind::Imbsam, 0.05, None),
        cell("bsam", OptimizerKind::Bsam, 0.05, Some(WeightMode::Sqinv)),
    ];
    cfg.sweep = Some(SweepConfig { rho: vec![0.05, 0.1, 0.2] });
    cfg
}
