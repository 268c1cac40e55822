//! TOML experiment configuration.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use bsam_core::datagen::{generate, load_csv, DatasetSpec, RegressionDataset, Split};
use bsam_core::engine::Activation;
use bsam_core::imbalance::{Region, WeightMode};
use bsam_core::losses::LossKind;
use bsam_core::metrics::Metric;
use bsam_core::optim::OptimizerKind;
use bsam_core::sharpness::SubsetTag;
use bsam_core::trainer::LrSchedule;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
/// Relative output directories are resolved against this variable when set.
pub const OUTPUT_ROOT_ENV: &str = "BSAM_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub metrics: Vec<Metric>,
    pub data: DataSource,
    pub bins: BinConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub optimizers: Vec<OptimizerCell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sharpness: Option<SharpnessConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(DatasetSpec),
    Csv {
        train: PathBuf,
        test: PathBuf,
        #[serde(default = "default_label")]
        label: String,
        /// Label range; inferred from both files when absent.
        #[serde(default)]
        range: Option<[f64; 2]>,
    },
}

fn default_label() -> String {
    "y".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinConfig {
    pub k: usize,
    /// Bins with more training samples than this are Many-shot.
    pub many: usize,
    /// Non-empty bins with fewer training samples than this are Few-shot.
    pub few: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default = "constant_schedule")]
    pub schedule: LrSchedule,
    #[serde(default)]
    pub weight_decay: f64,
    pub loss: LossKind,
    #[serde(default)]
    pub validate_every_epoch: bool,
}

fn constant_schedule() -> LrSchedule {
    LrSchedule::Constant
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerCell {
    /// Row label in results; must be unique.
    pub name: String,
    pub kind: OptimizerKind,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    /// Reweighting of the descent objective; absent means the plain mean loss.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<WeightMode>,
    /// Bin weights of the BSAM ascent loss.
    #[serde(default = "default_ascent")]
    pub ascent_weights: WeightMode,
}

fn default_p() -> f64 {
    2.0
}

fn default_ascent() -> WeightMode {
    WeightMode::Inv
}

/// ρ values that replace each SAM-family cell's own ρ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub rho: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetSide {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharpnessConfig {
    pub subset: SubsetTag,
    #[serde(default = "default_side")]
    pub side: SubsetSide,
    /// Loss for the diagnostics; defaults to the training loss.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossKind>,
    pub iters: usize,
    pub tol: f64,
    pub probes: usize,
    /// Cap on subset size; the first samples of the subset are kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slice_offsets: Vec<f64>,
}

fn default_side() -> SubsetSide {
    SubsetSide::Test
}

pub fn subset_region(tag: SubsetTag) -> Option<Region> {
    match tag {
        SubsetTag::All => None,
        SubsetTag::Many => Some(Region::Many),
        SubsetTag::Medium => Some(Region::Medium),
        SubsetTag::Few => Some(Region::Few),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version);
        }
        if self.seeds.is_empty() {
            bail!("seeds: at least one seed is required");
        }
        if self.optimizers.is_empty() {
            bail!("optimizers: at least one optimizer is required");
        }
        let mut names = HashSet::new();
        for cell in &self.optimizers {
            if !names.insert(cell.name.as_str()) {
                bail!("optimizers: duplicate name {:?}", cell.name);
            }
            if cell.name.is_empty() || cell.name.contains([',', '/', '\\']) {
                bail!("optimizers: name {:?} must be non-empty without ',' or path separators", cell.name);
            }
            if !(cell.rho >= 0.0 && cell.rho.is_finite()) {
                bail!("optimizers.{}: rho {} must be non-negative", cell.name, cell.rho);
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.rho.is_empty() || sweep.rho.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
                bail!("sweep.rho must be a non-empty list of non-negative values");
            }
        }
        if self.bins.k == 0 {
            bail!("bins.k must be positive");
        }
        if !(self.bins.few > 0 && self.bins.few <= self.bins.many) {
            bail!("bins: need 0 < few <= many, got few={} many={}", self.bins.few, self.bins.many);
        }
        if self.model.hidden.contains(&0) {
            bail!("model.hidden widths must be positive");
        }
        if let Some(s) = &self.sharpness {
            if s.iters == 0 || s.probes == 0 {
                bail!("sharpness: iters and probes must be at least 1");
            }
            if s.max_samples == Some(0) {
                bail!("sharpness.max_samples must be positive");
            }
        }
        if self.metrics.is_empty() {
            bail!("metrics: at least one metric is required");
        }
        Ok(())
    }

    /// (cell, ρ) pairs in declaration order.
    pub fn cells(&self) -> Vec<(&OptimizerCell, f64)> {
        let mut out = Vec::new();
        for cell in &self.optimizers {
            match (&self.sweep, cell.kind) {
                (Some(sweep), kind) if kind != OptimizerKind::Sgd => {
                    out.extend(sweep.rho.iter().map(|&r| (cell, r)));
                }
                (_, OptimizerKind::Sgd) => out.push((cell, 0.0)),
                _ => out.push((cell, cell.rho)),
            }
        }
        out
    }

    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn load_data(&self) -> anyhow::Result<(RegressionDataset, RegressionDataset)> {
        match &self.data {
            DataSource::Synthetic(spec) => Ok(generate(spec)?),
            DataSource::Csv { train, test, label, range } => {
                let read = |p: &Path, r| load_csv(p, label, r).with_context(|| format!("loading {}", p.display()));
                let range = match range {
                    Some([lo, hi]) => (*lo, *hi),
                    None => {
                        let a = read(train, None)?;
                        let b = read(test, None)?;
                        (a.lower.min(b.lower), a.upper.max(b.upper))
                    }
                };
                let tr = read(train, Some(range))?;
                let mut te = read(test, Some(range))?;
                te.split = Split::Test;
                if tr.dim() != te.dim() {
                    bail!("train has {} features but test has {}", tr.dim(), te.dim());
                }
                Ok((tr, te))
            }
        }
    }

    pub fn synthetic_seed(&self) -> u64 {
        match &self.data {
            DataSource::Synthetic(spec) => spec.seed,
            DataSource::Csv { .. } => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn presets_round_trip_through_toml() {
        for name in presets::NAMES {
            let cfg = presets::preset(name).unwrap();
            let back = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn parse_errors_name_the_field() {
        let cfg = presets::preset("reduction-suite").unwrap();
        let text = cfg.to_toml().replace("batch_size = ", "batch_sise = ");
        let err = format!("{:#}", ExperimentConfig::parse(&text).unwrap_err());
        assert!(err.contains("batch_sise"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn validation() {
        let base = presets::preset("reduction-suite").unwrap();
        let mut c = base.clone();
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.optimizers.push(c.optimizers[0].clone());
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.schema_version = 2;
        assert!(c.validate().is_err());
        let mut c = base;
        c.bins.few = c.bins.many + 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn sweep_expands_sam_family_only() {
        let mut c = presets::preset("reduction-suite").unwrap();
        c.sweep = Some(SweepConfig { rho: vec![0.05, 0.1] });
        let sgd = c.optimizers.iter().filter(|o| o.kind == OptimizerKind::Sgd).count();
        assert_eq!(c.cells().len(), sgd + 2 * (c.optimizers.len() - sgd));
    }
}
