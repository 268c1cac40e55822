//! Executes an experiment matrix and writes its artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use bsam_core::datagen::{Batch, RegressionDataset};
use bsam_core::engine::MlpModel;
use bsam_core::imbalance::{assign_regions, HistogramArtifact, LabelHistogram, RegionMap, WeightMode, WeightTable};
use bsam_core::metrics::{region_report, Metric, RegionReport};
use bsam_core::optim::{OptimizerKind, PerturbationSpec};
use bsam_core::sharpness::{loss_slice, sharpness_report, PowerConfig, SharpnessReport};
use bsam_core::trainer::{train, Checkpoint, SeedProvenance, TrainInputs, TrainPlan};
use bsam_core::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{subset_region, ExperimentConfig, OptimizerCell, SharpnessConfig, SubsetSide};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Write the `# generated` header line and wall-clock values.
    pub timestamp: bool,
    /// Replaces the configured output directory.
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Diverged,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub optimizer: String,
    pub kind: OptimizerKind,
    pub rho: f64,
    pub seed: u64,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub report: Option<RegionReport>,
    pub sharpness: Option<SharpnessReport>,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub steps: u64,
    pub backward_passes: u64,
    pub epoch_losses: Vec<f64>,
    pub wall_s: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub schema_version: u32,
    pub output_dir: PathBuf,
    pub rows: Vec<ResultRow>,
}

struct Prepared {
    train: RegressionDataset,
    test: RegressionDataset,
    hist: LabelHistogram,
    regions: RegionMap,
}

/// Runs every (seed, optimizer, ρ) cell; seeds are the outermost loop.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> anyhow::Result<RunSummary> {
    cfg.validate()?;
    let out = opts.output_dir.clone().unwrap_or_else(|| cfg.resolved_output_dir());
    fs::create_dir_all(out.join("checkpoints"))
        .with_context(|| format!("creating output directory {}", out.display()))?;
    if cfg.sharpness.as_ref().is_some_and(|s| !s.slice_offsets.is_empty()) {
        fs::create_dir_all(out.join("slices"))?;
    }

    let (train_set, test) = cfg.load_data()?;
    let hist = LabelHistogram::build(&train_set.labels, train_set.lower, train_set.upper, cfg.bins.k)?;
    let regions = assign_regions(&hist, cfg.bins.many, cfg.bins.few)?;
    let data = Prepared { train: train_set, test, hist, regions };

    let jobs: Vec<(u64, &OptimizerCell, f64)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| cfg.cells().into_iter().map(move |(c, r)| (s, c, r)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(seed, cell, rho)| run_cell(cfg, &data, &out, seed, cell, rho, opts.timestamp))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let table = WeightTable::compute(&data.hist, WeightMode::Inv, true)?;
    fs::write(out.join("histogram.json"), serde_json::to_string_pretty(&HistogramArtifact::new(&data.hist, &table))?)?;
    fs::write(out.join("config.toml"), cfg.to_toml())?;
    fs::write(out.join("results.csv"), results_csv(&rows, &cfg.metrics, opts.timestamp))?;
    let summary = RunSummary {
        name: cfg.name.clone(),
        schema_version: cfg.schema_version,
        output_dir: out.clone(),
        rows,
    };
    fs::write(out.join("results.json"), serde_json::to_string_pretty(&summary)?)?;
    if cfg.sharpness.is_some() {
        let entries: Vec<_> = summary
            .rows
            .iter()
            .filter_map(|r| {
                r.sharpness.as_ref().map(|s| {
                    serde_json::json!({ "optimizer": r.optimizer, "rho": r.rho, "seed": r.seed, "report": s })
                })
            })
            .collect();
        fs::write(out.join("sharpness.json"), serde_json::to_string_pretty(&entries)?)?;
    }
    Ok(summary)
}

fn cell_stem(name: &str, rho: f64, seed: u64) -> String {
    format!("{name}_rho{rho}_seed{seed}")
}

fn run_cell(
    cfg: &ExperimentConfig,
    data: &Prepared,
    out: &Path,
    seed: u64,
    cell: &OptimizerCell,
    rho: f64,
    timed: bool,
) -> anyhow::Result<ResultRow> {
    let start = std::time::Instant::now();
    let mut widths = vec![data.train.dim()];
    widths.extend(&cfg.model.hidden);
    widths.push(1);
    let mut model = MlpModel::new(widths, cfg.model.activation, seed)?;
    let plan = TrainPlan {
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        lr: cfg.train.lr,
        schedule: cfg.train.schedule,
        weight_decay: cfg.train.weight_decay,
        shuffle_seed: seed,
        optimizer: cell.kind,
        perturbation: PerturbationSpec::new(rho, cell.kind.weighting()).with_p(cell.p),
        loss: cfg.train.loss,
        objective_weighting: cell.objective,
        validate_every_epoch: cfg.train.validate_every_epoch,
        metrics: cfg.metrics.clone(),
    };
    let weights = WeightTable::compute(&data.hist, cell.ascent_weights, true)?;
    let inputs = TrainInputs {
        train: &data.train,
        val: Some(&data.test),
        hist: &data.hist,
        weights: &weights,
        regions: &data.regions,
    };
    let mut row = ResultRow {
        optimizer: cell.name.clone(),
        kind: cell.kind,
        rho,
        seed,
        status: Status::Ok,
        message: None,
        report: None,
        sharpness: None,
        epochs: plan.epochs,
        batches_per_epoch: data.train.len().div_ceil(plan.batch_size),
        steps: 0,
        backward_passes: 0,
        epoch_losses: Vec::new(),
        wall_s: None,
    };
    let label = format!("{} rho={rho} seed={seed}", cell.name);
    let trace = match train(&plan, &mut model, &inputs) {
        Ok(t) => t,
        Err(e @ Error::Diverged { .. }) => {
            row.status = Status::Diverged;
            row.message = Some(e.to_string());
            row.wall_s = timed.then(|| start.elapsed().as_secs_f64());
            return Ok(row);
        }
        Err(e) => return Err(e).with_context(|| format!("training {label}")),
    };
    row.steps = trace.steps;
    row.backward_passes = trace.backward_passes;
    row.epoch_losses = trace.epoch_losses;

    let pred = model.predict(&data.test.features)?;
    row.report = Some(
        region_report(&pred, &data.test.labels, &data.hist, &data.regions, &cfg.metrics)
            .with_context(|| format!("evaluating {label}"))?,
    );
    let stem = cell_stem(&cell.name, rho, seed);
    let seeds = SeedProvenance { init_seed: seed, shuffle_seed: seed, data_seed: cfg.synthetic_seed() };
    Checkpoint::new(&model, seeds).save(out.join("checkpoints").join(format!("{stem}.json")))?;

    if let Some(sc) = &cfg.sharpness {
        row.sharpness = diagnostics(cfg, sc, data, &model, seed, out, &stem).with_context(|| format!("diagnostics for {label}"))?;
    }
    row.wall_s = timed.then(|| start.elapsed().as_secs_f64());
    Ok(row)
}

fn diagnostics(
    cfg: &ExperimentConfig,
    sc: &SharpnessConfig,
    data: &Prepared,
    model: &MlpModel,
    seed: u64,
    out: &Path,
    stem: &str,
) -> anyhow::Result<Option<SharpnessReport>> {
    let ds = match sc.side {
        SubsetSide::Train => &data.train,
        SubsetSide::Test => &data.test,
    };
    let mut idx = Vec::new();
    for (i, &y) in ds.labels.iter().enumerate() {
        let keep = match subset_region(sc.subset) {
            None => true,
            Some(r) => data.regions.region_of(&data.hist, y)? == r,
        };
        if keep {
            idx.push(i);
        }
    }
    if let Some(cap) = sc.max_samples {
        idx.truncate(cap);
    }
    if idx.is_empty() {
        return Ok(None);
    }
    let batch: Batch = ds.batch(&idx);
    let loss = sc.loss.unwrap_or(cfg.train.loss);
    let power = PowerConfig { iters: sc.iters, tol: sc.tol, seed };
    let report = sharpness_report(model, &batch, loss, &power, sc.probes, sc.subset)?;
    if !sc.slice_offsets.is_empty() {
        let slice = loss_slice(model, &batch, loss, seed, &sc.slice_offsets)?;
        fs::write(out.join("slices").join(format!("{stem}.csv")), slice.to_csv())?;
    }
    Ok(Some(report))
}

pub const REGIONS: [&str; 4] = ["all", "many", "medium", "few"];

pub fn csv_header(metrics: &[Metric]) -> String {
    let mut cols = vec!["optimizer".to_string(), "rho".into(), "seed".into(), "status".into()];
    for m in metrics {
        cols.extend(REGIONS.iter().map(|r| format!("{}_{r}", m.name())));
    }
    cols.extend(["lambda_max".into(), "trace_h".into(), "wall_s".into()]);
    cols.join(",")
}

/// `results.csv`; without `timestamp` the output is a pure function of the config.
pub fn results_csv(rows: &[ResultRow], metrics: &[Metric], timestamp: bool) -> String {
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::new();
    if timestamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let _ = writeln!(out, "# generated_unix={secs}");
    }
    out.push_str(&csv_header(metrics));
    out.push('\n');
    for r in rows {
        let mut cols = vec![r.optimizer.clone(), r.rho.to_string(), r.seed.to_string(), r.status.as_str().into()];
        let regions = r.report.as_ref().map(|x| [&x.all, &x.many, &x.medium, &x.few]);
        for &m in metrics {
            for i in 0..REGIONS.len() {
                cols.push(cell(regions.and_then(|rs| rs[i].get(m))));
            }
        }
        cols.push(cell(r.sharpness.as_ref().map(|s| s.lambda_max)));
        cols.push(cell(r.sharpness.as_ref().map(|s| s.trace)));
        cols.push(cell(r.wall_s));
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}
