//! MAE, GM, RMSE, δ1 and bMAE, overall and per many/medium/few region.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imbalance::{LabelHistogram, Region, RegionMap};

/// Floor applied to absolute errors before the log in [`gm`].
pub const GM_EPS: f64 = 1e-6;
/// Ratio threshold of [`delta1`] (strict).
pub const DELTA1_THRESHOLD: f64 = 1.25;

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Shape {
            context: "metric inputs",
            expected: vec![truth.len()],
            got: vec![pred.len()],
        });
    }
    if pred.is_empty() {
        return Err(Error::contract("metric over an empty set"));
    }
    Ok(())
}

fn abs_errors<'a>(pred: &'a [f64], truth: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
    pred.iter().zip(truth).map(|(p, t)| (t - p).abs())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    Ok(abs_errors(pred, truth).sum::<f64>() / pred.len() as f64)
}

/// Geometric mean of absolute errors, computed in log space with errors
/// clamped below at [`GM_EPS`].
pub fn gm(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let mean_log = abs_errors(pred, truth).map(|e| e.max(GM_EPS).ln()).sum::<f64>() / pred.len() as f64;
    Ok(mean_log.exp())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let mse = pred.iter().zip(truth).map(|(p, t)| (t - p) * (t - p)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

/// Fraction of pairs with `max(y/ŷ, ŷ/y) < 1.25`. Needs strictly positive values.
pub fn delta1(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    if let Some(i) = pred.iter().chain(truth).position(|&v| !(v > 0.0)) {
        let v = if i < pred.len() { pred[i] } else { truth[i - pred.len()] };
        return Err(Error::contract(format!("delta1 needs positive values, got {v}")));
    }
    let hits = pred
        .iter()
        .zip(truth)
        .filter(|(p, t)| (*t / *p).max(*p / *t) < DELTA1_THRESHOLD)
        .count();
    Ok(hits as f64 / pred.len() as f64)
}

/// [`delta1`] for model output: a non-positive prediction counts as a miss
/// instead of failing the whole report. Truth must still be positive.
fn delta1_of_model(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let (pos_pred, pos_truth): (Vec<f64>, Vec<f64>) =
        pred.iter().zip(truth).filter(|(p, _)| **p > 0.0).map(|(p, t)| (*p, *t)).unzip();
    if let Some(t) = truth.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::contract(format!("delta1 needs positive targets, got {t}")));
    }
    if pos_pred.is_empty() {
        return Ok(0.0);
    }
    Ok(delta1(&pos_pred, &pos_truth)? * pos_pred.len() as f64 / pred.len() as f64)
}

/// Per-bin MAE averaged uniformly over the bins that contain test samples.
pub fn bmae(pred: &[f64], truth: &[f64], hist: &LabelHistogram) -> Result<f64> {
    check_pair(pred, truth)?;
    let k = hist.bins();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (p, t) in pred.iter().zip(truth) {
        let b = hist.bin_of(*t)?;
        sums[b] += (t - p).abs();
        counts[b] += 1;
    }
    let per_bin: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| s / c as f64)
        .collect();
    Ok(per_bin.iter().sum::<f64>() / per_bin.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mae,
    Gm,
    Rmse,
    Delta1,
    Bmae,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Mae, Metric::Gm, Metric::Rmse, Metric::Delta1, Metric::Bmae];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mae => "mae",
            Metric::Gm => "gm",
            Metric::Rmse => "rmse",
            Metric::Delta1 => "delta1",
            Metric::Bmae => "bmae",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::contract(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub mae: Option<f64>,
    pub gm: Option<f64>,
    pub rmse: Option<f64>,
    pub delta1: Option<f64>,
    pub bmae: Option<f64>,
}

impl MetricReport {
    /// Requested metrics over the pairs; all absent when the set is empty.
    pub fn compute(pred: &[f64], truth: &[f64], hist: &LabelHistogram, metrics: &[Metric]) -> Result<Self> {
        let mut r = MetricReport { n: pred.len(), ..Default::default() };
        if pred.is_empty() {
            return Ok(r);
        }
        for m in metrics {
            match m {
                Metric::Mae => r.mae = Some(mae(pred, truth)?),
                Metric::Gm => r.gm = Some(gm(pred, truth)?),
                Metric::Rmse => r.rmse = Some(rmse(pred, truth)?),
                Metric::Delta1 => r.delta1 = Some(delta1_of_model(pred, truth)?),
                Metric::Bmae => r.bmae = Some(bmae(pred, truth, hist)?),
            }
        }
        Ok(r)
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Mae => self.mae,
            Metric::Gm => self.gm,
            Metric::Rmse => self.rmse,
            Metric::Delta1 => self.delta1,
            Metric::Bmae => self.bmae,
        }
    }
}

/// Metrics over all test samples and over each training-count region.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub all: MetricReport,
    pub many: MetricReport,
    pub medium: MetricReport,
    pub few: MetricReport,
}

impl RegionReport {
    pub fn region(&self, region: Region) -> Option<&MetricReport> {
        match region {
            Region::Many => Some(&self.many),
            Region::Medium => Some(&self.medium),
            Region::Few => Some(&self.few),
            Region::Empty => None,
        }
    }

    /// `metric,all,many,medium,few` rows; absent values are empty cells.
    pub fn to_csv(&self, metrics: &[Metric]) -> String {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("metric,all,many,medium,few\n");
        for &m in metrics {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                m.name(),
                cell(self.all.get(m)),
                cell(self.many.get(m)),
                cell(self.medium.get(m)),
                cell(self.few.get(m)),
            );
        }
        out
    }
}

/// Splits test samples by the region of their label's training bin.
pub fn region_report(
    pred: &[f64],
    truth: &[f64],
    train_hist: &LabelHistogram,
    regions: &RegionMap,
    metrics: &[Metric],
) -> Result<RegionReport> {
    check_pair(pred, truth)?;
    let mut split: [(Vec<f64>, Vec<f64>); 3] = Default::default();
    for (&p, &t) in pred.iter().zip(truth) {
        let slot = match regions.region_of(train_hist, t)? {
            Region::Many => 0,
            Region::Medium => 1,
            Region::Few => 2,
            Region::Empty => continue,
        };
        split[slot].0.push(p);
        split[slot].1.push(t);
    }
    let [many, medium, few] = split;
    let report = |(p, t): &(Vec<f64>, Vec<f64>)| MetricReport::compute(p, t, train_hist, metrics);
    Ok(RegionReport {
        all: MetricReport::compute(pred, truth, train_hist, metrics)?,
        many: report(&many)?,
        medium: report(&medium)?,
        few: report(&few)?,
    })
}
