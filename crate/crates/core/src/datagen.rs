//! Synthetic imbalanced regression data and CSV ingestion.
//!
//! Training labels follow a skewed density over `[L, U]`; test labels are
//! uniform over the same range so the evaluation target is balanced. Features
//! are a deterministic function of the normalized label plus Gaussian noise.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Scale of the Lomax tail used by [`DensityProfile::ParetoTail`], in
/// normalized label units.
pub const PARETO_SCALE: f64 = 0.1;
pub const DEFAULT_EXPONENTIAL_RATE: f64 = 5.0;
pub const DEFAULT_PARETO_ALPHA: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityProfile {
    Uniform,
    /// Density `∝ exp(-rate·z)` with `z = (y-L)/(U-L)`.
    Exponential { rate: f64 },
    /// Density `∝ (1 + z/PARETO_SCALE)^-(alpha+1)`.
    ParetoTail { alpha: f64 },
    /// Mixture of two Gaussians truncated to `[L, U]`; `p` weights the first.
    TwoMode {
        p: f64,
        centers: [f64; 2],
        widths: [f64; 2],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    /// `cos(π(j+1)z)` for `j < d`.
    Trig { d: usize },
    /// `(2z-1)^(j+1)` for `j < degree`.
    Poly { degree: usize },
    /// `d` copies of `y/(U-L)`.
    Linear { d: usize },
}

impl FeatureMap {
    pub fn dim(self) -> usize {
        match self {
            FeatureMap::Trig { d } | FeatureMap::Linear { d } => d,
            FeatureMap::Poly { degree } => degree,
        }
    }

    fn apply(self, y: f64, lower: f64, upper: f64, out: &mut Vec<f64>) {
        let z = (y - lower) / (upper - lower);
        match self {
            FeatureMap::Trig { d } => out.extend((0..d).map(|j| (PI * (j + 1) as f64 * z).cos())),
            FeatureMap::Poly { degree } => {
                out.extend((0..degree).map(|j| (2.0 * z - 1.0).powi(j as i32 + 1)))
            }
            FeatureMap::Linear { d } => out.extend(std::iter::repeat_n(y / (upper - lower), d)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub lower: f64,
    pub upper: f64,
    pub profile: DensityProfile,
    pub features: FeatureMap,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_train: 20_000,
            n_test: 5_000,
            lower: 1.0,
            upper: 11.0,
            profile: DensityProfile::Exponential { rate: DEFAULT_EXPONENTIAL_RATE },
            features: FeatureMap::Trig { d: 4 },
            noise_sigma: 0.1,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Dataset(msg));
        if self.n_train == 0 || self.n_test == 0 {
            return bad("n_train and n_test must be positive".into());
        }
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return bad(format!("label range [{}, {}] needs L < U", self.lower, self.upper));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma {} must be non-negative", self.noise_sigma));
        }
        if self.features.dim() == 0 {
            return bad("feature map needs at least one output".into());
        }
        match &self.profile {
            DensityProfile::Uniform => {}
            DensityProfile::Exponential { rate } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return bad(format!("exponential rate {rate} must be positive"));
                }
            }
            DensityProfile::ParetoTail { alpha } => {
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    return bad(format!("pareto alpha {alpha} must be positive"));
                }
            }
            DensityProfile::TwoMode { p, centers, widths } => {
                if !(0.0..=1.0).contains(p) {
                    return bad(format!("mixture weight {p} outside [0, 1]"));
                }
                if centers.iter().any(|c| !(*c >= self.lower && *c <= self.upper)) {
                    return bad(format!("mode centers {centers:?} must lie in the label range"));
                }
                if widths.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                    return bad(format!("mode widths {widths:?} must be positive"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Rows of a minibatch or evaluation subset.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Tensor,
    pub targets: Vec<f64>,
}

impl Batch {
    pub fn new(inputs: Tensor, targets: Vec<f64>) -> Result<Self> {
        if inputs.rows() != targets.len() {
            return Err(Error::Shape {
                context: "batch rows",
                expected: vec![targets.len()],
                got: inputs.shape().to_vec(),
            });
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn target_tensor(&self) -> Tensor {
        Tensor::column(&self.targets)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    pub features: Tensor,
    pub labels: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub split: Split,
}

impl RegressionDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn batch(&self, idx: &[usize]) -> Batch {
        Batch {
            inputs: self.features.select_rows(idx),
            targets: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn as_batch(&self) -> Batch {
        Batch {
            inputs: self.features.clone(),
            targets: self.labels.clone(),
        }
    }

    /// Writes `x0,..,x{d-1},<label_column>` with a header row.
    pub fn write_csv(&self, mut w: impl Write, label_column: &str) -> Result<()> {
        let d = self.dim();
        let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        header.push(label_column.to_string());
        writeln!(w, "{}", header.join(","))?;
        for (i, y) in self.labels.iter().enumerate() {
            let mut row: Vec<String> = self.features.row(i).iter().map(|v| v.to_string()).collect();
            row.push(y.to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w, label_column)?;
        w.flush()?;
        Ok(())
    }
}

fn sample_label(profile: &DensityProfile, lower: f64, upper: f64, rng: &mut impl Rng) -> Result<f64> {
    let span = upper - lower;
    let z = match profile {
        DensityProfile::Uniform => rng.random::<f64>(),
        DensityProfile::Exponential { rate } => {
            let u: f64 = rng.random();
            -(1.0 - u * (1.0 - (-rate).exp())).ln() / rate
        }
        DensityProfile::ParetoTail { alpha } => {
            // Lomax CDF F(z) = 1 - (1 + z/s)^-α truncated to [0, 1].
            let u: f64 = rng.random();
            let f1 = 1.0 - (1.0 + 1.0 / PARETO_SCALE).powf(-alpha);
            PARETO_SCALE * ((1.0 - u * f1).powf(-1.0 / alpha) - 1.0)
        }
        DensityProfile::TwoMode { p, centers, widths } => {
            let m = if rng.random::<f64>() < *p { 0 } else { 1 };
            let normal = Normal::new(centers[m], widths[m])
                .map_err(|e| Error::Dataset(e.to_string()))?;
            let mut tries = 0;
            loop {
                let y = normal.sample(rng);
                if (lower..=upper).contains(&y) {
                    break (y - lower) / span;
                }
                tries += 1;
                if tries > 100_000 {
                    return Err(Error::Dataset("mixture mode has negligible mass in range".into()));
                }
            }
        }
    };
    Ok((lower + z.clamp(0.0, 1.0) * span).clamp(lower, upper))
}

fn make_split(
    spec: &DatasetSpec,
    n: usize,
    profile: &DensityProfile,
    split: Split,
    rng: &mut impl Rng,
) -> Result<RegressionDataset> {
    let d = spec.features.dim();
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Dataset(e.to_string()))?;
    let mut labels = Vec::with_capacity(n);
    let mut feats = Vec::with_capacity(n * d);
    for _ in 0..n {
        let y = sample_label(profile, spec.lower, spec.upper, rng)?;
        let start = feats.len();
        spec.features.apply(y, spec.lower, spec.upper, &mut feats);
        if spec.noise_sigma > 0.0 {
            for f in &mut feats[start..] {
                *f += noise.sample(rng);
            }
        }
        labels.push(y);
    }
    Ok(RegressionDataset {
        features: Tensor::matrix(n, d, feats)?,
        labels,
        lower: spec.lower,
        upper: spec.upper,
        split,
    })
}

/// Imbalanced train split and uniform (balanced) test split; a pure function of `spec`.
pub fn generate(spec: &DatasetSpec) -> Result<(RegressionDataset, RegressionDataset)> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, Stream::Data);
    let train = make_split(spec, spec.n_train, &spec.profile, Split::Train, &mut rng)?;
    let test = make_split(spec, spec.n_test, &DensityProfile::Uniform, Split::Test, &mut rng)?;
    Ok((train, test))
}

/// Reads a headered numeric CSV; every non-label column becomes a feature.
pub fn read_csv(
    reader: impl Read,
    label_column: &str,
    range: Option<(f64, f64)>,
) -> Result<RegressionDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Dataset(format!("unreadable header: {e}")))?
        .clone();
    if headers.is_empty() {
        return Err(Error::Dataset("empty file".into()));
    }
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| Error::Dataset(format!("missing label column {label_column:?}")))?;
    let d = headers.len() - 1;
    if d == 0 {
        return Err(Error::contract("csv has no feature columns besides the label"));
    }
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        // header is row 1
        let row = r + 2;
        let record = record.map_err(|e| Error::CsvParse { row, col: 0, message: e.to_string() })?;
        if record.len() != headers.len() {
            return Err(Error::CsvParse {
                row,
                col: record.len() + 1,
                message: format!("expected {} cells, found {}", headers.len(), record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::CsvParse {
                row,
                col: c + 1,
                message: format!("non-numeric cell {cell:?}"),
            })?;
            if c == label_idx {
                labels.push(v);
            } else {
                feats.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::Dataset("csv has a header but no data rows".into()));
    }
    let (lower, upper) = match range {
        Some(r) => r,
        None => labels.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
            (lo.min(y), hi.max(y))
        }),
    };
    if let Some(&bad) = labels.iter().find(|&&y| !(y >= lower && y <= upper)) {
        return Err(Error::Range { value: bad, lower, upper });
    }
    Ok(RegressionDataset {
        features: Tensor::matrix(labels.len(), d, feats)?,
        labels,
        lower,
        upper,
        split: Split::Train,
    })
}

pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    range: Option<(f64, f64)>,
) -> Result<RegressionDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, label_column, range)
}
