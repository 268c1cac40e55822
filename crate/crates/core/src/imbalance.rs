//! Label-space binning, importance weights and many/medium/few regions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K` equal-width bins over the closed label interval `[L, U]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelHistogram {
    lower: f64,
    upper: f64,
    edges: Vec<f64>,
    counts: Vec<usize>,
}

impl LabelHistogram {
    /// Empty histogram with `bins` bins over `[lower, upper]`.
    pub fn empty(lower: f64, upper: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::contract("bin count must be at least 1"));
        }
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::contract(format!(
                "label range must satisfy L < U, got [{lower}, {upper}]"
            )));
        }
        let width = (upper - lower) / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|k| lower + k as f64 * width).collect();
        edges.push(upper);
        Ok(Self {
            lower,
            upper,
            edges,
            counts: vec![0; bins],
        })
    }

    pub fn build(labels: &[f64], lower: f64, upper: f64, bins: usize) -> Result<Self> {
        let mut hist = Self::empty(lower, upper, bins)?;
        for &y in labels {
            let k = hist.bin_of(y)?;
            hist.counts[k] += 1;
        }
        Ok(hist)
    }

    /// Bin index of `y`; `y == U` lands in the last bin.
    pub fn bin_of(&self, y: f64) -> Result<usize> {
        if !(y >= self.lower && y <= self.upper) {
            return Err(Error::Range {
                value: y,
                lower: self.lower,
                upper: self.upper,
            });
        }
        let k = ((y - self.lower) / self.width()).floor() as usize;
        Ok(k.min(self.bins() - 1))
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.upper - self.lower) / self.bins() as f64
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn build_histogram(labels: &[f64], lower: f64, upper: f64, bins: usize) -> Result<LabelHistogram> {
    LabelHistogram::build(labels, lower, upper, bins)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// `1 / n_k`
    Inv,
    /// `sqrt(1 / n_k)`
    Sqinv,
    Uniform,
    Custom,
}

impl std::str::FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "inv" => Ok(WeightMode::Inv),
            "sqinv" => Ok(WeightMode::Sqinv),
            "uniform" | "none" => Ok(WeightMode::Uniform),
            other => Err(Error::contract(format!("unknown weighting mode {other:?}"))),
        }
    }
}

/// Per-bin importance weights `w(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub mode: WeightMode,
    pub weights: Vec<f64>,
    /// Factor applied to the raw weights (1 when normalization is off).
    pub normalization: f64,
}

impl WeightTable {
    /// Raw weights for `mode`, rescaled to a sample-mean of 1 when `normalize`.
    pub fn compute(hist: &LabelHistogram, mode: WeightMode, normalize: bool) -> Result<Self> {
        let n = hist.total();
        if n == 0 {
            return Err(Error::contract("cannot weight a histogram with every bin empty"));
        }
        let raw: Vec<f64> = hist
            .counts()
            .iter()
            .map(|&c| match (c, mode) {
                (0, _) => 0.0,
                (c, WeightMode::Inv) => 1.0 / c as f64,
                (c, WeightMode::Sqinv) => (1.0 / c as f64).sqrt(),
                (_, WeightMode::Uniform) => 1.0,
                (_, WeightMode::Custom) => unreachable!("custom tables use from_weights"),
            })
            .collect();
        let normalization = if normalize {
            let mass: f64 = raw
                .iter()
                .zip(hist.counts())
                .map(|(w, &c)| w * c as f64)
                .sum();
            n as f64 / mass
        } else {
            1.0
        };
        let weights = raw.iter().map(|w| w * normalization).collect();
        Ok(Self {
            mode,
            weights,
            normalization,
        })
    }

    /// A caller-supplied table; zero is only allowed on empty bins.
    pub fn from_weights(hist: &LabelHistogram, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != hist.bins() {
            return Err(Error::Shape {
                context: "custom weight table",
                expected: vec![hist.bins()],
                got: vec![weights.len()],
            });
        }
        for (k, (&w, &c)) in weights.iter().zip(hist.counts()).enumerate() {
            if !w.is_finite() || w < 0.0 || (w == 0.0 && c > 0) {
                return Err(Error::contract(format!("invalid weight {w} for bin {k} with {c} samples")));
            }
        }
        Ok(Self {
            mode: WeightMode::Custom,
            weights,
            normalization: 1.0,
        })
    }

    pub fn weight(&self, bin: usize) -> f64 {
        self.weights[bin]
    }
}

pub fn compute_weights(hist: &LabelHistogram, mode: WeightMode) -> Result<WeightTable> {
    WeightTable::compute(hist, mode, true)
}

/// Per-sample weights `w(k(y_i))`.
pub fn sample_weights(hist: &LabelHistogram, table: &WeightTable, labels: &[f64]) -> Result<Vec<f64>> {
    if table.weights.len() != hist.bins() {
        return Err(Error::contract("weight table does not match the histogram"));
    }
    labels
        .iter()
        .map(|&y| Ok(table.weight(hist.bin_of(y)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Many,
    Medium,
    Few,
    Empty,
}

impl Region {
    pub const SHOTS: [Region; 3] = [Region::Many, Region::Medium, Region::Few];

    pub fn name(self) -> &'static str {
        match self {
            Region::Many => "many",
            Region::Medium => "medium",
            Region::Few => "few",
            Region::Empty => "empty",
        }
    }
}

/// Region of every bin, derived from the training counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMap {
    pub many_threshold: usize,
    pub few_threshold: usize,
    pub regions: Vec<Region>,
}

impl RegionMap {
    /// Many iff `n > many`, Few iff `0 < n < few`, Medium otherwise.
    pub fn classify(count: usize, many_threshold: usize, few_threshold: usize) -> Region {
        if count == 0 {
            Region::Empty
        } else if count > many_threshold {
            Region::Many
        } else if count < few_threshold {
            Region::Few
        } else {
            Region::Medium
        }
    }

    pub fn region(&self, bin: usize) -> Region {
        self.regions[bin]
    }

    pub fn region_of(&self, hist: &LabelHistogram, y: f64) -> Result<Region> {
        Ok(self.region(hist.bin_of(y)?))
    }
}

pub fn assign_regions(hist: &LabelHistogram, many_threshold: usize, few_threshold: usize) -> Result<RegionMap> {
    if few_threshold == 0 || few_threshold > many_threshold {
        return Err(Error::contract(format!(
            "region thresholds need 0 < few ({few_threshold}) <= many ({many_threshold})"
        )));
    }
    Ok(RegionMap {
        many_threshold,
        few_threshold,
        regions: hist
            .counts()
            .iter()
            .map(|&c| RegionMap::classify(c, many_threshold, few_threshold))
            .collect(),
    })
}

/// JSON artifact: `edges`, `counts`, `weights`, `mode`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramArtifact {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub weights: Vec<f64>,
    pub mode: WeightMode,
}

impl HistogramArtifact {
    pub fn new(hist: &LabelHistogram, table: &WeightTable) -> Self {
        Self {
            edges: hist.edges().to_vec(),
            counts: hist.counts().to_vec(),
            weights: table.weights.clone(),
            mode: table.mode,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist_with_counts(counts: &[usize]) -> LabelHistogram {
        let k = counts.len();
        let mut labels = Vec::new();
        for (bin, &c) in counts.iter().enumerate() {
            labels.extend(std::iter::repeat_n(bin as f64 + 0.5, c));
        }
        LabelHistogram::build(&labels, 0.0, k as f64, k).unwrap()
    }

    #[test]
    fn midpoint_goes_up_and_upper_clamps() {
        let h = LabelHistogram::build(&[0.0, 0.0, 5.0, 10.0], 0.0, 10.0, 2).unwrap();
        assert_eq!(h.counts(), &[2, 2]);
    }

    #[test]
    fn pile_up_at_lower_bound() {
        let h = LabelHistogram::build(&[1.0; 7], 1.0, 3.0, 4).unwrap();
        assert_eq!(h.counts(), &[7, 0, 0, 0]);
    }

    #[test]
    fn empty_labels_give_zero_counts() {
        let h = LabelHistogram::build(&[], 0.0, 1.0, 3).unwrap();
        assert_eq!(h.counts(), &[0, 0, 0]);
    }

    #[test]
    fn out_of_range_label_reports_value() {
        match LabelHistogram::build(&[0.5, 11.0], 0.0, 10.0, 2).unwrap_err() {
            Error::Range { value, .. } => assert_eq!(value, 11.0),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn edges_are_uniform() {
        let h = LabelHistogram::empty(1.0, 11.0, 20).unwrap();
        assert_eq!(h.edges().len(), 21);
        assert_eq!(h.edges()[0], 1.0);
        assert_eq!(h.edges()[20], 11.0);
        for w in h.edges().windows(2) {
            assert!((w[1] - w[0] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn inv_weights_normalized_by_hand() {
        let h = hist_with_counts(&[2, 8]);
        let raw = WeightTable::compute(&h, WeightMode::Inv, false).unwrap();
        assert_eq!(raw.weights, vec![0.5, 0.125]);
        let t = compute_weights(&h, WeightMode::Inv).unwrap();
        assert!((t.weights[0] - 2.5).abs() < 1e-12);
        assert!((t.weights[1] - 0.625).abs() < 1e-12);
    }

    #[test]
    fn balanced_counts_make_every_mode_uniform() {
        let h = hist_with_counts(&[4, 4, 4]);
        for mode in [WeightMode::Inv, WeightMode::Sqinv, WeightMode::Uniform] {
            let t = compute_weights(&h, mode).unwrap();
            for w in t.weights {
                assert!((w - 1.0).abs() < 1e-12, "{mode:?}");
            }
        }
    }

    #[test]
    fn sqinv_ratio() {
        let h = hist_with_counts(&[1, 100]);
        let raw = WeightTable::compute(&h, WeightMode::Sqinv, false).unwrap();
        assert!((raw.weights[0] - 1.0).abs() < 1e-15);
        assert!((raw.weights[1] - 0.1).abs() < 1e-15);
        let t = compute_weights(&h, WeightMode::Sqinv).unwrap();
        assert!((t.weights[0] / t.weights[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_gives_sample_mean_one_and_zero_on_empty() {
        let h = hist_with_counts(&[3, 0, 17, 1]);
        for mode in [WeightMode::Inv, WeightMode::Sqinv, WeightMode::Uniform] {
            let t = compute_weights(&h, mode).unwrap();
            let mean: f64 = t
                .weights
                .iter()
                .zip(h.counts())
                .map(|(w, &c)| w * c as f64)
                .sum::<f64>()
                / h.total() as f64;
            assert!((mean - 1.0).abs() < 1e-9);
            assert_eq!(t.weights[1], 0.0);
            assert!(t.weights.iter().enumerate().all(|(k, &w)| k == 1 || w > 0.0));
        }
    }

    #[test]
    fn all_empty_is_a_contract_error() {
        let h = LabelHistogram::empty(0.0, 1.0, 4).unwrap();
        assert!(matches!(compute_weights(&h, WeightMode::Inv), Err(Error::Contract(_))));
    }

    #[test]
    fn sample_weight_lookup() {
        let h = hist_with_counts(&[2, 8]);
        let t = compute_weights(&h, WeightMode::Inv).unwrap();
        let w = sample_weights(&h, &t, &[0.3, 1.7, 2.0]).unwrap();
        assert!((w[0] - 2.5).abs() < 1e-12);
        assert!((w[1] - 0.625).abs() < 1e-12);
        assert_eq!(w[2], w[1]);
        let u = compute_weights(&h, WeightMode::Uniform).unwrap();
        assert_eq!(sample_weights(&h, &u, &[0.1, 1.9]).unwrap(), vec![1.0, 1.0]);
        assert!(sample_weights(&h, &t, &[2.5]).is_err());
    }

    #[test]
    fn regions_follow_strict_thresholds() {
        let classify = |counts: &[usize]| assign_regions(&hist_with_counts(counts), 100, 20).unwrap().regions;
        assert_eq!(classify(&[150, 50, 5]), vec![Region::Many, Region::Medium, Region::Few]);
        assert_eq!(classify(&[100]), vec![Region::Medium]);
        assert_eq!(classify(&[20, 19, 101]), vec![Region::Medium, Region::Few, Region::Many]);
        assert_eq!(classify(&[0]), vec![Region::Empty]);
    }

    #[test]
    fn bad_thresholds_rejected() {
        let h = hist_with_counts(&[1]);
        assert!(assign_regions(&h, 10, 0).is_err());
        assert!(assign_regions(&h, 10, 11).is_err());
    }

    #[test]
    fn artifact_json_keys() {
        let h = hist_with_counts(&[2, 8]);
        let t = compute_weights(&h, WeightMode::Sqinv).unwrap();
        let v = serde_json::to_value(HistogramArtifact::new(&h, &t)).unwrap();
        for key in ["edges", "counts", "weights", "mode"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["mode"], "sqinv");
    }
}
