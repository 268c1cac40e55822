//! Seed-averaged comparison of two optimizers in a `results.csv`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("optimizer {0:?} not found in results")]
    NotFound(String),
    #[error("optimizer {name:?} has several rho values {rhos:?}; pass --rho")]
    AmbiguousRho { name: String, rhos: Vec<f64> },
    #[error("results file has no {0:?} column")]
    MissingColumn(&'static str),
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub metric: String,
    pub region: String,
    pub baseline: Option<f64>,
    pub candidate: Option<f64>,
    /// `candidate - baseline`
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub baseline: String,
    pub candidate: String,
    pub baseline_runs: usize,
    pub candidate_runs: usize,
    pub rows: Vec<CompareRow>,
}

struct Record {
    optimizer: String,
    rho: f64,
    ok: bool,
    values: Vec<Option<f64>>,
}

/// Splits `mae_few` into (`mae`, `few`); the sharpness and timing columns keep
/// their full name with region `subset` or `run`.
fn split_column(col: &str) -> (String, String) {
    match col {
        "lambda_max" | "trace_h" => (col.into(), "subset".into()),
        "wall_s" => (col.into(), "run".into()),
        _ => match col.rsplit_once('_') {
            Some((m, r)) => (m.into(), r.into()),
            None => (col.into(), String::new()),
        },
    }
}

pub fn compare_reader(
    reader: impl std::io::Read,
    baseline: &str,
    candidate: &str,
    rho: Option<f64>,
) -> Result<Comparison, CompareError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let pos = |name: &'static str| headers.iter().position(|h| h == name).ok_or(CompareError::MissingColumn(name));
    let (opt_i, rho_i, status_i) = (pos("optimizer")?, pos("rho")?, pos("status")?);
    let value_cols: Vec<usize> = (status_i + 1..headers.len()).collect();

    let mut records = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = n + 2;
        let num = |s: &str| -> Result<Option<f64>, CompareError> {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| CompareError::BadRow { row, message: format!("non-numeric value {s:?}") })
        };
        records.push(Record {
            optimizer: rec[opt_i].to_string(),
            rho: num(&rec[rho_i])?.unwrap_or(0.0),
            ok: &rec[status_i] == "ok",
            values: value_cols.iter().map(|&c| num(rec.get(c).unwrap_or(""))).collect::<Result<_, _>>()?,
        });
    }

    let pick = |name: &str| -> Result<Vec<&Record>, CompareError> {
        let all: Vec<&Record> = records.iter().filter(|r| r.optimizer == name).collect();
        if all.is_empty() {
            return Err(CompareError::NotFound(name.into()));
        }
        let selected: Vec<&Record> = match rho {
            Some(want) => all.into_iter().filter(|r| r.rho == want).collect(),
            None => {
                let rhos: BTreeSet<u64> = all.iter().map(|r| r.rho.to_bits()).collect();
                if rhos.len() > 1 {
                    return Err(CompareError::AmbiguousRho {
                        name: name.into(),
                        rhos: rhos.into_iter().map(f64::from_bits).collect(),
                    });
                }
                all
            }
        };
        if selected.is_empty() {
            return Err(CompareError::NotFound(format!("{name} at rho {}", rho.unwrap_or_default())));
        }
        Ok(selected.into_iter().filter(|r| r.ok).collect())
    };
    let base = pick(baseline)?;
    let cand = pick(candidate)?;

    let mean = |rs: &[&Record], j: usize| -> Option<f64> {
        let vals: Vec<f64> = rs.iter().filter_map(|r| r.values[j]).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let rows = value_cols
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let (metric, region) = split_column(&headers[c]);
            let (b, k) = (mean(&base, j), mean(&cand, j));
            CompareRow {
                metric,
                region,
                baseline: b,
                candidate: k,
                delta: b.zip(k).map(|(b, k)| k - b),
            }
        })
        .collect();
    Ok(Comparison {
        baseline: baseline.into(),
        candidate: candidate.into(),
        baseline_runs: base.len(),
        candidate_runs: cand.len(),
        rows,
    })
}

pub fn compare(path: impl AsRef<Path>, baseline: &str, candidate: &str, rho: Option<f64>) -> Result<Comparison, CompareError> {
    compare_reader(std::fs::File::open(path)?, baseline, candidate, rho)
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("metric,region,baseline,candidate,delta\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.metric, r.region, cell(r.baseline), cell(r.candidate), cell(r.delta));
        }
        out
    }

    pub fn to_pretty(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} ({} runs) vs {} ({} runs), delta = candidate - baseline",
            self.baseline, self.baseline_runs, self.candidate, self.candidate_runs
        );
        let _ = writeln!(out, "{:<12} {:<8} {:>12} {:>12} {:>12}", "metric", "region", self.baseline, self.candidate, "delta");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<12} {:<8} {:>12} {:>12} {:>12}",
                r.metric,
                r.region,
                cell(r.baseline),
                cell(r.candidate),
                cell(r.delta)
            );
        }
        out
    }

    pub fn get(&self, metric: &str, region: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.metric == metric && r.region == region)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "\
# generated_unix=0
optimizer,rho,seed,status,mae_all,mae_few,lambda_max,trace_h,wall_s
sgd,0,0,ok,2,4,10,100,
sgd,0,1,ok,4,8,20,,
bsam,0.1,0,ok,1,2,5,50,
bsam,0.1,1,ok,2,3,7,70,
bsam,0.1,2,diverged,,,,,
";

    #[test]
    fn hand_computed_means_and_deltas() {
        let c = compare_reader(FIXTURE.as_bytes(), "sgd", "bsam", None).unwrap();
        assert_eq!((c.baseline_runs, c.candidate_runs), (2, 2));
        let row = |m, r| c.get(m, r).unwrap().clone();
        assert_eq!(row("mae", "all").delta, Some(1.5 - 3.0));
        assert_eq!(row("mae", "few").baseline, Some(6.0));
        assert_eq!(row("mae", "few").candidate, Some(2.5));
        assert_eq!(row("lambda_max", "subset").delta, Some(6.0 - 15.0));
        assert_eq!(row("trace_h", "subset").baseline, Some(100.0));
        assert_eq!(row("wall_s", "run").delta, None);
    }

    #[test]
    fn self_comparison_has_zero_deltas() {
        let c = compare_reader(FIXTURE.as_bytes(), "bsam", "bsam", None).unwrap();
        assert!(c.rows.iter().filter_map(|r| r.delta).all(|d| d == 0.0));
    }

    #[test]
    fn single_seed_means_are_raw_values() {
        let one = "optimizer,rho,seed,status,mae_all\nsam,0.05,3,ok,1.25\nsgd,0,3,ok,2.5\n";
        let c = compare_reader(one.as_bytes(), "sgd", "sam", None).unwrap();
        assert_eq!(c.rows[0].baseline, Some(2.5));
        assert_eq!(c.rows[0].candidate, Some(1.25));
        assert!(c.to_csv().starts_with("metric,region,baseline,candidate,delta\nmae,all,2.5,1.25,-1.25\n"));
    }

    #[test]
    fn errors() {
        assert!(matches!(compare_reader(FIXTURE.as_bytes(), "sgd", "nope", None), Err(CompareError::NotFound(_))));
        let two = "optimizer,rho,seed,status,mae_all\nsam,0.05,0,ok,1\nsam,0.1,0,ok,2\n";
        assert!(matches!(compare_reader(two.as_bytes(), "sam", "sam", None), Err(CompareError::AmbiguousRho { .. })));
        let c = compare_reader(two.as_bytes(), "sam", "sam", Some(0.1)).unwrap();
        assert_eq!(c.rows[0].baseline, Some(2.0));
    }
}
