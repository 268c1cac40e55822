mod support;

use bsam_core::imbalance::{assign_regions, LabelHistogram, Region};
use bsam_core::metrics::{bmae, delta1, gm, mae, region_report, rmse, Metric, GM_EPS};
use proptest::prelude::*;
use rand::Rng;
use support::rng;

// errors 0,1,1,1,2,0,1,1,3,3; the fourth pair sits exactly on the 1.25 ratio
const TRUTH: [f64; 10] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
const PRED: [f64; 10] = [1.0, 3.0, 2.0, 5.0, 3.0, 6.0, 8.0, 7.0, 12.0, 7.0];

#[test]
fn ten_sample_fixture() {
    assert_eq!(mae(&PRED, &TRUTH).unwrap(), 1.3);
    assert_eq!(rmse(&PRED, &TRUTH).unwrap(), 2.7f64.sqrt());
    let want_gm = (GM_EPS * GM_EPS * 18.0).powf(0.1);
    assert!((gm(&PRED, &TRUTH).unwrap() - want_gm).abs() < 1e-15 * want_gm.max(1.0));
    assert_eq!(delta1(&PRED, &TRUTH).unwrap(), 0.4);
    // bins of width 2 on [0, 10]: per-bin MAE 0, 1, 1.5, 0.5, 7/3
    let hist = LabelHistogram::empty(0.0, 10.0, 5).unwrap();
    assert!((bmae(&PRED, &TRUTH, &hist).unwrap() - 16.0 / 15.0).abs() < 1e-15);
}

#[test]
fn delta1_boundary_is_excluded() {
    assert_eq!(delta1(&[5.0], &[4.0]).unwrap(), 0.0);
    assert_eq!(delta1(&[4.0], &[5.0]).unwrap(), 0.0);
    assert_eq!(delta1(&[4.999], &[4.0]).unwrap(), 1.0);
}

#[test]
fn region_report_matches_subset_oracle() {
    let mut r = rng(3);
    let train: Vec<f64> = (0..2000).map(|_| 10.0 * r.random::<f64>().powi(3)).collect();
    let hist = LabelHistogram::build(&train, 0.0, 10.0, 10).unwrap();
    let regions = assign_regions(&hist, 300, 80).unwrap();
    let truth: Vec<f64> = (0..500).map(|_| 10.0 * r.random::<f64>() + 1e-9).collect();
    let pred: Vec<f64> = truth.iter().map(|t| t + r.random_range(-1.0..1.0)).collect();
    let report = region_report(&pred, &truth, &hist, &regions, &Metric::ALL).unwrap();
    let mut total = 0;
    for region in Region::SHOTS {
        let idx: Vec<usize> = (0..truth.len())
            .filter(|&i| {
                let count = hist.counts()[(truth[i].floor() as usize).min(9)];
                let want = if count > 300 {
                    Region::Many
                } else if count > 0 && count < 80 {
                    Region::Few
                } else if count == 0 {
                    Region::Empty
                } else {
                    Region::Medium
                };
                want == region
            })
            .collect();
        let p: Vec<f64> = idx.iter().map(|&i| pred[i]).collect();
        let t: Vec<f64> = idx.iter().map(|&i| truth[i]).collect();
        let got = report.region(region).unwrap();
        assert_eq!(got.n, idx.len(), "{region:?}");
        total += idx.len();
        if !idx.is_empty() {
            assert_eq!(got.mae, Some(mae(&p, &t).unwrap()));
            assert_eq!(got.rmse, Some(rmse(&p, &t).unwrap()));
        }
    }
    assert_eq!(total, truth.len());
    assert!(report.few.n > 0 && report.many.n > 0);
    assert_eq!(report.all.mae, Some(mae(&pred, &truth).unwrap()));
}

fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(0.01f64..100.0, n),
            prop::collection::vec(0.01f64..100.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metric_orderings((pred, truth) in pairs()) {
        let m = mae(&pred, &truth).unwrap();
        prop_assert!(gm(&pred, &truth).unwrap() <= m + 1e-6);
        prop_assert!(m <= rmse(&pred, &truth).unwrap() * (1.0 + 1e-12));
        let d = delta1(&pred, &truth).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn metrics_are_permutation_invariant((pred, truth) in pairs(), shift in 0usize..60) {
        let n = pred.len();
        let rot = |v: &[f64]| -> Vec<f64> { (0..n).map(|i| v[(i + shift) % n]).collect() };
        let (p2, t2) = (rot(&pred), rot(&truth));
        prop_assert!((mae(&pred, &truth).unwrap() - mae(&p2, &t2).unwrap()).abs() < 1e-12);
        prop_assert!((gm(&pred, &truth).unwrap() - gm(&p2, &t2).unwrap()).abs() < 1e-9);
        prop_assert_eq!(delta1(&pred, &truth).unwrap(), delta1(&p2, &t2).unwrap());
    }

    #[test]
    fn bmae_equals_mae_on_balanced_sets(errors in prop::collection::vec(-5.0f64..5.0, 12), k in 1usize..5) {
        // 12 samples, equal share per bin
        let per = 12 / k;
        prop_assume!(12 % k == 0);
        let truth: Vec<f64> = (0..12).map(|i| (i / per) as f64 + 0.5).collect();
        let pred: Vec<f64> = truth.iter().zip(&errors).map(|(t, e)| t + e).collect();
        let hist = LabelHistogram::empty(0.0, k as f64, k).unwrap();
        let b = bmae(&pred, &truth, &hist).unwrap();
        prop_assert!((b - mae(&pred, &truth).unwrap()).abs() < 1e-12);
    }
}
