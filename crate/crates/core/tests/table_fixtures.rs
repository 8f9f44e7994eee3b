mod common;

use condcov::inference::aic;
use condcov::predict::{crps_gaussian, summarize};

#[test]
fn aic_rows_match_within_rounding() {
    for (model, k, ll, expected) in common::AIC_ROWS {
        let v = aic(ll, k);
        assert!((v - expected).abs() <= 0.02 + 1e-9, "{model}: {v} vs {expected}");
    }
    assert!((aic(-1258.21, 12) - 2540.42).abs() < 1e-9);
}

#[test]
fn stored_fold_scores_are_consistent() {
    let folds = common::pressure_folds();
    assert_eq!(folds.len(), 157);
    for f in &folds {
        let c = crps_gaussian(f.mean, f.sd, f.observed);
        assert!((c - f.crps).abs() <= 1e-9 * f.crps.max(1.0), "{c} vs {}", f.crps);
    }
}

#[test]
fn pressure_row_recomputes_to_two_decimals() {
    let s = summarize(&common::pressure_folds(), 2);
    assert_eq!(s.len(), 1);
    let p = &s[0];
    assert_eq!((p.variable, p.folds), (1, 157));
    let [mae, rmspe, mcrps] = common::PRESSURE_ROW;
    assert_eq!(common::round2(p.mae), mae);
    assert_eq!(common::round2(p.rmspe), rmspe);
    assert_eq!(common::round2(p.mcrps), mcrps);
}
