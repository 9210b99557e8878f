//! Linear score combinations `t = s1 + lambda * s2` and the
//! magnitude-balancing recipe for picking lambda.

use crate::error::{Error, Result};
use crate::score::{ScoreMethod, ScoreParams, ScoreVector};

/// Named combinations studied as first-class scores. Each entry is
/// `(combination, first parent, second parent)`.
pub const NAMED_COMBINATIONS: &[(&str, &str, &str)] = &[
    ("delta-mds-rlog", "delta-mds", "rlog"),
    ("delta-knn-rlog", "delta-knn", "rlog"),
    ("delta-mds-msp", "delta-mds", "msp"),
    ("delta-knn-msp", "delta-knn", "msp"),
    ("msp-rlog", "msp", "rlog"),
    ("delta-mds-delta-knn", "delta-mds", "delta-knn"),
];

/// Look up a named combination's parents.
pub fn combination_parents(name: &str) -> Option<(&'static str, &'static str)> {
    NAMED_COMBINATIONS
        .iter()
        .find(|(n, _, _)| *n == name)
        .map(|(_, a, b)| (*a, *b))
}

/// Elementwise `t = s1 + lambda * s2`. The method tag records both parents
/// and lambda.
pub fn combine(s1: &ScoreVector, s2: &ScoreVector, lambda: f64) -> Result<ScoreVector> {
    if !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda {lambda} must be finite"
        )));
    }
    if s1.len() != s2.len() {
        return Err(Error::LengthMismatch {
            left_name: "s1",
            left: s1.len(),
            right_name: "s2",
            right: s2.len(),
        });
    }
    let values: Vec<f64> = s1
        .values
        .iter()
        .zip(&s2.values)
        .map(|(&a, &b)| a + lambda * b)
        .collect();
    ScoreVector::new(
        values,
        ScoreMethod::Combination {
            first: Box::new(s1.method.clone()),
            second: Box::new(s2.method.clone()),
        },
        ScoreParams {
            lambda: Some(lambda),
            ..ScoreParams::default()
        },
    )
}

/// Fitted lambda plus the median-based alternative kept for diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaFit {
    /// `mean |s1| / mean |s2|` over the calibration split. This is the value
    /// used by default.
    pub lambda: f64,
    /// `median |s1| / median |s2|`, reported for robustness comparisons;
    /// `None` when the median of `|s2|` is zero.
    pub median_lambda: Option<f64>,
}

/// Balance the magnitudes of two scores on a calibration split:
/// `lambda = mean |s1| / mean |s2|`.
pub fn fit_lambda_balance(s1: &[f64], s2: &[f64]) -> Result<LambdaFit> {
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::InsufficientSamples {
            what: "lambda calibration",
            required: 1,
            actual: 0,
        });
    }
    if s1.len() != s2.len() {
        return Err(Error::LengthMismatch {
            left_name: "s1",
            left: s1.len(),
            right_name: "s2",
            right: s2.len(),
        });
    }
    let mean_abs = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64;
    let m1 = mean_abs(s1);
    let m2 = mean_abs(s2);
    if m2 == 0.0 {
        return Err(Error::DegenerateScale { what: "s2" });
    }
    let median_abs = |v: &[f64]| {
        let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        a.sort_unstable_by(|x, y| x.total_cmp(y));
        let n = a.len();
        if n % 2 == 1 {
            a[n / 2]
        } else {
            0.5 * (a[n / 2 - 1] + a[n / 2])
        }
    };
    let med2 = median_abs(s2);
    let median_lambda = if med2 > 0.0 {
        Some(median_abs(s1) / med2)
    } else {
        None
    };
    Ok(LambdaFit {
        lambda: m1 / m2,
        median_lambda,
    })
}
