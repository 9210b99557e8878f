//! SIRC: a softmax score gated by an auxiliary feature-based score through a
//! sigmoid whose parameters come from calibration-split statistics.
//!
//! `s = -(S1_max - S1) * (1 + exp(-b * (S2 - a)))` with `a = mean(S2) - 3 std(S2)`
//! and `b = 1 / std(S2)`. The default auxiliary score is the negative L1 norm
//! of the features.

use crate::batch;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::score::{ScoreMethod, ScoreParams, ScoreVector};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SircParams {
    pub a: f64,
    pub b: f64,
    pub s1_max: f64,
}

/// Fit the gate parameters from a calibration split's auxiliary scores:
/// `a = mean - 3 std`, `b = 1 / std` (sample standard deviation).
pub fn fit_sirc_params(calibration_s2: &[f64], s1_max: f64) -> Result<SircParams> {
    if calibration_s2.len() < 2 {
        return Err(Error::InsufficientSamples {
            what: "sirc calibration",
            required: 2,
            actual: calibration_s2.len(),
        });
    }
    let n = calibration_s2.len() as f64;
    let mean: f64 = calibration_s2.iter().sum::<f64>() / n;
    let var: f64 = calibration_s2
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (n - 1.0);
    let std = var.sqrt();
    if std == 0.0 {
        return Err(Error::DegenerateScale {
            what: "sirc auxiliary-score standard deviation",
        });
    }
    Ok(SircParams {
        a: mean - 3.0 * std,
        b: 1.0 / std,
        s1_max,
    })
}

/// Combine a primary score with an auxiliary score through the SIRC gate.
pub fn sirc(s1: &ScoreVector, s2: &ScoreVector, params: SircParams) -> Result<ScoreVector> {
    if params.b <= 0.0 || !params.b.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sirc b = {} must be positive and finite",
            params.b
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
    let values = batch::map_rows(s1.len(), |i| {
        let gap = params.s1_max - s1.values[i];
        // exp underflows to 0 for very confident auxiliary scores, which is
        // exactly the wanted limit; clamp the overflow side instead.
        let gate = 1.0 + (-params.b * (s2.values[i] - params.a)).min(700.0).exp();
        -gap * gate
    });
    ScoreVector::new(values, ScoreMethod::Sirc, ScoreParams::default())
}

/// Default auxiliary score: negative L1 norm of the feature row.
pub fn feature_l1_scores(ds: &Dataset) -> ScoreVector {
    let values = batch::map_rows(ds.len(), |i| {
        -ds.features
            .row(i)
            .iter()
            .map(|&v| (v as f64).abs())
            .sum::<f64>()
    });
    ScoreVector::new(
        values,
        ScoreMethod::Custom("neg-l1-norm"),
        ScoreParams::default(),
    )
    .expect("finite features give finite norms")
}
