//! Logit-derived confidence scores: MSP, MaxLogit, Energy, and RLog.
//!
//! All reductions run in f64 even though logits are stored as f32; softmax
//! and energy subtract the row maximum before exponentiating so large logits
//! cannot overflow.

use crate::batch;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::score::{ScoreMethod, ScoreParams, ScoreVector};

/// Shift-stable softmax of one logit row, in f64.
///
/// Entries are positive and sum to 1 within 1e-12.
pub fn softmax(row: &[f32]) -> Vec<f64> {
    debug_assert!(!row.is_empty());
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let exps: Vec<f64> = row.iter().map(|&v| (v as f64 - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Maximum softmax probability per sample, in `(0, 1]`.
pub fn msp(ds: &Dataset) -> ScoreVector {
    let values = batch::map_rows(ds.len(), |i| msp_row(ds.logits.row(i).as_slice().unwrap()));
    ScoreVector::new(values, ScoreMethod::Msp, ScoreParams::default())
        .expect("softmax of finite logits is finite")
}

fn msp_row(row: &[f32]) -> f64 {
    softmax(row).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Largest raw logit per sample.
pub fn max_logit(ds: &Dataset) -> ScoreVector {
    let values = batch::map_rows(ds.len(), |i| {
        ds.logits
            .row(i)
            .iter()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64))
    });
    ScoreVector::new(values, ScoreMethod::MaxLogit, ScoreParams::default())
        .expect("max of finite logits is finite")
}

/// Negative-energy score `T * log Σ exp(l/T)`, shift-stable. `T` must be
/// positive; the conventional default is 1.
pub fn energy(ds: &Dataset, temperature: f64) -> Result<ScoreVector> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "energy temperature {temperature} must be positive and finite"
        )));
    }
    let values = batch::map_rows(ds.len(), |i| {
        energy_row(ds.logits.row(i).as_slice().unwrap(), temperature)
    });
    ScoreVector::new(
        values,
        ScoreMethod::Energy,
        ScoreParams {
            temperature: Some(temperature),
            ..ScoreParams::default()
        },
    )
}

fn energy_row(row: &[f32], t: f64) -> f64 {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let sum: f64 = row.iter().map(|&v| ((v as f64 - max) / t).exp()).sum();
    max + t * sum.ln()
}

/// Margin between the two largest logits, `l(1) - l(2) >= 0`, regardless of
/// class identity.
pub fn rlog(ds: &Dataset) -> ScoreVector {
    let values = batch::map_rows(ds.len(), |i| {
        rlog_row(ds.logits.row(i).as_slice().unwrap()).expect("dataset guarantees K >= 2")
    });
    ScoreVector::new(values, ScoreMethod::Rlog, ScoreParams::default())
        .expect("margin of finite logits is finite")
}

/// RLog for a single logit row. A single-class row is rejected: the margin
/// is undefined there and a silent zero would corrupt rankings.
pub fn rlog_row(row: &[f32]) -> Result<f64> {
    if row.len() < 2 {
        return Err(Error::InvalidParameter(
            "rlog needs at least two logits per sample".into(),
        ));
    }
    let mut top = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &v in row {
        let v = v as f64;
        if v > top {
            second = top;
            top = v;
        } else if v > second {
            second = v;
        }
    }
    Ok(top - second)
}

/// Per-sample tail-mass ratio `L / d(2)` where `L = Σ_{i>=3} softmax(i)` and
/// `d(2)` is the second-largest softmax entry.
///
/// The top-two concentration assumption behind the RLog optimality argument
/// is not checkable per score; this diagnostic exposes its empirical
/// distribution instead.
pub fn top2_concentration(ds: &Dataset) -> Vec<f64> {
    batch::map_rows(ds.len(), |i| {
        let probs = softmax(ds.logits.row(i).as_slice().unwrap());
        let mut top = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        for &p in &probs {
            if p > top {
                second = top;
                top = p;
            } else if p > second {
                second = p;
            }
        }
        let tail = (1.0 - top - second).max(0.0);
        tail / second
    })
}
