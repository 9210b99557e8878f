//! Selective-classification metrics: threshold selection, the risk-coverage
//! curve, AURC, the oracle AURC, NAURC, and empirical type-I/II error rates.
//!
//! Conventions, fixed so results are exactly reproducible:
//! - acceptance is strict: a sample is accepted iff `score > gamma`;
//! - the curve sorts by score descending with ties broken by original index
//!   ascending (stable), one point per prefix size `m = 1..N`;
//! - AURC is the mean of the N prefix risks (uniform coverage grid);
//! - coverage 0 has undefined risk, so the curve starts at `m = 1`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One point on the risk-coverage curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiskCoveragePoint {
    /// Fraction of samples accepted, in `(0, 1]`.
    pub coverage: f64,
    /// 0/1 error rate over the accepted samples.
    pub selective_risk: f64,
    /// Threshold realizing this prefix under strict `>` acceptance (the next
    /// sorted score; `-inf` for the full-coverage point). Only exact when
    /// the boundary scores are distinct.
    pub threshold: f64,
}

/// Full evaluation of one score vector against a correctness mask.
#[derive(Clone, Debug)]
pub struct RiskCoverageReport {
    pub curve: Vec<RiskCoveragePoint>,
    pub aurc: f64,
    pub oracle_aurc: f64,
    /// `None` when the normalization is degenerate (all correct or all wrong).
    pub naurc: Option<f64>,
    /// Full-coverage risk `R(f)`.
    pub full_risk: f64,
    /// Number of tied-score groups (size >= 2); nonzero values reveal
    /// quantized scores whose curve depends on the index tie-break.
    pub ties: usize,
}

/// Serializable summary (the curve itself is written as CSV separately).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportSummary {
    pub method: String,
    pub n: usize,
    pub aurc: f64,
    /// AURC on the conventional 10^-2 reporting scale.
    pub aurc_x100: f64,
    pub oracle_aurc: f64,
    pub naurc: Option<f64>,
    pub full_risk: f64,
    pub ties: usize,
}

impl RiskCoverageReport {
    pub fn summary(&self, method: impl Into<String>) -> ReportSummary {
        ReportSummary {
            method: method.into(),
            n: self.curve.len(),
            aurc: self.aurc,
            aurc_x100: self.aurc * 100.0,
            oracle_aurc: self.oracle_aurc,
            naurc: self.naurc,
            full_risk: self.full_risk,
            ties: self.ties,
        }
    }
}

/// Acceptance decision at one threshold.
#[derive(Clone, Debug)]
pub struct Selection {
    pub accepted: Vec<bool>,
    pub coverage: f64,
    pub selective_risk: f64,
}

/// Accept every sample with `score > gamma` (strict) and compute coverage
/// and selective risk. Rejecting everything is an error: risk is undefined
/// at coverage 0.
pub fn select(scores: &[f64], correctness: &[bool], gamma: f64) -> Result<Selection> {
    check_aligned(scores, correctness)?;
    let accepted: Vec<bool> = scores.iter().map(|&s| s > gamma).collect();
    let n_accepted = accepted.iter().filter(|&&a| a).count();
    if n_accepted == 0 {
        return Err(Error::EmptySelection { gamma });
    }
    let errors = accepted
        .iter()
        .zip(correctness)
        .filter(|(&a, &c)| a && !c)
        .count();
    Ok(Selection {
        coverage: n_accepted as f64 / scores.len() as f64,
        selective_risk: errors as f64 / n_accepted as f64,
        accepted,
    })
}

/// Indices sorted by score descending, ties broken by original index
/// ascending. This is the single ordering every curve metric uses.
pub fn sorted_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// The risk-coverage curve: one point per prefix of the sorted order.
pub fn risk_coverage_curve(scores: &[f64], correctness: &[bool]) -> Result<Vec<RiskCoveragePoint>> {
    check_aligned(scores, correctness)?;
    let n = scores.len();
    let order = sorted_order(scores);
    let mut curve = Vec::with_capacity(n);
    let mut errors = 0usize;
    for (m, &idx) in order.iter().enumerate() {
        if !correctness[idx] {
            errors += 1;
        }
        let accepted = m + 1;
        let threshold = if accepted < n {
            scores[order[accepted]]
        } else {
            f64::NEG_INFINITY
        };
        curve.push(RiskCoveragePoint {
            coverage: accepted as f64 / n as f64,
            selective_risk: errors as f64 / accepted as f64,
            threshold,
        });
    }
    Ok(curve)
}

/// AURC: the mean of the prefix risks over `m = 1..N`.
pub fn aurc(curve: &[RiskCoveragePoint]) -> f64 {
    let mut sum = 0.0;
    for p in curve {
        sum += p.selective_risk;
    }
    sum / curve.len() as f64
}

/// AURC of the oracle ordering (all correct samples before all wrong ones),
/// computed by ranking the correctness indicator with the same curve code.
pub fn oracle_aurc(correctness: &[bool]) -> f64 {
    let indicator: Vec<f64> = correctness.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
    let curve = risk_coverage_curve(&indicator, correctness).expect("indicator is aligned");
    aurc(&curve)
}

/// `NAURC = (AURC - oracle) / (R(f) - oracle)`; undefined when the
/// denominator collapses (all-correct or all-wrong sets).
pub fn naurc(aurc: f64, oracle_aurc: f64, full_risk: f64) -> Result<f64> {
    let denom = full_risk - oracle_aurc;
    if denom <= 0.0 {
        return Err(Error::NaurcUndefined);
    }
    Ok((aurc - oracle_aurc) / denom)
}

/// Evaluate one score vector end to end.
pub fn evaluate(scores: &[f64], correctness: &[bool]) -> Result<RiskCoverageReport> {
    let curve = risk_coverage_curve(scores, correctness)?;
    let aurc_value = aurc(&curve);
    let oracle = oracle_aurc(correctness);
    let n = correctness.len();
    let errors = correctness.iter().filter(|&&c| !c).count();
    let full_risk = errors as f64 / n as f64;
    let naurc_value = naurc(aurc_value, oracle, full_risk).ok();
    Ok(RiskCoverageReport {
        curve,
        aurc: aurc_value,
        oracle_aurc: oracle,
        naurc: naurc_value,
        full_risk,
        ties: tie_groups(scores),
    })
}

/// Number of groups of two or more equal scores.
pub fn tie_groups(scores: &[f64]) -> usize {
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_unstable_by(|a, b| a.total_cmp(b));
    let mut groups = 0usize;
    let mut run = 1usize;
    for i in 1..sorted.len() {
        if sorted[i] == sorted[i - 1] {
            run += 1;
        } else {
            if run >= 2 {
                groups += 1;
            }
            run = 1;
        }
    }
    if run >= 2 {
        groups += 1;
    }
    groups
}

/// Empirical Neyman-Pearson error rates at a threshold. `h0[i]` marks the
/// correct-prediction hypothesis; acceptance is strict `score > gamma`.
///
/// Returns `(alpha, beta)`: alpha is the fraction of H0 samples rejected,
/// beta the fraction of H1 samples accepted.
pub fn np_error_rates(scores: &[f64], h0: &[bool], gamma: f64) -> Result<(f64, f64)> {
    if scores.len() != h0.len() {
        return Err(Error::LengthMismatch {
            left_name: "scores",
            left: scores.len(),
            right_name: "hypothesis labels",
            right: h0.len(),
        });
    }
    let n0 = h0.iter().filter(|&&h| h).count();
    let n1 = h0.len() - n0;
    if n0 == 0 {
        return Err(Error::EmptyHypothesisClass { which: "H0" });
    }
    if n1 == 0 {
        return Err(Error::EmptyHypothesisClass { which: "H1" });
    }
    let mut rejected_h0 = 0usize;
    let mut accepted_h1 = 0usize;
    for (&s, &is_h0) in scores.iter().zip(h0) {
        let accepted = s > gamma;
        if is_h0 && !accepted {
            rejected_h0 += 1;
        }
        if !is_h0 && accepted {
            accepted_h1 += 1;
        }
    }
    Ok((rejected_h0 as f64 / n0 as f64, accepted_h1 as f64 / n1 as f64))
}

/// Write the curve as `coverage,risk,threshold` CSV.
pub fn save_curve_csv(curve: &[RiskCoveragePoint], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    writeln!(w, "coverage,risk,threshold").map_err(io_err)?;
    for p in curve {
        writeln!(w, "{},{},{}", p.coverage, p.selective_risk, p.threshold).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Render a deterministic standalone SVG line plot of risk vs coverage.
pub fn render_svg(curves: &[(&str, &[RiskCoveragePoint])]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 440.0;
    const ML: f64 = 60.0; // left margin
    const MB: f64 = 50.0; // bottom margin
    const MT: f64 = 20.0;
    const MR: f64 = 20.0;
    let plot_w = W - ML - MR;
    let plot_h = H - MT - MB;
    let max_risk = curves
        .iter()
        .flat_map(|(_, c)| c.iter())
        .map(|p| p.selective_risk)
        .fold(0.0_f64, f64::max)
        .max(1e-9);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR,
        H - MB
    ));
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">coverage</text>\n",
        ML + plot_w / 2.0,
        H - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {})\">selective risk</text>\n",
        MT + plot_h / 2.0,
        MT + plot_h / 2.0
    ));
    for tick in 0..=5 {
        let f = tick as f64 / 5.0;
        let x = ML + f * plot_w;
        let y = H - MB + 16.0;
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{y:.1}\" font-size=\"11\" text-anchor=\"middle\">{f:.1}</text>\n"
        ));
        let risk = f * max_risk;
        let ty = H - MB - f * plot_h + 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{ty:.1}\" font-size=\"11\" text-anchor=\"end\">{risk:.3}</text>\n",
            ML - 6.0
        ));
    }
    for (ci, (name, curve)) in curves.iter().enumerate() {
        let color = colors[ci % colors.len()];
        let mut points = String::new();
        for p in curve.iter() {
            let x = ML + p.coverage * plot_w;
            let y = H - MB - (p.selective_risk / max_risk) * plot_h;
            points.push_str(&format!("{x:.2},{y:.2} "));
        }
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.trim_end()
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{name}</text>\n",
            ML + 10.0,
            MT + 16.0 + 16.0 * ci as f64
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn check_aligned(scores: &[f64], correctness: &[bool]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InsufficientSamples {
            what: "evaluation",
            required: 1,
            actual: 0,
        });
    }
    if scores.len() != correctness.len() {
        return Err(Error::LengthMismatch {
            left_name: "scores",
            left: scores.len(),
            right_name: "correctness",
            right: correctness.len(),
        });
    }
    Ok(())
}
