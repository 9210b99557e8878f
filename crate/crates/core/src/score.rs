//! Confidence-score containers.
//!
//! A [`ScoreVector`] is one real score per sample plus a tag identifying the
//! producing method and the hyperparameters it was computed with. Higher
//! scores always mean higher confidence that the prediction is correct.

use crate::error::{Error, Result};

/// Identifies which method produced a score vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ScoreMethod {
    Msp,
    MaxLogit,
    Energy,
    Rlog,
    Mds,
    Knn,
    DeltaMds,
    DeltaKnn,
    Sirc,
    /// Exact log likelihood-ratio from a synthetic oracle.
    LogLikelihoodRatio,
    /// Posterior log-odds of correctness from a synthetic oracle.
    PosteriorOdds,
    /// Linear combination `s1 + lambda * s2`; lambda lives in the params.
    Combination {
        first: Box<ScoreMethod>,
        second: Box<ScoreMethod>,
    },
    Custom(&'static str),
}

impl ScoreMethod {
    /// Canonical kebab-case name, e.g. `delta-mds-rlog` for a combination.
    pub fn label(&self) -> String {
        match self {
            ScoreMethod::Msp => "msp".into(),
            ScoreMethod::MaxLogit => "max-logit".into(),
            ScoreMethod::Energy => "energy".into(),
            ScoreMethod::Rlog => "rlog".into(),
            ScoreMethod::Mds => "mds".into(),
            ScoreMethod::Knn => "knn".into(),
            ScoreMethod::DeltaMds => "delta-mds".into(),
            ScoreMethod::DeltaKnn => "delta-knn".into(),
            ScoreMethod::Sirc => "sirc".into(),
            ScoreMethod::LogLikelihoodRatio => "log-lr".into(),
            ScoreMethod::PosteriorOdds => "posterior-odds".into(),
            ScoreMethod::Combination { first, second } => {
                format!("{}-{}", first.label(), second.label())
            }
            ScoreMethod::Custom(name) => (*name).into(),
        }
    }
}

/// Hyperparameters attached to a score vector; only the fields a method
/// actually uses are set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreParams {
    pub temperature: Option<f64>,
    pub k: Option<usize>,
    pub lambda: Option<f64>,
    pub normalized: Option<bool>,
    pub shrinkage: Option<f64>,
    pub averaged: Option<bool>,
}

/// One confidence score per sample.
#[derive(Clone, Debug)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub method: ScoreMethod,
    pub params: ScoreParams,
}

impl ScoreVector {
    /// Build a score vector, rejecting non-finite entries.
    pub fn new(values: Vec<f64>, method: ScoreMethod, params: ScoreParams) -> Result<Self> {
        for (row, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    field: "score",
                    row,
                });
            }
        }
        Ok(ScoreVector {
            values,
            method,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn label(&self) -> String {
        self.method.label()
    }
}
