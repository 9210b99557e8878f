//! Likelihood-ratio confidence scores and risk-coverage evaluation for
//! selective classification over precomputed model outputs.
//!
//! The crate has four layers:
//! - [`dataset`] and [`io`]: aligned feature/logit containers, bit-exact
//!   binary and CSV formats, seeded mixing and stratified subsampling;
//! - scoring: logit-based scores in [`logit`], Mahalanobis-family scores in
//!   [`gaussian`], neighbor-distance scores in [`neighbors`], the SIRC gate
//!   in [`sirc`], and linear combinations in [`combine`];
//! - [`eval`]: risk-coverage curves, AURC, NAURC, and empirical
//!   type-I/type-II error rates;
//! - [`synth`] and [`verify`]: seeded generators with exact likelihood
//!   oracles plus the registry of optimality checks run by the CLI.
//!
//! Scoring parallelizes over samples via rayon (the default `parallel`
//! feature); disabling it produces bit-identical results sequentially.

pub mod batch;
pub mod combine;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gaussian;
pub mod io;
pub mod linalg;
pub mod logit;
pub mod neighbors;
pub mod score;
pub mod sirc;
pub mod synth;
pub mod verify;

pub use dataset::{CorrectnessMask, Dataset, MixAmount, MixSpec};
pub use error::{Error, Result};
pub use score::{ScoreMethod, ScoreParams, ScoreVector};
