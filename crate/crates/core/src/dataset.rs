//! Dataset container and the sampling utilities used by the evaluation
//! protocols: correctness splits, seeded dataset mixing, and stratified
//! label subsampling.
//!
//! A [`Dataset`] holds aligned per-sample arrays: an N×d feature matrix, an
//! N×K logit matrix, labels, and predictions. Features and logits are stored
//! as f32 (matching the on-disk format); every statistic downstream
//! accumulates in f64.

use ndarray::{Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Aligned per-sample matrices for one evaluation split.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    /// N×d feature matrix (embedding space).
    pub features: Array2<f32>,
    /// N×K pre-softmax logit matrix.
    pub logits: Array2<f32>,
    /// True class per sample, in `[0, K)`.
    pub labels: Vec<usize>,
    /// Predicted class per sample, in `[0, K)`.
    pub predictions: Vec<usize>,
    /// True when predictions were derived by argmax rather than supplied.
    pub derived_predictions: bool,
    /// Source index per sample when this dataset came out of a mix.
    pub provenance: Option<Vec<u32>>,
}

impl Dataset {
    /// Build a dataset, deriving predictions by logit argmax (ties broken by
    /// the lowest class index) when none are supplied.
    pub fn new(
        name: impl Into<String>,
        features: Array2<f32>,
        logits: Array2<f32>,
        labels: Vec<usize>,
        predictions: Option<Vec<usize>>,
    ) -> Result<Self> {
        let derived = predictions.is_none();
        let predictions = match predictions {
            Some(p) => p,
            None => argmax_predictions(&logits),
        };
        let ds = Dataset {
            name: name.into(),
            features,
            logits,
            labels,
            predictions,
            derived_predictions: derived,
            provenance: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Feature dimensionality d.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Number of classes K.
    pub fn n_classes(&self) -> usize {
        self.logits.ncols()
    }

    pub fn feature_row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.features.row(i)
    }

    /// Check every container invariant; called by constructors and loaders.
    pub fn validate(&self) -> Result<()> {
        let n = self.features.nrows();
        if n < 1 {
            return Err(Error::InsufficientSamples {
                what: "dataset",
                required: 1,
                actual: 0,
            });
        }
        if self.dim() < 1 {
            return Err(Error::Dimension("feature dimension d must be >= 1".into()));
        }
        if self.n_classes() < 2 {
            return Err(Error::Dimension("class count K must be >= 2".into()));
        }
        if self.logits.nrows() != n {
            return Err(Error::LengthMismatch {
                left_name: "features",
                left: n,
                right_name: "logits",
                right: self.logits.nrows(),
            });
        }
        if self.labels.len() != n {
            return Err(Error::LengthMismatch {
                left_name: "features",
                left: n,
                right_name: "labels",
                right: self.labels.len(),
            });
        }
        if self.predictions.len() != n {
            return Err(Error::LengthMismatch {
                left_name: "features",
                left: n,
                right_name: "predictions",
                right: self.predictions.len(),
            });
        }
        let k = self.n_classes();
        for (row, &label) in self.labels.iter().enumerate() {
            if label >= k {
                return Err(Error::InvalidParameter(format!(
                    "label {label} at row {row} is outside [0, {k})"
                )));
            }
        }
        for (row, &pred) in self.predictions.iter().enumerate() {
            if pred >= k {
                return Err(Error::InvalidParameter(format!(
                    "prediction {pred} at row {row} is outside [0, {k})"
                )));
            }
        }
        for (idx, v) in self.features.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    field: "features",
                    row: idx / self.dim(),
                });
            }
        }
        for (idx, v) in self.logits.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    field: "logits",
                    row: idx / k,
                });
            }
        }
        Ok(())
    }

    /// Per-sample correctness of the stored predictions.
    pub fn correctness(&self) -> CorrectnessMask {
        CorrectnessMask::from_labels(&self.labels, &self.predictions)
    }
}

/// Argmax over each logit row, ties broken by the lowest class index.
pub fn argmax_predictions(logits: &Array2<f32>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            let mut best_val = row[0];
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > best_val {
                    best_val = v;
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Boolean correctness per sample plus partition counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrectnessMask {
    pub mask: Vec<bool>,
    pub n_correct: usize,
    pub n_wrong: usize,
}

impl CorrectnessMask {
    pub fn from_labels(labels: &[usize], predictions: &[usize]) -> Self {
        let mask: Vec<bool> = labels
            .iter()
            .zip(predictions)
            .map(|(l, p)| l == p)
            .collect();
        let n_correct = mask.iter().filter(|&&c| c).count();
        let n_wrong = mask.len() - n_correct;
        CorrectnessMask {
            mask,
            n_correct,
            n_wrong,
        }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }
}

/// Split a feature matrix into correct-prediction and wrong-prediction rows,
/// preserving original order within each partition.
pub fn split_by_correctness(ds: &Dataset) -> (Array2<f32>, Array2<f32>, CorrectnessMask) {
    let mask = ds.correctness();
    let d = ds.dim();
    let mut correct = Array2::<f32>::zeros((mask.n_correct, d));
    let mut wrong = Array2::<f32>::zeros((mask.n_wrong, d));
    let (mut ci, mut wi) = (0usize, 0usize);
    for (i, &is_correct) in mask.mask.iter().enumerate() {
        if is_correct {
            correct.row_mut(ci).assign(&ds.features.row(i));
            ci += 1;
        } else {
            wrong.row_mut(wi).assign(&ds.features.row(i));
            wi += 1;
        }
    }
    (correct, wrong, mask)
}

/// How much of a source dataset a mix draws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MixAmount {
    /// Fraction of the source, in `(0, 1]`; the draw size is `round(f * N)`.
    Fraction(f64),
    /// Absolute sample count, at most the source size.
    Count(usize),
}

/// A seeded recipe for combining several datasets into one evaluation set.
#[derive(Debug)]
pub struct MixSpec<'a> {
    pub sources: Vec<(&'a Dataset, MixAmount)>,
    pub seed: u64,
}

/// Concatenate seeded draws from each source into one dataset.
///
/// The draw is a pure function of `(sources, seed)`: sources are visited in
/// order with a single ChaCha8 stream, full takes copy rows in source order
/// without consuming randomness, and partial draws are sampled without
/// replacement then emitted in source order. The output provenance column
/// records each sample's source ordinal.
pub fn mix_datasets(spec: &MixSpec<'_>) -> Result<Dataset> {
    if spec.sources.is_empty() {
        return Err(Error::InvalidParameter("mix needs at least one source".into()));
    }
    let d = spec.sources[0].0.dim();
    let k = spec.sources[0].0.n_classes();
    for (ds, _) in &spec.sources {
        if ds.dim() != d {
            return Err(Error::Dimension(format!(
                "mix sources disagree on d: {} vs {} ({})",
                d,
                ds.dim(),
                ds.name
            )));
        }
        if ds.n_classes() != k {
            return Err(Error::Dimension(format!(
                "mix sources disagree on K: {} vs {} ({})",
                k,
                ds.n_classes(),
                ds.name
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut picks: Vec<(usize, Vec<usize>)> = Vec::with_capacity(spec.sources.len());
    let mut total = 0usize;
    for (src_idx, (ds, amount)) in spec.sources.iter().enumerate() {
        let n = ds.len();
        let take = match *amount {
            MixAmount::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "mix fraction {f} must lie in (0, 1]"
                    )));
                }
                (f * n as f64).round() as usize
            }
            MixAmount::Count(c) => {
                if c > n {
                    return Err(Error::InvalidParameter(format!(
                        "mix count {c} exceeds source size {n} ({})",
                        ds.name
                    )));
                }
                c
            }
        };
        let indices = draw_sorted(&mut rng, n, take);
        total += indices.len();
        picks.push((src_idx, indices));
    }
    if total == 0 {
        return Err(Error::InsufficientSamples {
            what: "mix output",
            required: 1,
            actual: 0,
        });
    }

    let mut features = Array2::<f32>::zeros((total, d));
    let mut logits = Array2::<f32>::zeros((total, k));
    let mut labels = Vec::with_capacity(total);
    let mut predictions = Vec::with_capacity(total);
    let mut provenance = Vec::with_capacity(total);
    let mut out = 0usize;
    for (src_idx, indices) in &picks {
        let ds = spec.sources[*src_idx].0;
        for &i in indices {
            features.row_mut(out).assign(&ds.features.row(i));
            logits.row_mut(out).assign(&ds.logits.row(i));
            labels.push(ds.labels[i]);
            predictions.push(ds.predictions[i]);
            provenance.push(*src_idx as u32);
            out += 1;
        }
    }

    let derived = spec.sources.iter().all(|(ds, _)| ds.derived_predictions);
    let name = format!(
        "mix:{}",
        spec.sources
            .iter()
            .map(|(ds, _)| ds.name.as_str())
            .collect::<Vec<_>>()
            .join("+")
    );
    let mut mixed = Dataset::new(name, features, logits, labels, Some(predictions))?;
    mixed.derived_predictions = derived;
    mixed.provenance = Some(provenance);
    Ok(mixed)
}

/// Keep a class-stratified fraction of the dataset: every class that had
/// samples keeps at least one, and the draw is a pure function of
/// `(dataset, fraction, seed)`.
pub fn subsample_labeled(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "subsample fraction {fraction} must lie in (0, 1]"
        )));
    }
    let n = ds.len();
    if fraction * (n as f64) < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "fraction {fraction} of {n} samples yields fewer than one sample"
        )));
    }
    let k = ds.n_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &label) in ds.labels.iter().enumerate() {
        by_class[label].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected: Vec<usize> = Vec::new();
    for class_indices in by_class.iter() {
        let nc = class_indices.len();
        if nc == 0 {
            continue;
        }
        let take = ((fraction * nc as f64).round() as usize).clamp(1, nc);
        let local = draw_sorted(&mut rng, nc, take);
        selected.extend(local.into_iter().map(|j| class_indices[j]));
    }
    selected.sort_unstable();

    let d = ds.dim();
    let m = selected.len();
    let mut features = Array2::<f32>::zeros((m, d));
    let mut logits = Array2::<f32>::zeros((m, k));
    let mut labels = Vec::with_capacity(m);
    let mut predictions = Vec::with_capacity(m);
    for (out, &i) in selected.iter().enumerate() {
        features.row_mut(out).assign(&ds.features.row(i));
        logits.row_mut(out).assign(&ds.logits.row(i));
        labels.push(ds.labels[i]);
        predictions.push(ds.predictions[i]);
    }
    let mut sub = Dataset::new(
        ds.name.clone(),
        features,
        logits,
        labels,
        Some(predictions),
    )?;
    sub.derived_predictions = ds.derived_predictions;
    sub.provenance = ds
        .provenance
        .as_ref()
        .map(|p| selected.iter().map(|&i| p[i]).collect());
    Ok(sub)
}

/// Seeded draw of `take` indices out of `0..n` without replacement, emitted
/// ascending. A full take copies `0..n` without consuming randomness.
fn draw_sorted(rng: &mut ChaCha8Rng, n: usize, take: usize) -> Vec<usize> {
    if take >= n {
        return (0..n).collect();
    }
    let mut indices: Vec<usize> = rand::seq::index::sample(rng, n, take).into_vec();
    indices.sort_unstable();
    indices
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny(name: &str, labels: Vec<usize>, predictions: Option<Vec<usize>>) -> Dataset {
        let n = labels.len();
        let features = Array2::from_shape_fn((n, 3), |(i, j)| (i * 3 + j) as f32);
        let logits = Array2::from_shape_fn((n, 2), |(i, j)| if labels[i] == j { 1.0 } else { 0.0 });
        Dataset::new(name, features, logits, labels, predictions).unwrap()
    }

    #[test]
    fn derives_predictions_by_argmax() {
        // N=2, d=3, K=2 with logit rows [1,0] and [0,1].
        let features = Array2::<f32>::zeros((2, 3));
        let logits = array![[1.0_f32, 0.0], [0.0, 1.0]];
        let ds = Dataset::new("t", features, logits, vec![0, 1], None).unwrap();
        assert_eq!(ds.predictions, vec![0, 1]);
        assert!(ds.derived_predictions);
    }

    #[test]
    fn argmax_tie_breaks_to_lowest_index() {
        let logits = array![[2.0_f32, 2.0]];
        assert_eq!(argmax_predictions(&logits), vec![0]);
    }

    #[test]
    fn rejects_nan_features() {
        let mut features = Array2::<f32>::zeros((2, 2));
        features[[1, 0]] = f32::NAN;
        let logits = Array2::<f32>::zeros((2, 2));
        let err = Dataset::new("t", features, logits, vec![0, 1], None).unwrap_err();
        match err {
            Error::NonFinite { field, row } => {
                assert_eq!(field, "features");
                assert_eq!(row, 1);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn split_follows_correctness() {
        let ds = tiny("t", vec![0, 1], Some(vec![0, 0]));
        let (correct, wrong, mask) = split_by_correctness(&ds);
        assert_eq!(correct.nrows(), 1);
        assert_eq!(wrong.nrows(), 1);
        assert_eq!(correct.row(0), ds.features.row(0));
        assert_eq!(wrong.row(0), ds.features.row(1));
        assert_eq!(mask.n_correct, 1);
        assert_eq!(mask.n_wrong, 1);
    }

    #[test]
    fn split_allows_empty_wrong_partition() {
        let ds = tiny("t", vec![0, 1, 0], None);
        let (correct, wrong, mask) = split_by_correctness(&ds);
        assert_eq!(correct.nrows(), 3);
        assert_eq!(wrong.nrows(), 0);
        assert_eq!(mask.n_wrong, 0);
    }

    #[test]
    fn correctness_counts() {
        let ds = tiny("t", vec![1, 1, 0], Some(vec![1, 0, 0]));
        let mask = ds.correctness();
        assert_eq!(mask.n_correct, 2);
        assert_eq!(mask.n_wrong, 1);
        assert_eq!(mask.mask, vec![true, false, true]);
    }

    #[test]
    fn split_reinterleaves_to_original() {
        let ds = tiny("t", vec![0, 1, 1, 0, 1], Some(vec![0, 0, 1, 1, 1]));
        let (correct, wrong, mask) = split_by_correctness(&ds);
        let mut rebuilt = Array2::<f32>::zeros((ds.len(), ds.dim()));
        let (mut ci, mut wi) = (0, 0);
        for (i, &c) in mask.mask.iter().enumerate() {
            if c {
                rebuilt.row_mut(i).assign(&correct.row(ci));
                ci += 1;
            } else {
                rebuilt.row_mut(i).assign(&wrong.row(wi));
                wi += 1;
            }
        }
        assert_eq!(rebuilt, ds.features);
    }

    #[test]
    fn full_fraction_mix_is_union() {
        let a = tiny("a", vec![0; 100], None);
        let b = tiny("b", vec![1; 100], None);
        let spec = MixSpec {
            sources: vec![(&a, MixAmount::Fraction(1.0)), (&b, MixAmount::Fraction(1.0))],
            seed: 0,
        };
        let mixed = mix_datasets(&spec).unwrap();
        assert_eq!(mixed.len(), 200);
        let prov = mixed.provenance.as_ref().unwrap();
        assert!(prov[..100].iter().all(|&s| s == 0));
        assert!(prov[100..].iter().all(|&s| s == 1));
    }

    #[test]
    fn mix_is_deterministic_given_seed() {
        let a = tiny("a", vec![0; 50], None);
        let b = tiny("b", vec![1; 40], None);
        let run = || {
            let spec = MixSpec {
                sources: vec![(&a, MixAmount::Fraction(0.4)), (&b, MixAmount::Count(17))],
                seed: 99,
            };
            mix_datasets(&spec).unwrap()
        };
        let (m1, m2) = (run(), run());
        assert_eq!(m1.features, m2.features);
        assert_eq!(m1.logits, m2.logits);
        assert_eq!(m1.labels, m2.labels);
        assert_eq!(m1.provenance, m2.provenance);
    }

    #[test]
    fn mix_rejects_incompatible_sources() {
        let a = tiny("a", vec![0, 1], None);
        let features = Array2::<f32>::zeros((2, 5));
        let logits = Array2::<f32>::zeros((2, 2));
        let b = Dataset::new("b", features, logits, vec![0, 1], None).unwrap();
        let spec = MixSpec {
            sources: vec![(&a, MixAmount::Fraction(1.0)), (&b, MixAmount::Fraction(1.0))],
            seed: 0,
        };
        assert!(matches!(mix_datasets(&spec), Err(Error::Dimension(_))));
    }

    // Golden: fraction 0.5 of a 10-sample source at seed 7 picks a specific
    // subset, frozen from the seeded reference sampler.
    #[test]
    fn mix_half_fraction_golden_subset() {
        let a = tiny("a", vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1], None);
        let spec = MixSpec {
            sources: vec![(&a, MixAmount::Fraction(0.5))],
            seed: 7,
        };
        let mixed = mix_datasets(&spec).unwrap();
        assert_eq!(mixed.len(), 5);
        let picked: Vec<f32> = (0..5).map(|i| mixed.features[[i, 0]] / 3.0).collect();
        let golden: Vec<f32> = vec![0.0, 1.0, 2.0, 7.0, 8.0];
        assert_eq!(picked, golden, "seeded sampler drifted from the frozen draw");
    }

    #[test]
    fn subsample_identity_at_full_fraction() {
        let ds = tiny("t", vec![0, 1, 0, 1], None);
        let sub = subsample_labeled(&ds, 1.0, 3).unwrap();
        assert_eq!(sub.features, ds.features);
        assert_eq!(sub.logits, ds.logits);
        assert_eq!(sub.labels, ds.labels);
        assert_eq!(sub.name, ds.name);
    }

    #[test]
    fn subsample_stratifies_by_class() {
        let ds = tiny("t", vec![0, 0, 1, 1], None);
        let sub = subsample_labeled(&ds, 0.5, 11).unwrap();
        assert_eq!(sub.len(), 2);
        let zeros = sub.labels.iter().filter(|&&l| l == 0).count();
        assert_eq!(zeros, 1);
    }

    #[test]
    fn subsample_keeps_one_per_class_at_tiny_fractions() {
        let ds = tiny("t", vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 1], None);
        let sub = subsample_labeled(&ds, 0.1, 5).unwrap();
        assert!(sub.labels.contains(&1), "class 1 must keep its one sample");
    }

    #[test]
    fn subsample_rejects_sub_single_draws() {
        let ds = tiny("t", vec![0, 1], None);
        assert!(matches!(
            subsample_labeled(&ds, 0.2, 1),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn subsample_is_deterministic() {
        let ds = tiny("t", (0..40).map(|i| i % 2).collect(), None);
        let s1 = subsample_labeled(&ds, 0.3, 123).unwrap();
        let s2 = subsample_labeled(&ds, 0.3, 123).unwrap();
        assert_eq!(s1.features, s2.features);
        assert_eq!(s1.labels, s2.labels);
    }
}
