//! Class-conditional Gaussian statistics and the Mahalanobis-distance score
//! family: MDS and its correct-vs-wrong difference, delta-MDS.
//!
//! Statistics are fitted per partition: per-class sample means plus one tied
//! (pooled, class-mean-centered) covariance with denominator `n - G`, where
//! `G` is the number of classes that contributed samples. A ridge is added
//! only when the covariance is close to singular, and the additive value
//! actually applied is recorded.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, ArrayView2};

use crate::batch;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::score::{ScoreMethod, ScoreParams, ScoreVector};

/// Default shrinkage coefficient: the ridge added on near-singularity is
/// `eps * trace(cov) / d` (or `eps` itself when the covariance is all zero).
pub const DEFAULT_SHRINKAGE_EPS: f64 = 1e-6;

/// Eigenvalue-ratio threshold that triggers shrinkage: the covariance is
/// treated as near-singular when its smallest eigenvalue is at most
/// `1e-10 x` the largest.
pub const NEAR_SINGULAR_RATIO: f64 = 1e-10;

const SST_MAGIC: &[u8; 4] = b"SST1";

/// Per-class means with a shared covariance and its Cholesky factor.
#[derive(Clone, Debug)]
pub struct GaussianStats {
    /// K×d per-class means; rows for absent classes are zero.
    means: Array2<f64>,
    /// Membership bitmap: `present[i]` iff class `i` contributed samples.
    present: Vec<bool>,
    /// d×d tied covariance, after any shrinkage.
    covariance: Array2<f64>,
    /// Lower Cholesky factor of `covariance`.
    chol: Array2<f64>,
    /// Additive diagonal ridge actually applied (0 when none was needed).
    shrinkage: f64,
    sample_count: usize,
}

impl GaussianStats {
    /// Fit per-class means and the tied covariance from labeled features.
    ///
    /// Classes without samples are recorded absent rather than erroring;
    /// fewer than two total samples is an error. `eps` is the shrinkage
    /// coefficient applied only on near-singularity.
    pub fn fit(
        features: ArrayView2<'_, f32>,
        labels: &[usize],
        n_classes: usize,
        eps: f64,
    ) -> Result<Self> {
        let n = features.nrows();
        let d = features.ncols();
        if labels.len() != n {
            return Err(Error::LengthMismatch {
                left_name: "features",
                left: n,
                right_name: "labels",
                right: labels.len(),
            });
        }
        if n < 2 {
            return Err(Error::InsufficientSamples {
                what: "gaussian statistics",
                required: 2,
                actual: n,
            });
        }
        if eps < 0.0 || eps.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "shrinkage eps {eps} must be >= 0"
            )));
        }

        let mut sums = Array2::<f64>::zeros((n_classes, d));
        let mut counts = vec![0usize; n_classes];
        for (i, &label) in labels.iter().enumerate() {
            if label >= n_classes {
                return Err(Error::InvalidParameter(format!(
                    "label {label} at row {i} is outside [0, {n_classes})"
                )));
            }
            counts[label] += 1;
            for j in 0..d {
                sums[[label, j]] += features[[i, j]] as f64;
            }
        }
        let mut means = Array2::<f64>::zeros((n_classes, d));
        let mut present = vec![false; n_classes];
        let mut groups = 0usize;
        for c in 0..n_classes {
            if counts[c] > 0 {
                present[c] = true;
                groups += 1;
                for j in 0..d {
                    means[[c, j]] = sums[[c, j]] / counts[c] as f64;
                }
            }
        }

        // Pooled class-mean-centered scatter, denominator n - G.
        let mut scatter = Array2::<f64>::zeros((d, d));
        let mut diff = vec![0.0f64; d];
        for (i, &label) in labels.iter().enumerate() {
            for j in 0..d {
                diff[j] = features[[i, j]] as f64 - means[[label, j]];
            }
            for a in 0..d {
                for b in a..d {
                    scatter[[a, b]] += diff[a] * diff[b];
                }
            }
        }
        let denom = n.saturating_sub(groups);
        let mut covariance = Array2::<f64>::zeros((d, d));
        if denom >= 1 {
            for a in 0..d {
                for b in a..d {
                    let v = scatter[[a, b]] / denom as f64;
                    covariance[[a, b]] = v;
                    covariance[[b, a]] = v;
                }
            }
        }

        let (covariance, chol, shrinkage) = regularize(covariance, eps)?;
        Ok(GaussianStats {
            means,
            present,
            covariance,
            chol,
            shrinkage,
            sample_count: n,
        })
    }

    /// Build statistics from externally supplied parameters (e.g. the true
    /// generating means and covariance). The covariance must be symmetric
    /// and positive definite; no shrinkage is applied.
    pub fn from_parts(
        means: Array2<f64>,
        present: Vec<bool>,
        covariance: Array2<f64>,
        sample_count: usize,
    ) -> Result<Self> {
        if means.nrows() != present.len() {
            return Err(Error::LengthMismatch {
                left_name: "means",
                left: means.nrows(),
                right_name: "present",
                right: present.len(),
            });
        }
        if covariance.nrows() != means.ncols() || covariance.ncols() != means.ncols() {
            return Err(Error::Dimension(format!(
                "covariance is {}x{}, expected {}x{}",
                covariance.nrows(),
                covariance.ncols(),
                means.ncols(),
                means.ncols()
            )));
        }
        if !linalg::is_symmetric(&covariance, 1e-9) {
            return Err(Error::InvalidParameter(
                "covariance is not symmetric within 1e-9 relative".into(),
            ));
        }
        let chol = linalg::cholesky(&covariance).ok_or(Error::NotPositiveDefinite)?;
        Ok(GaussianStats {
            means,
            present,
            covariance,
            chol,
            shrinkage: 0.0,
            sample_count,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn present(&self) -> &[bool] {
        &self.present
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    /// Additive diagonal ridge actually applied during the fit.
    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    /// `log det` of the (regularized) covariance.
    pub fn log_det(&self) -> f64 {
        linalg::log_det(&self.chol)
    }

    /// Squared Mahalanobis distance from `z` to the centroid of `class`.
    pub fn mahalanobis_sq(&self, class: usize, z: &[f64]) -> f64 {
        let d = self.dim();
        let mut diff = vec![0.0f64; d];
        let mut scratch = vec![0.0f64; d];
        for j in 0..d {
            diff[j] = z[j] - self.means[[class, j]];
        }
        linalg::quad_form(&self.chol, &diff, &mut scratch)
    }

    /// Mahalanobis score: max over present classes of the negative squared
    /// distance to the class centroid. Always <= 0.
    pub fn mds_score(&self, z: &[f64]) -> Result<f64> {
        let d = self.dim();
        let mut best = f64::NEG_INFINITY;
        let mut diff = vec![0.0f64; d];
        let mut scratch = vec![0.0f64; d];
        let mut any = false;
        for c in 0..self.n_classes() {
            if !self.present[c] {
                continue;
            }
            any = true;
            for j in 0..d {
                diff[j] = z[j] - self.means[[c, j]];
            }
            let q = linalg::quad_form(&self.chol, &diff, &mut scratch);
            if -q > best {
                best = -q;
            }
        }
        if !any {
            return Err(Error::NoClassPresent);
        }
        Ok(best)
    }

    /// Serialize to the stats container:
    /// `magic "SST1" | u32 version | u64 K | u64 d | u64 sample_count |
    ///  f64 shrinkage | K u8 bitmap | K*d f64 means | d*d f64 covariance`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e: std::io::Error| Error::io(path, e);
        w.write_all(SST_MAGIC).map_err(io_err)?;
        w.write_u32::<LittleEndian>(1).map_err(io_err)?;
        w.write_u64::<LittleEndian>(self.n_classes() as u64).map_err(io_err)?;
        w.write_u64::<LittleEndian>(self.dim() as u64).map_err(io_err)?;
        w.write_u64::<LittleEndian>(self.sample_count as u64).map_err(io_err)?;
        w.write_f64::<LittleEndian>(self.shrinkage).map_err(io_err)?;
        for &p in &self.present {
            w.write_u8(p as u8).map_err(io_err)?;
        }
        for &v in self.means.iter() {
            w.write_f64::<LittleEndian>(v).map_err(io_err)?;
        }
        for &v in self.covariance.iter() {
            w.write_f64::<LittleEndian>(v).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let bad = |detail: String| Error::format("SST1", path, detail);

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != SST_MAGIC {
            return Err(bad(format!("bad magic {magic:?}, expected \"SST1\"")));
        }
        let version = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))?;
        if version != 1 {
            return Err(bad(format!("unsupported version {version}")));
        }
        let k = r.read_u64::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
        let d = r.read_u64::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
        let sample_count = r.read_u64::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
        let shrinkage = r.read_f64::<LittleEndian>().map_err(|e| Error::io(path, e))?;
        let mut present = Vec::with_capacity(k);
        for _ in 0..k {
            present.push(r.read_u8().map_err(|e| Error::io(path, e))? != 0);
        }
        let mut means_raw = Vec::with_capacity(k * d);
        for _ in 0..k * d {
            means_raw.push(r.read_f64::<LittleEndian>().map_err(|e| Error::io(path, e))?);
        }
        let mut cov_raw = Vec::with_capacity(d * d);
        for _ in 0..d * d {
            cov_raw.push(r.read_f64::<LittleEndian>().map_err(|e| Error::io(path, e))?);
        }
        let means = Array2::from_shape_vec((k, d), means_raw)
            .map_err(|e| bad(format!("means shape: {e}")))?;
        let covariance = Array2::from_shape_vec((d, d), cov_raw)
            .map_err(|e| bad(format!("covariance shape: {e}")))?;
        let chol = linalg::cholesky(&covariance).ok_or(Error::NotPositiveDefinite)?;
        Ok(GaussianStats {
            means,
            present,
            covariance,
            chol,
            shrinkage,
            sample_count,
        })
    }
}

/// Apply the near-singularity rule: leave a well-conditioned covariance
/// untouched, otherwise add `eps * trace/d` (or `eps` for an all-zero
/// matrix) to the diagonal. Returns the final covariance, its Cholesky
/// factor, and the ridge applied.
fn regularize(mut covariance: Array2<f64>, eps: f64) -> Result<(Array2<f64>, Array2<f64>, f64)> {
    let d = covariance.nrows();
    let lambda_max_bound = linalg::gershgorin_max(&covariance);
    let mut needs_ridge = lambda_max_bound <= 0.0 || lambda_max_bound.is_nan();
    if !needs_ridge {
        // Near-singular iff the smallest eigenvalue is <= ratio * largest;
        // probe by testing whether cov - t*I stays positive definite.
        let t = NEAR_SINGULAR_RATIO * lambda_max_bound;
        let mut probe = covariance.clone();
        for i in 0..d {
            probe[[i, i]] -= t;
        }
        needs_ridge = linalg::cholesky(&probe).is_none();
    }

    let mut applied = 0.0;
    if needs_ridge {
        let trace: f64 = (0..d).map(|i| covariance[[i, i]]).sum();
        applied = if trace > 0.0 { eps * trace / d as f64 } else { eps };
        if applied <= 0.0 || applied.is_nan() {
            return Err(Error::NotPositiveDefinite);
        }
        for i in 0..d {
            covariance[[i, i]] += applied;
        }
    }
    let chol = linalg::cholesky(&covariance).ok_or(Error::NotPositiveDefinite)?;
    Ok((covariance, chol, applied))
}

/// Difference of Mahalanobis scores against the correct-partition and
/// wrong-partition statistics.
pub fn delta_mds(stats_c: &GaussianStats, stats_w: &GaussianStats, z: &[f64]) -> Result<f64> {
    Ok(stats_c.mds_score(z)? - stats_w.mds_score(z)?)
}

/// Fitted statistics for both prediction partitions of a training split.
#[derive(Clone, Debug)]
pub struct DeltaMdsFit {
    pub correct: GaussianStats,
    pub wrong: GaussianStats,
}

/// Default minimum samples required per partition before fitting delta-MDS.
pub const MIN_PARTITION_SAMPLES: usize = 2;

/// Fit delta-MDS statistics from a training split, keying both partitions by
/// the true label. Uses the default partition-size minimum.
///
/// Wrong-partition classes with fewer than two samples are dropped from the
/// class-wise model; when fewer than two classes survive, a single global
/// wrong mean/covariance over all wrong samples is used instead. An empty
/// wrong partition is a hard error: the score is undefined and the caller
/// should fall back to a logit score.
pub fn fit_delta_mds(train: &Dataset, eps: f64) -> Result<DeltaMdsFit> {
    fit_delta_mds_with_min(train, eps, MIN_PARTITION_SAMPLES)
}

/// [`fit_delta_mds`] with a configurable per-partition sample minimum, for
/// callers that want to refuse fits below a stricter floor (e.g. the feature
/// dimension).
pub fn fit_delta_mds_with_min(
    train: &Dataset,
    eps: f64,
    min_partition: usize,
) -> Result<DeltaMdsFit> {
    let k = train.n_classes();
    let d = train.dim();
    let mask = train.correctness();
    let min_partition = min_partition.max(MIN_PARTITION_SAMPLES);

    if mask.n_wrong == 0 {
        return Err(Error::EmptyWrongPartition);
    }
    if mask.n_correct < min_partition {
        return Err(Error::InsufficientSamples {
            what: "correct partition",
            required: min_partition,
            actual: mask.n_correct,
        });
    }
    if mask.n_wrong < min_partition {
        return Err(Error::InsufficientSamples {
            what: "wrong partition",
            required: min_partition,
            actual: mask.n_wrong,
        });
    }

    let gather = |want_correct: bool| -> (Array2<f32>, Vec<usize>) {
        let count = if want_correct { mask.n_correct } else { mask.n_wrong };
        let mut feats = Array2::<f32>::zeros((count, d));
        let mut labels = Vec::with_capacity(count);
        let mut out = 0usize;
        for (i, &is_correct) in mask.mask.iter().enumerate() {
            if is_correct == want_correct {
                feats.row_mut(out).assign(&train.features.row(i));
                labels.push(train.labels[i]);
                out += 1;
            }
        }
        (feats, labels)
    };

    let (correct_feats, correct_labels) = gather(true);
    let correct = GaussianStats::fit(correct_feats.view(), &correct_labels, k, eps)?;

    let (wrong_feats, wrong_labels) = gather(false);
    let mut class_counts = vec![0usize; k];
    for &l in &wrong_labels {
        class_counts[l] += 1;
    }
    let survivors = class_counts.iter().filter(|&&c| c >= 2).count();
    let wrong = if survivors >= 2 {
        // Keep only classes with >= 2 samples in the class-wise model.
        let kept: Vec<usize> = (0..wrong_labels.len())
            .filter(|&i| class_counts[wrong_labels[i]] >= 2)
            .collect();
        let mut feats = Array2::<f32>::zeros((kept.len(), d));
        let mut labels = Vec::with_capacity(kept.len());
        for (out, &i) in kept.iter().enumerate() {
            feats.row_mut(out).assign(&wrong_feats.row(i));
            labels.push(wrong_labels[i]);
        }
        GaussianStats::fit(feats.view(), &labels, k, eps)?
    } else {
        // Single global wrong mean/covariance over all wrong samples.
        let labels = vec![0usize; wrong_labels.len()];
        GaussianStats::fit(wrong_feats.view(), &labels, 1, eps)?
    };

    Ok(DeltaMdsFit { correct, wrong })
}

/// Batch MDS scores over a feature matrix, parallel over rows.
pub fn mds_scores(stats: &GaussianStats, features: &Array2<f32>) -> Result<ScoreVector> {
    check_dim(stats, features)?;
    stats.mds_score(&row_f64(features, 0))?;
    let values = batch::map_rows(features.nrows(), |i| {
        stats.mds_score(&row_f64(features, i)).expect("validated above")
    });
    ScoreVector::new(
        values,
        ScoreMethod::Mds,
        ScoreParams {
            shrinkage: Some(stats.shrinkage),
            ..ScoreParams::default()
        },
    )
}

/// Sequential reference for [`mds_scores`]; bit-identical output.
pub fn mds_scores_seq(stats: &GaussianStats, features: &Array2<f32>) -> Result<ScoreVector> {
    check_dim(stats, features)?;
    stats.mds_score(&row_f64(features, 0))?;
    let values = batch::map_rows_seq(features.nrows(), |i| {
        stats.mds_score(&row_f64(features, i)).expect("validated above")
    });
    ScoreVector::new(
        values,
        ScoreMethod::Mds,
        ScoreParams {
            shrinkage: Some(stats.shrinkage),
            ..ScoreParams::default()
        },
    )
}

/// Batch delta-MDS scores over a feature matrix, parallel over rows.
pub fn delta_mds_scores(
    fit: &DeltaMdsFit,
    features: &Array2<f32>,
) -> Result<ScoreVector> {
    check_dim(&fit.correct, features)?;
    check_dim(&fit.wrong, features)?;
    delta_mds(&fit.correct, &fit.wrong, &row_f64(features, 0))?;
    let values = batch::map_rows(features.nrows(), |i| {
        delta_mds(&fit.correct, &fit.wrong, &row_f64(features, i)).expect("validated above")
    });
    ScoreVector::new(
        values,
        ScoreMethod::DeltaMds,
        ScoreParams {
            shrinkage: Some(fit.correct.shrinkage.max(fit.wrong.shrinkage)),
            ..ScoreParams::default()
        },
    )
}

/// Sequential reference for [`delta_mds_scores`]; bit-identical output.
pub fn delta_mds_scores_seq(
    fit: &DeltaMdsFit,
    features: &Array2<f32>,
) -> Result<ScoreVector> {
    check_dim(&fit.correct, features)?;
    check_dim(&fit.wrong, features)?;
    delta_mds(&fit.correct, &fit.wrong, &row_f64(features, 0))?;
    let values = batch::map_rows_seq(features.nrows(), |i| {
        delta_mds(&fit.correct, &fit.wrong, &row_f64(features, i)).expect("validated above")
    });
    ScoreVector::new(
        values,
        ScoreMethod::DeltaMds,
        ScoreParams {
            shrinkage: Some(fit.correct.shrinkage.max(fit.wrong.shrinkage)),
            ..ScoreParams::default()
        },
    )
}

fn check_dim(stats: &GaussianStats, features: &Array2<f32>) -> Result<()> {
    if features.nrows() == 0 {
        return Err(Error::InsufficientSamples {
            what: "score input",
            required: 1,
            actual: 0,
        });
    }
    if stats.dim() != features.ncols() {
        return Err(Error::Dimension(format!(
            "statistics have d={}, features have d={}",
            stats.dim(),
            features.ncols()
        )));
    }
    Ok(())
}

fn row_f64(features: &Array2<f32>, i: usize) -> Vec<f64> {
    features.row(i).iter().map(|&v| v as f64).collect()
}
