//! Exact brute-force k-nearest-neighbor queries over stored feature sets,
//! and the KNN score family: the k-th-distance score and the
//! correct-vs-wrong difference, delta-KNN (plain and averaged-log variants).
//!
//! Search is a flat scan: every query computes all M distances exactly, so
//! results are reproducible and serve as the reference for any accelerated
//! index. Queries are pure and parallelize over samples.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::batch;
use crate::error::{Error, Result};
use crate::score::{ScoreMethod, ScoreParams, ScoreVector};

/// Distances are floored at this value before logarithms so duplicated
/// train/test rows cannot produce -inf.
pub const DISTANCE_FLOOR: f64 = 1e-12;

const SNN_MAGIC: &[u8; 4] = b"SNN1";

/// Queryable store of feature vectors under the Euclidean metric.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    /// M×d stored points, already L2-normalized when `normalized` is set.
    points: Array2<f64>,
    normalized: bool,
}

impl NeighborIndex {
    /// Build an index from f32 feature rows, optionally L2-normalizing each
    /// row. A zero-norm row cannot be normalized and is an error.
    pub fn build(features: &Array2<f32>, normalize: bool) -> Result<Self> {
        let m = features.nrows();
        let d = features.ncols();
        if m < 1 {
            return Err(Error::InsufficientSamples {
                what: "neighbor index",
                required: 1,
                actual: 0,
            });
        }
        let mut points = Array2::<f64>::zeros((m, d));
        for i in 0..m {
            for j in 0..d {
                points[[i, j]] = features[[i, j]] as f64;
            }
            if normalize {
                let norm: f64 = (0..d).map(|j| points[[i, j]] * points[[i, j]]).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(Error::ZeroNorm { row: i });
                }
                for j in 0..d {
                    points[[i, j]] /= norm;
                }
            }
        }
        Ok(NeighborIndex { points, normalized: normalize })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    /// Prepare a query vector: cast to f64 and, when the index is
    /// normalized, normalize the query the same way.
    pub fn prepare_query(&self, z: &[f32]) -> Result<Vec<f64>> {
        if z.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "query has d={}, index has d={}",
                z.len(),
                self.dim()
            )));
        }
        let mut q: Vec<f64> = z.iter().map(|&v| v as f64).collect();
        if self.normalized {
            let norm: f64 = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroNorm { row: 0 });
            }
            for v in &mut q {
                *v /= norm;
            }
        }
        Ok(q)
    }

    /// Exact distances to the k nearest stored points, ascending.
    pub fn k_smallest_distances(&self, query: &[f64], k: usize) -> Result<Vec<f64>> {
        let m = self.len();
        if k < 1 || k > m {
            return Err(Error::KOutOfRange { k, m });
        }
        let d = self.dim();
        let mut sq_dists: Vec<f64> = Vec::with_capacity(m);
        for i in 0..m {
            let mut acc = 0.0f64;
            for j in 0..d {
                let diff = self.points[[i, j]] - query[j];
                acc += diff * diff;
            }
            sq_dists.push(acc);
        }
        if k < m {
            sq_dists.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
            sq_dists.truncate(k);
        }
        sq_dists.sort_unstable_by(|a, b| a.total_cmp(b));
        Ok(sq_dists.into_iter().map(f64::sqrt).collect())
    }

    /// Distance to the k-th nearest stored point.
    pub fn kth_distance(&self, query: &[f64], k: usize) -> Result<f64> {
        Ok(*self
            .k_smallest_distances(query, k)?
            .last()
            .expect("k >= 1 checked"))
    }

    /// Serialize to the index container:
    /// `magic "SNN1" | u32 version | u8 flags (bit0 normalized) |
    ///  u64 M | u64 d | M*d f64 points`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e: std::io::Error| Error::io(path, e);
        w.write_all(SNN_MAGIC).map_err(io_err)?;
        w.write_u32::<LittleEndian>(1).map_err(io_err)?;
        w.write_u8(self.normalized as u8).map_err(io_err)?;
        w.write_u64::<LittleEndian>(self.len() as u64).map_err(io_err)?;
        w.write_u64::<LittleEndian>(self.dim() as u64).map_err(io_err)?;
        for &v in self.points.iter() {
            w.write_f64::<LittleEndian>(v).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let bad = |detail: String| Error::format("SNN1", path, detail);

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != SNN_MAGIC {
            return Err(bad(format!("bad magic {magic:?}, expected \"SNN1\"")));
        }
        let version = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))?;
        if version != 1 {
            return Err(bad(format!("unsupported version {version}")));
        }
        let normalized = r.read_u8().map_err(|e| Error::io(path, e))? != 0;
        let m = r.read_u64::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
        let d = r.read_u64::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
        let mut raw = Vec::with_capacity(m * d);
        for _ in 0..m * d {
            raw.push(r.read_f64::<LittleEndian>().map_err(|e| Error::io(path, e))?);
        }
        let points =
            Array2::from_shape_vec((m, d), raw).map_err(|e| bad(format!("point shape: {e}")))?;
        Ok(NeighborIndex { points, normalized })
    }
}

/// KNN confidence score: negative distance to the k-th nearest stored point.
pub fn knn_score(index: &NeighborIndex, z: &[f32], k: usize) -> Result<f64> {
    let q = index.prepare_query(z)?;
    Ok(-index.kth_distance(&q, k)?)
}

/// Delta-KNN for one query: difference of negative log neighbor distances
/// against the correct and wrong index.
///
/// With `averaged` unset this is `-log u_k + log v_k`; with it set, the mean
/// log-distance over the top k neighbors is used on both sides. Distances
/// are floored at [`DISTANCE_FLOOR`] before the logarithm.
pub fn delta_knn(
    index_c: &NeighborIndex,
    index_w: &NeighborIndex,
    z: &[f32],
    k: usize,
    averaged: bool,
) -> Result<f64> {
    if index_w.is_empty() {
        return Err(Error::EmptyWrongPartition);
    }
    let qc = index_c.prepare_query(z)?;
    let qw = index_w.prepare_query(z)?;
    let u = index_c.k_smallest_distances(&qc, k)?;
    let v = index_w.k_smallest_distances(&qw, k)?;
    Ok(delta_from_distances(&u, &v, averaged))
}

fn log_floored(dist: f64) -> f64 {
    dist.max(DISTANCE_FLOOR).ln()
}

fn delta_from_distances(u: &[f64], v: &[f64], averaged: bool) -> f64 {
    if averaged {
        let k = u.len() as f64;
        let mean_log_u: f64 = u.iter().map(|&d| log_floored(d)).sum::<f64>() / k;
        let mean_log_v: f64 = v.iter().map(|&d| log_floored(d)).sum::<f64>() / k;
        -mean_log_u + mean_log_v
    } else {
        -log_floored(*u.last().expect("k >= 1")) + log_floored(*v.last().expect("k >= 1"))
    }
}

/// Batch KNN scores over a feature matrix, parallel over rows.
pub fn knn_scores(index: &NeighborIndex, features: &Array2<f32>, k: usize) -> Result<ScoreVector> {
    check_query_matrix(index, features)?;
    if k < 1 || k > index.len() {
        return Err(Error::KOutOfRange { k, m: index.len() });
    }
    probe_queries(&[index], features)?;
    let values = batch::map_rows(features.nrows(), |i| {
        knn_score(index, features.row(i).as_slice().unwrap(), k).expect("validated above")
    });
    ScoreVector::new(
        values,
        ScoreMethod::Knn,
        ScoreParams {
            k: Some(k),
            normalized: Some(index.normalized),
            ..ScoreParams::default()
        },
    )
}

/// Sequential reference for [`knn_scores`]; bit-identical output.
pub fn knn_scores_seq(
    index: &NeighborIndex,
    features: &Array2<f32>,
    k: usize,
) -> Result<ScoreVector> {
    check_query_matrix(index, features)?;
    if k < 1 || k > index.len() {
        return Err(Error::KOutOfRange { k, m: index.len() });
    }
    probe_queries(&[index], features)?;
    let values = batch::map_rows_seq(features.nrows(), |i| {
        knn_score(index, features.row(i).as_slice().unwrap(), k).expect("validated above")
    });
    ScoreVector::new(
        values,
        ScoreMethod::Knn,
        ScoreParams {
            k: Some(k),
            normalized: Some(index.normalized),
            ..ScoreParams::default()
        },
    )
}

/// Batch delta-KNN scores over a feature matrix, parallel over rows.
pub fn delta_knn_scores(
    index_c: &NeighborIndex,
    index_w: &NeighborIndex,
    features: &Array2<f32>,
    k: usize,
    averaged: bool,
) -> Result<ScoreVector> {
    validate_delta_inputs(index_c, index_w, features, k)?;
    let values = batch::map_rows(features.nrows(), |i| {
        delta_knn(index_c, index_w, features.row(i).as_slice().unwrap(), k, averaged)
            .expect("validated above")
    });
    ScoreVector::new(
        values,
        ScoreMethod::DeltaKnn,
        ScoreParams {
            k: Some(k),
            normalized: Some(index_c.normalized),
            averaged: Some(averaged),
            ..ScoreParams::default()
        },
    )
}

/// Sequential reference for [`delta_knn_scores`]; bit-identical output.
pub fn delta_knn_scores_seq(
    index_c: &NeighborIndex,
    index_w: &NeighborIndex,
    features: &Array2<f32>,
    k: usize,
    averaged: bool,
) -> Result<ScoreVector> {
    validate_delta_inputs(index_c, index_w, features, k)?;
    let values = batch::map_rows_seq(features.nrows(), |i| {
        delta_knn(index_c, index_w, features.row(i).as_slice().unwrap(), k, averaged)
            .expect("validated above")
    });
    ScoreVector::new(
        values,
        ScoreMethod::DeltaKnn,
        ScoreParams {
            k: Some(k),
            normalized: Some(index_c.normalized),
            averaged: Some(averaged),
            ..ScoreParams::default()
        },
    )
}

fn validate_delta_inputs(
    index_c: &NeighborIndex,
    index_w: &NeighborIndex,
    features: &Array2<f32>,
    k: usize,
) -> Result<()> {
    check_query_matrix(index_c, features)?;
    check_query_matrix(index_w, features)?;
    let limit = index_c.len().min(index_w.len());
    if k < 1 || k > limit {
        return Err(Error::KOutOfRange { k, m: limit });
    }
    probe_queries(&[index_c, index_w], features)
}

fn check_query_matrix(index: &NeighborIndex, features: &Array2<f32>) -> Result<()> {
    if features.nrows() == 0 {
        return Err(Error::InsufficientSamples {
            what: "score input",
            required: 1,
            actual: 0,
        });
    }
    if features.ncols() != index.dim() {
        return Err(Error::Dimension(format!(
            "queries have d={}, index has d={}",
            features.ncols(),
            index.dim()
        )));
    }
    Ok(())
}

/// Surface zero-norm query errors before the parallel map: normalized
/// indices reject queries that cannot be normalized.
fn probe_queries(indices: &[&NeighborIndex], features: &Array2<f32>) -> Result<()> {
    for index in indices {
        if !index.normalized {
            continue;
        }
        for i in 0..features.nrows() {
            let norm_sq: f64 = features
                .row(i)
                .iter()
                .map(|&v| (v as f64) * (v as f64))
                .sum();
            if norm_sq == 0.0 {
                return Err(Error::ZeroNorm { row: i });
            }
        }
    }
    Ok(())
}
