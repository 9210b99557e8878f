//! Seeded synthetic data with closed-form densities and an exact
//! likelihood-ratio oracle.
//!
//! Generators draw each sample from the correct-prediction density with the
//! configured prior, otherwise from the wrong-prediction density, and
//! synthesize calibrated binary logits whose top softmax entry equals the
//! true posterior probability of correctness. The oracle evaluates exact
//! log-densities, so downstream scores can be checked for rank agreement
//! with the true likelihood ratio.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::neighbors::NeighborIndex;
use crate::score::{ScoreMethod, ScoreParams, ScoreVector};

/// A single multivariate Gaussian with cached factorizations.
///
/// Sampling goes through the Cholesky factor; the log-pdf evaluates its
/// quadratic form through the explicitly inverted covariance, a numerical
/// route independent of the triangular solves used by the scoring code.
#[derive(Clone, Debug)]
pub struct GaussianDensity {
    mean: Vec<f64>,
    chol: Array2<f64>,
    precision: Array2<f64>,
    log_det: f64,
}

const LN_2PI: f64 = 1.8378770664093453;

impl GaussianDensity {
    pub fn new(mean: Vec<f64>, cov: Array2<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Dimension(format!(
                "covariance is {}x{}, expected {d}x{d}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if !linalg::is_symmetric(&cov, 1e-9) {
            return Err(Error::InvalidParameter(
                "density covariance is not symmetric".into(),
            ));
        }
        let chol = linalg::cholesky(&cov).ok_or(Error::NotPositiveDefinite)?;
        let precision = linalg::invert(&cov).ok_or(Error::NotPositiveDefinite)?;
        let log_det = linalg::log_det(&chol);
        Ok(GaussianDensity {
            mean,
            chol,
            precision,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_pdf(&self, z: &[f64]) -> f64 {
        let d = self.dim();
        let mut diff = vec![0.0f64; d];
        for j in 0..d {
            diff[j] = z[j] - self.mean[j];
        }
        let mut quad = 0.0f64;
        for a in 0..d {
            let mut acc = 0.0f64;
            for b in 0..d {
                acc += self.precision[[a, b]] * diff[b];
            }
            quad += diff[a] * acc;
        }
        -0.5 * (d as f64 * LN_2PI + self.log_det + quad)
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let d = self.dim();
        let mut xi = vec![0.0f64; d];
        for v in &mut xi {
            *v = StandardNormal.sample(rng);
        }
        let mut z = self.mean.clone();
        for i in 0..d {
            for j in 0..=i {
                z[i] += self.chol[[i, j]] * xi[j];
            }
        }
        z
    }
}

/// Per-class Gaussians sharing one covariance; the density evaluated is the
/// max over class components (an unnormalized envelope, matching the
/// closest-centroid structure of Mahalanobis scores). Sampling draws a
/// uniform class then its Gaussian.
#[derive(Clone, Debug)]
pub struct ClassGaussians {
    means: Array2<f64>,
    component: GaussianDensity,
}

impl ClassGaussians {
    pub fn new(means: Array2<f64>, cov: Array2<f64>) -> Result<Self> {
        if means.nrows() < 1 {
            return Err(Error::NoClassPresent);
        }
        let mean0: Vec<f64> = means.row(0).to_vec();
        let component = GaussianDensity::new(mean0, cov)?;
        Ok(ClassGaussians { means, component })
    }

    pub fn n_classes(&self) -> usize {
        self.means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn log_det(&self) -> f64 {
        self.component.log_det
    }

    /// `ln max_i N(z; mu_i, Sigma)`.
    pub fn log_max_density(&self, z: &[f64]) -> f64 {
        let d = self.dim();
        let mut shifted = vec![0.0f64; d];
        let mut best = f64::NEG_INFINITY;
        for c in 0..self.n_classes() {
            for j in 0..d {
                shifted[j] = z[j] - self.means[[c, j]] + self.component.mean[j];
            }
            let lp = self.component.log_pdf(&shifted);
            if lp > best {
                best = lp;
            }
        }
        best
    }

    pub fn sample_class(&self, rng: &mut ChaCha8Rng, class: usize) -> Vec<f64> {
        let d = self.dim();
        let mut z = self.component.sample(rng);
        for j in 0..d {
            z[j] = z[j] - self.component.mean[j] + self.means[[class, j]];
        }
        z
    }

    pub fn sample_uniform_class(&self, rng: &mut ChaCha8Rng) -> (usize, Vec<f64>) {
        let class = rng.random_range(0..self.n_classes());
        (class, self.sample_class(rng, class))
    }
}

/// Serializable density description used in synthetic spec files.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum DensityModel {
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    Mixture {
        weights: Vec<f64>,
        components: Vec<GaussianComponent>,
    },
    /// Max-over-class Gaussian envelope with a shared covariance.
    ClassGaussianMax {
        means: Vec<Vec<f64>>,
        cov: Vec<Vec<f64>>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let r = rows.len();
    if r == 0 {
        return Err(Error::InvalidParameter("empty matrix".into()));
    }
    let c = rows[0].len();
    let mut m = Array2::<f64>::zeros((r, c));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != c {
            return Err(Error::Dimension(format!(
                "ragged matrix: row {i} has {} entries, expected {c}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    Ok(m)
}

/// A compiled, evaluable density.
#[derive(Clone, Debug)]
pub enum Density {
    Gaussian(GaussianDensity),
    Mixture {
        log_weights: Vec<f64>,
        cumulative: Vec<f64>,
        components: Vec<GaussianDensity>,
    },
    ClassMax(ClassGaussians),
}

impl Density {
    pub fn compile(model: &DensityModel) -> Result<Density> {
        match model {
            DensityModel::Gaussian { mean, cov } => Ok(Density::Gaussian(GaussianDensity::new(
                mean.clone(),
                matrix_from_rows(cov)?,
            )?)),
            DensityModel::Mixture { weights, components } => {
                if weights.len() != components.len() || weights.is_empty() {
                    return Err(Error::InvalidParameter(
                        "mixture needs matching, nonempty weights and components".into(),
                    ));
                }
                if weights.iter().any(|&w| w <= 0.0 || w.is_nan()) {
                    return Err(Error::InvalidParameter(
                        "mixture weights must be positive".into(),
                    ));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(format!(
                        "mixture weights sum to {total}, expected 1"
                    )));
                }
                let mut cumulative = Vec::with_capacity(weights.len());
                let mut acc = 0.0;
                for &w in weights {
                    acc += w;
                    cumulative.push(acc);
                }
                let compiled: Result<Vec<GaussianDensity>> = components
                    .iter()
                    .map(|c| GaussianDensity::new(c.mean.clone(), matrix_from_rows(&c.cov)?))
                    .collect();
                Ok(Density::Mixture {
                    log_weights: weights.iter().map(|w| w.ln()).collect(),
                    cumulative,
                    components: compiled?,
                })
            }
            DensityModel::ClassGaussianMax { means, cov } => Ok(Density::ClassMax(
                ClassGaussians::new(matrix_from_rows(means)?, matrix_from_rows(cov)?)?,
            )),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Density::Gaussian(g) => g.dim(),
            Density::Mixture { components, .. } => components[0].dim(),
            Density::ClassMax(c) => c.dim(),
        }
    }

    /// Log-density at `z` (for `ClassMax`, the unnormalized envelope).
    pub fn log_density(&self, z: &[f64]) -> f64 {
        match self {
            Density::Gaussian(g) => g.log_pdf(z),
            Density::Mixture {
                log_weights,
                components,
                ..
            } => {
                let terms: Vec<f64> = components
                    .iter()
                    .zip(log_weights)
                    .map(|(c, lw)| lw + c.log_pdf(z))
                    .collect();
                log_sum_exp(&terms)
            }
            Density::ClassMax(c) => c.log_max_density(z),
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            Density::Gaussian(g) => g.sample(rng),
            Density::Mixture {
                cumulative,
                components,
                ..
            } => {
                let u: f64 = rng.random();
                let mut pick = components.len() - 1;
                for (i, &c) in cumulative.iter().enumerate() {
                    if u < c {
                        pick = i;
                        break;
                    }
                }
                components[pick].sample(rng)
            }
            Density::ClassMax(c) => c.sample_uniform_class(rng).1,
        }
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Generator description: densities, prior, sample count, and seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub n: usize,
    pub seed: u64,
    /// Probability that a sample comes from the correct-prediction density.
    /// `(0, 1]`; 1 degenerates to drawing everything from it.
    pub prior_correct: f64,
    pub correct_density: DensityModel,
    pub wrong_density: DensityModel,
}

impl SyntheticSpec {
    pub fn load(path: &Path) -> Result<SyntheticSpec> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format("spec", path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format("spec", path, e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Closed-form evaluators for both conditional densities.
#[derive(Clone, Debug)]
pub struct LikelihoodOracle {
    pub correct: Density,
    pub wrong: Density,
    pub prior_correct: f64,
}

impl LikelihoodOracle {
    pub fn log_pc(&self, z: &[f64]) -> f64 {
        self.correct.log_density(z)
    }

    pub fn log_pw(&self, z: &[f64]) -> f64 {
        self.wrong.log_density(z)
    }

    /// Exact `log p_c(z) - log p_w(z)`.
    pub fn log_lr(&self, z: &[f64]) -> f64 {
        self.log_pc(z) - self.log_pw(z)
    }

    /// Calibrated binary logits `(ln q, ln(1-q))` where `q` is the posterior
    /// probability of correctness, computed in log space.
    pub fn posterior_logits(&self, z: &[f64]) -> (f64, f64) {
        let a = self.prior_correct.ln() + self.log_pc(z);
        let b = (1.0 - self.prior_correct).ln() + self.log_pw(z);
        let lse = log_sum_exp(&[a, b]);
        let la = a - lse;
        let lb = b - lse;
        // A degenerate prior (pi = 1) sends the second logit to -inf; pin it
        // to a large finite value so the logit matrix stays valid.
        (clamp_logit(la), clamp_logit(lb))
    }

    /// Exact log-LR per feature row (rows are the stored f32 values).
    pub fn log_lr_scores(&self, features: &Array2<f32>) -> ScoreVector {
        let values: Vec<f64> = (0..features.nrows())
            .map(|i| {
                let z: Vec<f64> = features.row(i).iter().map(|&v| v as f64).collect();
                self.log_lr(&z)
            })
            .collect();
        ScoreVector::new(values, ScoreMethod::LogLikelihoodRatio, ScoreParams::default())
            .expect("oracle log-LR is finite on generated samples")
    }

    /// Posterior log-odds per feature row; an affine shift of the log-LR.
    pub fn posterior_odds_scores(&self, features: &Array2<f32>) -> ScoreVector {
        let values: Vec<f64> = (0..features.nrows())
            .map(|i| {
                let z: Vec<f64> = features.row(i).iter().map(|&v| v as f64).collect();
                let (la, lb) = self.posterior_logits(&z);
                la - lb
            })
            .collect();
        ScoreVector::new(values, ScoreMethod::PosteriorOdds, ScoreParams::default())
            .expect("posterior odds are finite")
    }
}

fn clamp_logit(v: f64) -> f64 {
    v.max(-700.0)
}

/// A generated dataset plus its ground-truth hypothesis labels and oracle.
#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub dataset: Dataset,
    /// `true` marks H0: the sample came from the correct-prediction density.
    pub correct: Vec<bool>,
    pub oracle: LikelihoodOracle,
}

/// Draw a dataset from the spec. Deterministic given the seed: one ChaCha8
/// stream drives the per-sample source coin and the density draws in order.
///
/// Labels encode the hypothesis (0 = correct source, 1 = wrong source) and
/// predictions are fixed to class 0, so prediction correctness coincides
/// with H0. Logits are the calibrated posterior pair evaluated at the
/// stored (f32-rounded) features.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if !(spec.prior_correct > 0.0 && spec.prior_correct <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "prior_correct {} must lie in (0, 1]",
            spec.prior_correct
        )));
    }
    if spec.n < 1 {
        return Err(Error::InsufficientSamples {
            what: "synthetic draw",
            required: 1,
            actual: 0,
        });
    }
    let correct = Density::compile(&spec.correct_density)?;
    let wrong = Density::compile(&spec.wrong_density)?;
    if correct.dim() != spec.dim || wrong.dim() != spec.dim {
        return Err(Error::Dimension(format!(
            "densities have dims {} and {}, spec says {}",
            correct.dim(),
            wrong.dim(),
            spec.dim
        )));
    }
    let oracle = LikelihoodOracle {
        correct,
        wrong,
        prior_correct: spec.prior_correct,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let d = spec.dim;
    let mut features = Array2::<f32>::zeros((n, d));
    let mut logits = Array2::<f32>::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    let mut is_correct = Vec::with_capacity(n);
    for i in 0..n {
        let u: f64 = rng.random();
        let from_correct = u < spec.prior_correct;
        let z = if from_correct {
            oracle.correct.sample(&mut rng)
        } else {
            oracle.wrong.sample(&mut rng)
        };
        for j in 0..d {
            features[[i, j]] = z[j] as f32;
        }
        // Evaluate the posterior at the f32-rounded point actually stored,
        // so logits and any oracle score computed later see the same input.
        let z32: Vec<f64> = (0..d).map(|j| features[[i, j]] as f64).collect();
        let (la, lb) = oracle.posterior_logits(&z32);
        logits[[i, 0]] = la as f32;
        logits[[i, 1]] = lb as f32;
        labels.push(if from_correct { 0 } else { 1 });
        is_correct.push(from_correct);
    }
    let predictions = vec![0usize; n];
    let dataset = Dataset::new(
        format!("synth-seed{}", spec.seed),
        features,
        logits,
        labels,
        Some(predictions),
    )?;
    Ok(SyntheticData {
        dataset,
        correct: is_correct,
        oracle,
    })
}

/// Closed-form unit-ball volume in `d` dimensions, via the recurrence
/// `V_d = V_{d-2} * 2 pi / d` with `V_0 = 1`, `V_1 = 2`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64,
    }
}

/// Nonparametric density estimate `k / (n * V_d * r_k^d)` from the k-th
/// neighbor distance in an index of `n` points. Requires `k >= 2`; a zero
/// k-th distance (fully duplicated neighborhood) is an error.
pub fn knn_density_estimate(
    index: &NeighborIndex,
    z: &[f32],
    k: usize,
    n: usize,
    dim: usize,
) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "knn density estimation needs k >= 2, got {k}"
        )));
    }
    if n < 1 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let q = index.prepare_query(z)?;
    let r_k = index.kth_distance(&q, k)?;
    if r_k == 0.0 {
        return Err(Error::DegenerateScale {
            what: "k-th neighbor distance",
        });
    }
    Ok(k as f64 / (n as f64 * unit_ball_volume(dim) * r_k.powi(dim as i32)))
}
