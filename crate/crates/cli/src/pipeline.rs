//! The scoring engine behind `score` and `sweep`: resolves score names,
//! fits (or loads cached) train-side artifacts, and produces one column per
//! requested score with its hyperparameter record.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Result};
use ndarray::Array2;
use serde_json::{json, Value};

use selectorlab::combine::{combination_parents, combine, fit_lambda_balance};
use selectorlab::dataset::{split_by_correctness, Dataset};
use selectorlab::gaussian::{
    delta_mds_scores, fit_delta_mds, mds_scores, DeltaMdsFit, GaussianStats,
};
use selectorlab::logit::{energy, max_logit, msp, rlog, top2_concentration};
use selectorlab::neighbors::{delta_knn_scores, knn_scores, NeighborIndex};
use selectorlab::score::{ScoreMethod, ScoreParams, ScoreVector};
use selectorlab::sirc::{feature_l1_scores, fit_sirc_params, sirc};
use selectorlab::verify::quantiles;

use crate::profiles::{default_k, Profile};

pub const BASE_SCORES: &[&str] = &[
    "msp",
    "max-logit",
    "energy",
    "rlog",
    "mds",
    "knn",
    "delta-mds",
    "delta-knn",
    "sirc",
];

/// Which feature families get L2-normalized before scoring.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormalizeScope {
    /// Default: neighbor-based scores normalized, Mahalanobis raw.
    Knn,
    Mds,
    Both,
    None,
}

impl NormalizeScope {
    pub fn parse(arg: &str) -> Result<Self> {
        match arg {
            "knn" => Ok(NormalizeScope::Knn),
            "mds" => Ok(NormalizeScope::Mds),
            "both" => Ok(NormalizeScope::Both),
            "none" => Ok(NormalizeScope::None),
            other => bail!("--normalize must be knn|mds|both|none, got `{other}`"),
        }
    }

    fn knn(self) -> bool {
        matches!(self, NormalizeScope::Knn | NormalizeScope::Both)
    }

    fn mds(self) -> bool {
        matches!(self, NormalizeScope::Mds | NormalizeScope::Both)
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub k_override: Option<usize>,
    /// `None` resolves through the profile and then magnitude balancing.
    pub lambda_override: Option<f64>,
    pub lambda_auto: bool,
    pub temperature: f64,
    pub normalize: NormalizeScope,
    pub shrinkage: f64,
    pub averaged: bool,
    pub profile: Option<Profile>,
    pub cache_dir: Option<PathBuf>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            k_override: None,
            lambda_override: None,
            lambda_auto: false,
            temperature: 1.0,
            normalize: NormalizeScope::Knn,
            shrinkage: selectorlab::gaussian::DEFAULT_SHRINKAGE_EPS,
            averaged: true,
            profile: None,
            cache_dir: None,
        }
    }
}

pub struct Pipeline<'a> {
    train: &'a Dataset,
    test: &'a Dataset,
    opts: PipelineOptions,
    test_columns: BTreeMap<String, Vec<f64>>,
    train_columns: BTreeMap<String, Vec<f64>>,
    column_meta: BTreeMap<String, Value>,
    delta_mds_fit: Option<DeltaMdsFit>,
    mds_stats: Option<GaussianStats>,
    knn_partition_indexes: Option<(NeighborIndex, NeighborIndex)>,
    knn_full_index: Option<NeighborIndex>,
    mds_train_features: Option<Array2<f32>>,
    mds_test_features: Option<Array2<f32>>,
}

impl<'a> Pipeline<'a> {
    pub fn new(train: &'a Dataset, test: &'a Dataset, opts: PipelineOptions) -> Result<Self> {
        if train.dim() != test.dim() {
            bail!(
                "train and test disagree on d: {} vs {}",
                train.dim(),
                test.dim()
            );
        }
        if train.n_classes() != test.n_classes() {
            bail!(
                "train and test disagree on K: {} vs {}",
                train.n_classes(),
                test.n_classes()
            );
        }
        Ok(Pipeline {
            train,
            test,
            opts,
            test_columns: BTreeMap::new(),
            train_columns: BTreeMap::new(),
            column_meta: BTreeMap::new(),
            delta_mds_fit: None,
            mds_stats: None,
            knn_partition_indexes: None,
            knn_full_index: None,
            mds_train_features: None,
            mds_test_features: None,
        })
    }

    /// Compute (or return memoized) test-split scores for one name.
    pub fn test_scores(&mut self, name: &str) -> Result<Vec<f64>> {
        if let Some(values) = self.test_columns.get(name) {
            return Ok(values.clone());
        }
        let (values, meta) = self.compute(name, Split::Test)?;
        self.test_columns.insert(name.to_string(), values.clone());
        self.column_meta.insert(name.to_string(), meta);
        Ok(values)
    }

    /// Hyperparameter record for a computed column.
    pub fn meta(&self, name: &str) -> Option<&Value> {
        self.column_meta.get(name)
    }

    /// Diagnostic quantiles of the top-two softmax tail-mass ratio on the
    /// test split.
    pub fn concentration_diagnostic(&self) -> Value {
        let ratios = top2_concentration(self.test);
        let qs = quantiles(&ratios, &[0.5, 0.9, 0.99]);
        json!({ "p50": qs[0], "p90": qs[1], "p99": qs[2] })
    }

    fn train_scores(&mut self, name: &str) -> Result<Vec<f64>> {
        if let Some(values) = self.train_columns.get(name) {
            return Ok(values.clone());
        }
        let (values, _) = self.compute(name, Split::Train)?;
        self.train_columns.insert(name.to_string(), values.clone());
        Ok(values)
    }

    fn compute(&mut self, name: &str, split: Split) -> Result<(Vec<f64>, Value)> {
        if let Some((first, second)) = combination_parents(name) {
            return self.compute_combination(name, first, second, split);
        }
        let ds = match split {
            Split::Train => self.train,
            Split::Test => self.test,
        };
        let sv: ScoreVector = match name {
            "msp" => msp(ds),
            "max-logit" => max_logit(ds),
            "energy" => energy(ds, self.opts.temperature)?,
            "rlog" => rlog(ds),
            "mds" => {
                let stats = self.mds_stats()?.clone();
                let features = self.mds_features(split)?;
                mds_scores(&stats, &features)?
            }
            "knn" => {
                let k = self.k_for("knn");
                let index = self.knn_full_index()?.clone();
                knn_scores(&index, &self.raw_features(split), k)?
            }
            "delta-mds" => {
                let fit = self.delta_mds_fit()?.clone();
                let features = self.mds_features(split)?;
                delta_mds_scores(&fit, &features)?
            }
            "delta-knn" => {
                let k = self.k_for("delta-knn");
                let averaged = self.opts.averaged;
                let (index_c, index_w) = self.knn_partition_indexes()?;
                let (index_c, index_w) = (index_c.clone(), index_w.clone());
                delta_knn_scores(&index_c, &index_w, &self.raw_features(split), k, averaged)?
            }
            "sirc" => {
                let s1 = msp(ds);
                let s2 = feature_l1_scores(ds);
                let calibration = feature_l1_scores(self.train);
                let params = fit_sirc_params(&calibration.values, 1.0)?;
                let mut scored = sirc(&s1, &s2, params)?;
                scored.params = ScoreParams::default();
                scored
            }
            other => {
                return Err(anyhow!(selectorlab::Error::UnknownScore(other.to_string())))
            }
        };
        let meta = params_json(name, &sv);
        Ok((sv.values, meta))
    }

    fn compute_combination(
        &mut self,
        name: &str,
        first: &str,
        second: &str,
        split: Split,
    ) -> Result<(Vec<f64>, Value)> {
        let (lambda, source) = self.resolve_lambda(name, first, second)?;
        let first_values = match split {
            Split::Test => self.test_scores(first)?,
            Split::Train => self.train_scores(first)?,
        };
        let second_values = match split {
            Split::Test => self.test_scores(second)?,
            Split::Train => self.train_scores(second)?,
        };
        let s1 = ScoreVector::new(
            first_values,
            ScoreMethod::Custom("first"),
            ScoreParams::default(),
        )
        .map_err(|e| anyhow!(e))?;
        let s2 = ScoreVector::new(
            second_values,
            ScoreMethod::Custom("second"),
            ScoreParams::default(),
        )
        .map_err(|e| anyhow!(e))?;
        let t = combine(&s1, &s2, lambda)?;
        let meta = json!({
            "first": first,
            "second": second,
            "lambda": lambda,
            "lambda_source": source,
        });
        Ok((t.values, meta))
    }

    /// Lambda resolution order: explicit flag, then profile preset, then
    /// magnitude balancing on the training split.
    fn resolve_lambda(&mut self, name: &str, first: &str, second: &str) -> Result<(f64, &'static str)> {
        if let Some(lambda) = self.opts.lambda_override {
            return Ok((lambda, "flag"));
        }
        if !self.opts.lambda_auto {
            if let Some(profile) = &self.opts.profile {
                if let Some(&lambda) = profile.lambda.get(name) {
                    return Ok((lambda, "profile"));
                }
            }
        }
        let s1 = self.train_scores(first)?;
        let s2 = self.train_scores(second)?;
        let fit = fit_lambda_balance(&s1, &s2)?;
        Ok((fit.lambda, "auto"))
    }

    fn k_for(&self, score: &str) -> usize {
        if let Some(k) = self.opts.k_override {
            return k;
        }
        if let Some(profile) = &self.opts.profile {
            if let Some(&k) = profile.k.get(score) {
                return k;
            }
        }
        default_k(score)
    }

    fn raw_features(&self, split: Split) -> Array2<f32> {
        match split {
            Split::Train => self.train.features.clone(),
            Split::Test => self.test.features.clone(),
        }
    }

    /// Features fed to the Mahalanobis family, normalized when requested.
    fn mds_features(&mut self, split: Split) -> Result<Array2<f32>> {
        if !self.opts.normalize.mds() {
            return Ok(self.raw_features(split));
        }
        let slot = match split {
            Split::Train => &mut self.mds_train_features,
            Split::Test => &mut self.mds_test_features,
        };
        if slot.is_none() {
            let source = match split {
                Split::Train => &self.train.features,
                Split::Test => &self.test.features,
            };
            *slot = Some(l2_normalize_rows(source)?);
        }
        Ok(slot.as_ref().unwrap().clone())
    }

    fn mds_train_dataset(&mut self) -> Result<Dataset> {
        let mut ds = self.train.clone();
        ds.features = self.mds_features(Split::Train)?;
        Ok(ds)
    }

    fn mds_stats(&mut self) -> Result<&GaussianStats> {
        if self.mds_stats.is_none() {
            let eps = self.opts.shrinkage;
            let tag = self.cache_tag("mds");
            let cached = self.load_cached_stats(&[&tag]);
            let stats = match cached {
                Some(mut loaded) => loaded.pop().unwrap(),
                None => {
                    let train = self.mds_train_dataset()?;
                    let stats = GaussianStats::fit(
                        train.features.view(),
                        &train.labels,
                        train.n_classes(),
                        eps,
                    )?;
                    self.store_cached_stats(&[(&tag, &stats)]);
                    stats
                }
            };
            self.mds_stats = Some(stats);
        }
        Ok(self.mds_stats.as_ref().unwrap())
    }

    fn delta_mds_fit(&mut self) -> Result<&DeltaMdsFit> {
        if self.delta_mds_fit.is_none() {
            let eps = self.opts.shrinkage;
            let tag_c = self.cache_tag("dmds-correct");
            let tag_w = self.cache_tag("dmds-wrong");
            let cached = self.load_cached_stats(&[&tag_c, &tag_w]);
            let fit = match cached {
                Some(mut loaded) => {
                    let wrong = loaded.pop().unwrap();
                    let correct = loaded.pop().unwrap();
                    DeltaMdsFit { correct, wrong }
                }
                None => {
                    let train = self.mds_train_dataset()?;
                    let fit = fit_delta_mds(&train, eps)?;
                    self.store_cached_stats(&[(&tag_c, &fit.correct), (&tag_w, &fit.wrong)]);
                    fit
                }
            };
            self.delta_mds_fit = Some(fit);
        }
        Ok(self.delta_mds_fit.as_ref().unwrap())
    }

    fn knn_full_index(&mut self) -> Result<&NeighborIndex> {
        if self.knn_full_index.is_none() {
            let normalize = self.opts.normalize.knn();
            let tag = self.cache_tag("knn-all");
            let index = match self.load_cached_index(&tag) {
                Some(index) => index,
                None => {
                    let index = NeighborIndex::build(&self.train.features, normalize)?;
                    self.store_cached_index(&tag, &index);
                    index
                }
            };
            self.knn_full_index = Some(index);
        }
        Ok(self.knn_full_index.as_ref().unwrap())
    }

    fn knn_partition_indexes(&mut self) -> Result<&(NeighborIndex, NeighborIndex)> {
        if self.knn_partition_indexes.is_none() {
            let normalize = self.opts.normalize.knn();
            let tag_c = self.cache_tag("dknn-correct");
            let tag_w = self.cache_tag("dknn-wrong");
            let pair = match (self.load_cached_index(&tag_c), self.load_cached_index(&tag_w)) {
                (Some(c), Some(w)) => (c, w),
                _ => {
                    let (correct, wrong, mask) = split_by_correctness(self.train);
                    if mask.n_wrong == 0 {
                        return Err(anyhow!(selectorlab::Error::EmptyWrongPartition));
                    }
                    let index_c = NeighborIndex::build(&correct, normalize)?;
                    let index_w = NeighborIndex::build(&wrong, normalize)?;
                    self.store_cached_index(&tag_c, &index_c);
                    self.store_cached_index(&tag_w, &index_w);
                    (index_c, index_w)
                }
            };
            self.knn_partition_indexes = Some(pair);
        }
        Ok(self.knn_partition_indexes.as_ref().unwrap())
    }

    /// Cache key: train identity plus every option that affects the fit.
    fn cache_tag(&self, family: &str) -> String {
        let norm = match self.opts.normalize {
            NormalizeScope::Knn => "knn",
            NormalizeScope::Mds => "mds",
            NormalizeScope::Both => "both",
            NormalizeScope::None => "none",
        };
        sanitize(&format!(
            "{}-n{}-{}-eps{:e}-norm{}",
            self.train.name,
            self.train.len(),
            family,
            self.opts.shrinkage,
            norm
        ))
    }

    fn load_cached_stats(&self, tags: &[&str]) -> Option<Vec<GaussianStats>> {
        let dir = self.opts.cache_dir.as_ref()?;
        let mut out = Vec::with_capacity(tags.len());
        for tag in tags {
            let path = dir.join(format!("{tag}.sst"));
            if !path.exists() {
                return None;
            }
            out.push(GaussianStats::load(&path).ok()?);
        }
        Some(out)
    }

    fn store_cached_stats(&self, entries: &[(&str, &GaussianStats)]) {
        if let Some(dir) = &self.opts.cache_dir {
            if std::fs::create_dir_all(dir).is_ok() {
                for (tag, stats) in entries {
                    let _ = stats.save(&dir.join(format!("{tag}.sst")));
                }
            }
        }
    }

    fn load_cached_index(&self, tag: &str) -> Option<NeighborIndex> {
        let dir = self.opts.cache_dir.as_ref()?;
        let path = dir.join(format!("{tag}.snn"));
        if !path.exists() {
            return None;
        }
        NeighborIndex::load(&path).ok()
    }

    fn store_cached_index(&self, tag: &str, index: &NeighborIndex) {
        if let Some(dir) = &self.opts.cache_dir {
            if std::fs::create_dir_all(dir).is_ok() {
                let _ = index.save(&dir.join(format!("{tag}.snn")));
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Split {
    Train,
    Test,
}

fn params_json(name: &str, sv: &ScoreVector) -> Value {
    let mut map = serde_json::Map::new();
    map.insert("score".into(), json!(name));
    if let Some(t) = sv.params.temperature {
        map.insert("temperature".into(), json!(t));
    }
    if let Some(k) = sv.params.k {
        map.insert("k".into(), json!(k));
    }
    if let Some(l) = sv.params.lambda {
        map.insert("lambda".into(), json!(l));
    }
    if let Some(n) = sv.params.normalized {
        map.insert("normalized".into(), json!(n));
    }
    if let Some(s) = sv.params.shrinkage {
        map.insert("shrinkage_applied".into(), json!(s));
    }
    if let Some(a) = sv.params.averaged {
        map.insert("averaged".into(), json!(a));
    }
    Value::Object(map)
}

/// L2-normalize each feature row; zero rows cannot be normalized.
pub fn l2_normalize_rows(features: &Array2<f32>) -> Result<Array2<f32>> {
    let mut out = features.clone();
    for (row, mut r) in out.rows_mut().into_iter().enumerate() {
        let norm: f64 = r.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        if norm == 0.0 {
            bail!(selectorlab::Error::ZeroNorm { row });
        }
        for v in r.iter_mut() {
            *v = (*v as f64 / norm) as f32;
        }
    }
    Ok(out)
}

fn sanitize(tag: &str) -> String {
    tag.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

/// Validate and split a `--scores` argument.
pub fn parse_score_list(arg: &str) -> Result<Vec<String>> {
    let names: Vec<String> = arg
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if names.is_empty() {
        bail!("--scores must name at least one score");
    }
    for name in &names {
        let known = BASE_SCORES.contains(&name.as_str()) || combination_parents(name).is_some();
        if !known {
            bail!(selectorlab::Error::UnknownScore(name.clone()));
        }
    }
    Ok(names)
}
