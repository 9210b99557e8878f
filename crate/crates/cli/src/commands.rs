//! Subcommand implementations. Every command is deterministic given its
//! inputs, config, and seed; primary outputs are written atomically and
//! carry no timestamps, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde_json::{json, Value};

use selectorlab::dataset::{subsample_labeled, Dataset};
use selectorlab::eval::{self, ReportSummary, RiskCoveragePoint};
use selectorlab::io::{self, Manifest, ScoreBundle};
use selectorlab::synth::{generate, SyntheticSpec};
use selectorlab::verify::{verify_theorem, TheoremId, TheoremReport, VerifyOptions};

use crate::out::{ensure_dir, write_atomic, write_atomic_with};
use crate::pipeline::{parse_score_list, NormalizeScope, Pipeline, PipelineOptions};
use crate::profiles::load_profile;

fn load_manifest(path: &Option<PathBuf>) -> Result<Option<(Manifest, PathBuf)>> {
    match path {
        None => Ok(None),
        Some(p) => {
            let manifest = Manifest::load(p)?;
            let base = p
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."));
            Ok(Some((manifest, base)))
        }
    }
}

fn resolve(arg: &str, manifest: &Option<(Manifest, PathBuf)>) -> Result<Dataset> {
    let pair = manifest.as_ref().map(|(m, b)| (m, b.as_path()));
    io::resolve_dataset(arg, pair).with_context(|| format!("resolving dataset `{arg}`"))
}

fn parse_lambda_arg(arg: &Option<String>) -> Result<(Option<f64>, bool)> {
    match arg.as_deref() {
        None => Ok((None, false)),
        Some("auto") => Ok((None, true)),
        Some(text) => {
            let v: f64 = text
                .parse()
                .map_err(|_| anyhow!("--lambda must be a number or `auto`, got `{text}`"))?;
            if !v.is_finite() {
                bail!("--lambda must be finite");
            }
            Ok((Some(v), false))
        }
    }
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Training (fitting) split: a manifest name or a dataset path.
    #[arg(long)]
    pub train: String,
    /// Evaluation split: a manifest name or a dataset path.
    #[arg(long)]
    pub test: String,
    /// Dataset manifest for resolving names.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Comma-separated score names (e.g. msp,rlog,delta-knn-rlog).
    #[arg(long)]
    pub scores: String,
    /// Neighbor count override for the KNN family.
    #[arg(long)]
    pub k: Option<usize>,
    /// Combination weight: a number or `auto` (magnitude balancing on the
    /// training split). Defaults to the profile preset, then `auto`.
    #[arg(long)]
    pub lambda: Option<String>,
    /// Temperature for the energy score.
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Feature normalization scope: knn|mds|both|none.
    #[arg(long, default_value = "knn")]
    pub normalize: String,
    /// Shrinkage coefficient for covariance fits.
    #[arg(long, default_value_t = selectorlab::gaussian::DEFAULT_SHRINKAGE_EPS)]
    pub shrinkage: f64,
    /// Use the plain k-th distance instead of the averaged log-distance in
    /// delta-knn.
    #[arg(long, default_value_t = false)]
    pub no_average: bool,
    /// Hyperparameter profile: vision-clip, vision-supervised, or a path.
    #[arg(long)]
    pub profile: Option<String>,
    /// Subsample this labeled fraction of the training split before fitting.
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_score(args: ScoreArgs) -> Result<i32> {
    let manifest = load_manifest(&args.manifest)?;
    let mut train = resolve(&args.train, &manifest)?;
    let test = resolve(&args.test, &manifest)?;
    if let Some(fraction) = args.fraction {
        train = subsample_labeled(&train, fraction, args.seed)?;
    }
    let names = parse_score_list(&args.scores)?;
    let (lambda_override, lambda_auto) = parse_lambda_arg(&args.lambda)?;
    let profile = args.profile.as_deref().map(load_profile).transpose()?;

    ensure_dir(&args.out)?;
    let opts = PipelineOptions {
        k_override: args.k,
        lambda_override,
        lambda_auto,
        temperature: args.temperature,
        normalize: NormalizeScope::parse(&args.normalize)?,
        shrinkage: args.shrinkage,
        averaged: !args.no_average,
        profile: profile.clone(),
        cache_dir: Some(args.out.join("cache")),
    };
    let mut pipeline = Pipeline::new(&train, &test, opts)?;

    let mut bundle = ScoreBundle::default();
    let mut score_meta = BTreeMap::<String, Value>::new();
    let mut any_logit_score = false;
    for name in &names {
        let values = pipeline
            .test_scores(name)
            .with_context(|| format!("computing score `{name}`"))?;
        bundle.push(name.clone(), values)?;
        if let Some(meta) = pipeline.meta(name) {
            score_meta.insert(name.clone(), meta.clone());
        }
        if matches!(name.as_str(), "msp" | "max-logit" | "energy" | "rlog") {
            any_logit_score = true;
        }
    }

    let bundle_path = args.out.join("scores.scb");
    write_atomic_with(&bundle_path, |tmp| Ok(bundle.save(tmp)?))?;
    let csv_dir = args.out.join("scores");
    ensure_dir(&csv_dir)?;
    for (name, values) in &bundle.columns {
        let path = csv_dir.join(format!("{name}.csv"));
        write_atomic_with(&path, |tmp| Ok(io::save_scores_csv(values, tmp)?))?;
    }

    let mut meta = serde_json::Map::new();
    meta.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    meta.insert("seed".into(), json!(args.seed));
    meta.insert("train".into(), json!(train.name));
    meta.insert("train_n".into(), json!(train.len()));
    meta.insert("test".into(), json!(test.name));
    meta.insert("test_n".into(), json!(test.len()));
    meta.insert("fraction".into(), json!(args.fraction));
    meta.insert(
        "profile".into(),
        json!(profile.as_ref().map(|p| p.name.clone())),
    );
    meta.insert("scores".into(), json!(score_meta));
    if any_logit_score {
        meta.insert(
            "top2_tail_mass_over_second".into(),
            pipeline.concentration_diagnostic(),
        );
    }
    let meta_text = serde_json::to_string_pretty(&Value::Object(meta))? + "\n";
    write_atomic(&args.out.join("score_meta.json"), meta_text.as_bytes())?;

    // Mixed test sets carry a per-sample source column; surface it so
    // downstream grouping can key on provenance.
    if let Some(provenance) = &test.provenance {
        let mut text = String::from("index,source\n");
        for (i, src) in provenance.iter().enumerate() {
            text.push_str(&format!("{i},{src}\n"));
        }
        write_atomic(&args.out.join("provenance.csv"), text.as_bytes())?;
    }

    println!(
        "scored {} columns over {} test samples -> {}",
        bundle.columns.len(),
        test.len(),
        bundle_path.display()
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Evaluation split the bundle was scored on.
    #[arg(long)]
    pub test: String,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Score bundle produced by `score`.
    #[arg(long)]
    pub bundle: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also render a combined risk-coverage SVG plot.
    #[arg(long, default_value_t = false)]
    pub svg: bool,
    /// CSV file `index,group` assigning each test sample to a category;
    /// grouped means are reported before the overall mean.
    #[arg(long)]
    pub group_by: Option<PathBuf>,
}

pub fn run_eval(args: EvalArgs) -> Result<i32> {
    let manifest = load_manifest(&args.manifest)?;
    let test = resolve(&args.test, &manifest)?;
    let correctness = test.correctness();
    let bundle = ScoreBundle::load(&args.bundle)?;
    if bundle.is_empty() {
        bail!("score bundle {} has no columns", args.bundle.display());
    }
    if bundle.len() != test.len() {
        bail!(
            "bundle has {} rows but the test split has {}",
            bundle.len(),
            test.len()
        );
    }

    ensure_dir(&args.out)?;
    let curves_dir = args.out.join("curves");
    let reports_dir = args.out.join("reports");
    ensure_dir(&curves_dir)?;
    ensure_dir(&reports_dir)?;

    let mut summaries: Vec<ReportSummary> = Vec::new();
    let mut curves: Vec<(String, Vec<RiskCoveragePoint>)> = Vec::new();
    for (name, values) in &bundle.columns {
        let report = eval::evaluate(values, &correctness.mask)
            .with_context(|| format!("evaluating `{name}`"))?;
        let curve_path = curves_dir.join(format!("{name}.csv"));
        write_atomic_with(&curve_path, |tmp| Ok(eval::save_curve_csv(&report.curve, tmp)?))?;
        let summary = report.summary(name.clone());
        let text = serde_json::to_string_pretty(&summary)? + "\n";
        write_atomic(&reports_dir.join(format!("{name}.json")), text.as_bytes())?;
        summaries.push(summary);
        curves.push((name.clone(), report.curve));
    }

    write_ranking_csv(&args.out.join("ranking.csv"), &mut summaries)?;
    for s in &summaries {
        println!(
            "{}: aurc={:.6} (x100 {:.4}) naurc={}",
            s.method,
            s.aurc,
            s.aurc_x100,
            s.naurc.map_or("undefined".into(), |v| format!("{v:.6}"))
        );
    }

    if args.svg {
        let refs: Vec<(&str, &[RiskCoveragePoint])> = curves
            .iter()
            .map(|(n, c)| (n.as_str(), c.as_slice()))
            .collect();
        let svg = eval::render_svg(&refs);
        write_atomic(&args.out.join("risk_coverage.svg"), svg.as_bytes())?;
    }

    if let Some(map_path) = &args.group_by {
        let groups = load_group_map(map_path, test.len())?;
        let grouped = grouped_table(&bundle, &correctness.mask, &groups)?;
        write_atomic(&args.out.join("grouped.csv"), grouped.as_bytes())?;
    }
    Ok(0)
}

/// Ranking table sorted by NAURC ascending; undefined NAURC sinks to the
/// bottom.
fn write_ranking_csv(path: &Path, summaries: &mut [ReportSummary]) -> Result<()> {
    summaries.sort_by(|a, b| match (a.naurc, b.naurc) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.method.cmp(&b.method),
    });
    let mut text = String::from("method,aurc,aurc_x100,naurc,oracle_aurc,full_risk,ties\n");
    for s in summaries.iter() {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.method,
            s.aurc,
            s.aurc_x100,
            s.naurc.map_or(String::new(), |v| v.to_string()),
            s.oracle_aurc,
            s.full_risk,
            s.ties
        ));
    }
    write_atomic(path, text.as_bytes())
}

fn load_group_map(path: &Path, n: usize) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading group map {}", path.display()))?;
    let mut groups = vec![String::new(); n];
    let mut seen = vec![false; n];
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 && line.trim().eq_ignore_ascii_case("index,group") {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (idx, group) = line
            .split_once(',')
            .ok_or_else(|| anyhow!("group map line {lineno} is not `index,group`"))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| anyhow!("group map line {lineno}: bad index `{idx}`"))?;
        if idx >= n {
            bail!("group map line {lineno}: index {idx} out of range (n={n})");
        }
        groups[idx] = group.trim().to_string();
        seen[idx] = true;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        bail!("group map does not cover sample {missing}");
    }
    Ok(groups)
}

/// Per-group metrics plus a grouped-mean row per score: metrics are averaged
/// within each category first, then across categories.
fn grouped_table(bundle: &ScoreBundle, correctness: &[bool], groups: &[String]) -> Result<String> {
    let mut group_names: Vec<String> = groups.to_vec();
    group_names.sort();
    group_names.dedup();

    let mut text = String::from("method,group,n,aurc,naurc\n");
    for (name, values) in &bundle.columns {
        let mut group_aurcs = Vec::new();
        let mut group_naurcs = Vec::new();
        for group in &group_names {
            let idx: Vec<usize> = (0..groups.len()).filter(|&i| &groups[i] == group).collect();
            let sub_scores: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
            let sub_correct: Vec<bool> = idx.iter().map(|&i| correctness[i]).collect();
            let report = eval::evaluate(&sub_scores, &sub_correct)
                .with_context(|| format!("evaluating `{name}` on group `{group}`"))?;
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                name,
                group,
                idx.len(),
                report.aurc,
                report.naurc.map_or(String::new(), |v| v.to_string())
            ));
            group_aurcs.push(report.aurc);
            if let Some(naurc) = report.naurc {
                group_naurcs.push(naurc);
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        text.push_str(&format!(
            "{},(grouped mean),{},{},{}\n",
            name,
            group_names.len(),
            mean(&group_aurcs),
            if group_naurcs.is_empty() {
                String::new()
            } else {
                mean(&group_naurcs).to_string()
            }
        ));
    }
    Ok(text)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub train: String,
    #[arg(long)]
    pub test: String,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// The single score to sweep.
    #[arg(long)]
    pub score: String,
    /// Comma-separated neighbor counts.
    #[arg(long)]
    pub k: Option<String>,
    /// Comma-separated combination weights (numbers or `auto`).
    #[arg(long)]
    pub lambda: Option<String>,
    /// Comma-separated labeled fractions of the training split.
    #[arg(long)]
    pub fraction: Option<String>,
    #[arg(long, default_value = "knn")]
    pub normalize: String,
    #[arg(long, default_value_t = selectorlab::gaussian::DEFAULT_SHRINKAGE_EPS)]
    pub shrinkage: f64,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_sweep(args: SweepArgs) -> Result<i32> {
    let manifest = load_manifest(&args.manifest)?;
    let train = resolve(&args.train, &manifest)?;
    let test = resolve(&args.test, &manifest)?;
    parse_score_list(&args.score)?;
    let profile = args.profile.as_deref().map(load_profile).transpose()?;
    let normalize = NormalizeScope::parse(&args.normalize)?;

    let k_grid: Vec<Option<usize>> = match &args.k {
        None => vec![None],
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map(Some)
                    .map_err(|_| anyhow!("bad k value `{s}`"))
            })
            .collect::<Result<_>>()?,
    };
    let lambda_grid: Vec<Option<String>> = match &args.lambda {
        None => vec![None],
        Some(list) => list.split(',').map(|s| Some(s.trim().to_string())).collect(),
    };
    let fraction_grid: Vec<Option<f64>> = match &args.fraction {
        None => vec![None],
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| anyhow!("bad fraction value `{s}`"))
            })
            .collect::<Result<_>>()?,
    };
    if args.k.is_none() && args.lambda.is_none() && args.fraction.is_none() {
        bail!("sweep needs at least one grid: --k, --lambda, or --fraction");
    }

    let correctness = test.correctness();
    struct Row {
        fraction: Option<f64>,
        k: Option<usize>,
        lambda: Option<String>,
        lambda_used: Option<f64>,
        aurc: Option<f64>,
        naurc: Option<f64>,
        note: String,
    }
    let mut rows: Vec<Row> = Vec::new();

    for &fraction in &fraction_grid {
        let train_split = match fraction {
            None => train.clone(),
            Some(f) => subsample_labeled(&train, f, args.seed)?,
        };
        for &k in &k_grid {
            for lambda in &lambda_grid {
                let (lambda_override, lambda_auto) = parse_lambda_arg(lambda)?;
                let opts = PipelineOptions {
                    k_override: k,
                    lambda_override,
                    lambda_auto,
                    temperature: args.temperature,
                    normalize,
                    shrinkage: args.shrinkage,
                    averaged: true,
                    profile: profile.clone(),
                    cache_dir: None,
                };
                let mut row = Row {
                    fraction,
                    k,
                    lambda: lambda.clone(),
                    lambda_used: None,
                    aurc: None,
                    naurc: None,
                    note: String::new(),
                };
                let outcome = Pipeline::new(&train_split, &test, opts)
                    .and_then(|mut p| {
                        let values = p.test_scores(&args.score)?;
                        let used = p
                            .meta(&args.score)
                            .and_then(|m| m.get("lambda"))
                            .and_then(Value::as_f64);
                        Ok((values, used))
                    })
                    .and_then(|(values, used)| {
                        let report = eval::evaluate(&values, &correctness.mask)?;
                        Ok((report, used))
                    });
                match outcome {
                    Ok((report, used)) => {
                        row.aurc = Some(report.aurc);
                        row.naurc = report.naurc;
                        row.lambda_used = used;
                    }
                    Err(err) => {
                        if is_not_applicable(&err) {
                            row.note = format!("not applicable: {err}");
                        } else {
                            return Err(err);
                        }
                    }
                }
                rows.push(row);
            }
        }
    }

    let best = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.naurc.map(|v| (i, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);

    let mut text = String::from("score,fraction,k,lambda,lambda_used,aurc,naurc,best,note\n");
    for (i, row) in rows.iter().enumerate() {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            args.score,
            row.fraction.map_or(String::new(), |v| v.to_string()),
            row.k.map_or(String::new(), |v| v.to_string()),
            row.lambda.clone().unwrap_or_default(),
            row.lambda_used.map_or(String::new(), |v| v.to_string()),
            row.aurc.map_or(String::new(), |v| v.to_string()),
            row.naurc.map_or(String::new(), |v| v.to_string()),
            if Some(i) == best { "*" } else { "" },
            row.note
        ));
    }
    ensure_dir(&args.out)?;
    write_atomic(&args.out.join("sweep.csv"), text.as_bytes())?;
    print!("{text}");
    Ok(0)
}

/// Sweep cells where a score is undefined (the ablation regimes) are
/// reported as empty rather than aborting the sweep.
fn is_not_applicable(err: &anyhow::Error) -> bool {
    matches!(
        err.downcast_ref::<selectorlab::Error>(),
        Some(selectorlab::Error::EmptyWrongPartition)
            | Some(selectorlab::Error::InsufficientSamples { .. })
            | Some(selectorlab::Error::KOutOfRange { .. })
    )
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Synthetic spec JSON (densities, prior, n, seed).
    #[arg(long)]
    pub spec: PathBuf,
    /// Override the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_synth(args: SynthArgs) -> Result<i32> {
    let mut spec = SyntheticSpec::load(&args.spec)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let data = generate(&spec)?;

    ensure_dir(&args.out)?;
    write_atomic_with(&args.out.join("data.scf"), |tmp| {
        Ok(io::save_dataset_binary(&data.dataset, tmp)?)
    })?;

    let llr = data.oracle.log_lr_scores(&data.dataset.features);
    write_atomic_with(&args.out.join("oracle.csv"), |tmp| {
        Ok(io::save_scores_csv(&llr.values, tmp)?)
    })?;

    let mut hypothesis = String::from("index,h0\n");
    for (i, &c) in data.correct.iter().enumerate() {
        hypothesis.push_str(&format!("{},{}\n", i, c as u8));
    }
    write_atomic(&args.out.join("hypothesis.csv"), hypothesis.as_bytes())?;

    let n_correct = data.correct.iter().filter(|&&c| c).count();
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "seed": spec.seed,
        "n": spec.n,
        "dim": spec.dim,
        "prior_correct": spec.prior_correct,
        "drawn_correct": n_correct,
    });
    let text = serde_json::to_string_pretty(&meta)? + "\n";
    write_atomic(&args.out.join("synth_meta.json"), text.as_bytes())?;
    println!(
        "generated {} samples (dim {}, {} from the correct density) -> {}",
        spec.n,
        spec.dim,
        n_correct,
        args.out.display()
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Theorem ids (e.g. T2_delta_mds T3_delta_knn).
    pub ids: Vec<String>,
    /// Run the whole registry.
    #[arg(long, default_value_t = false)]
    pub all: bool,
    /// Base seed for the seeded checks.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for the JSON report (optional).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_verify(args: VerifyArgs) -> Result<i32> {
    let ids: Vec<TheoremId> = if args.all || args.ids.is_empty() {
        TheoremId::ALL.to_vec()
    } else {
        args.ids
            .iter()
            .map(|s| TheoremId::parse(s).map_err(|e| anyhow!(e)))
            .collect::<Result<_>>()?
    };
    let opts = VerifyOptions { seed: args.seed };
    let mut reports: Vec<TheoremReport> = Vec::new();
    for id in &ids {
        let report = verify_theorem(*id, &opts)?;
        let status = if report.pass { "PASS" } else { "FAIL" };
        let stats: Vec<String> = report
            .stats
            .iter()
            .map(|(k, v)| format!("{k}={v:.6}"))
            .collect();
        println!("{}: {status} ({})", report.id, stats.join(", "));
        reports.push(report);
    }
    let all_pass = reports.iter().all(|r| r.pass);

    if let Some(out) = &args.out {
        ensure_dir(out)?;
        let doc = json!({
            "version": env!("CARGO_PKG_VERSION"),
            "seed": args.seed,
            "all_pass": all_pass,
            "theorems": reports,
        });
        let text = serde_json::to_string_pretty(&doc)? + "\n";
        write_atomic(&out.join("verification.json"), text.as_bytes())?;
    }
    Ok(if all_pass { 0 } else { 3 })
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Comma-separated report JSON files or eval output directories.
    #[arg(long)]
    pub inputs: String,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_report(args: ReportArgs) -> Result<i32> {
    let mut summaries: Vec<ReportSummary> = Vec::new();
    for input in args.inputs.split(',') {
        let input = input.trim();
        if input.is_empty() {
            continue;
        }
        let path = PathBuf::from(input);
        let mut files: Vec<PathBuf> = Vec::new();
        if path.is_dir() {
            let reports_dir = if path.join("reports").is_dir() {
                path.join("reports")
            } else {
                path.clone()
            };
            let mut entries: Vec<PathBuf> = std::fs::read_dir(&reports_dir)
                .with_context(|| format!("listing {}", reports_dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "json"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(path);
        }
        for file in files {
            let text = std::fs::read_to_string(&file)
                .with_context(|| format!("reading {}", file.display()))?;
            let summary: ReportSummary = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", file.display()))?;
            summaries.push(summary);
        }
    }
    if summaries.is_empty() {
        bail!("no reports found in --inputs");
    }
    ensure_dir(&args.out)?;
    write_ranking_csv(&args.out.join("ranking.csv"), &mut summaries)?;
    for s in &summaries {
        println!(
            "{}: naurc={}",
            s.method,
            s.naurc.map_or("undefined".into(), |v| format!("{v:.6}"))
        );
    }
    Ok(0)
}
