//! On-disk formats: the binary dataset container, the CSV dataset format,
//! the binary score bundle, score CSVs, and the JSON dataset manifest.
//!
//! Binary layouts are little-endian and bit-exact: saving and re-loading a
//! dataset reproduces every matrix bit for bit.
//!
//! Dataset container (`SCF1`):
//! ```text
//! magic "SCF1" | u32 version=1 | u64 N | u64 d | u64 K | u8 flags
//! features N*d f32 row-major | logits N*K f32 row-major
//! labels N i64 | predictions N i64 (present iff flags bit 0)
//! ```
//!
//! Score bundle (`SCB1`):
//! ```text
//! magic "SCB1" | u32 version=1 | u64 N | u32 n_columns
//! per column: u16 name_len | name utf-8 | N f64
//! ```
//!
//! CSV datasets carry the header `label,pred,f0..f{d-1},l0..l{K-1}` with the
//! `pred` column optionally empty (then predictions are argmax-derived).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{mix_datasets, Dataset, MixAmount, MixSpec};
use crate::error::{Error, Result};

const SCF_MAGIC: &[u8; 4] = b"SCF1";
const SCB_MAGIC: &[u8; 4] = b"SCB1";
const FLAG_PREDICTIONS: u8 = 0b0000_0001;

/// Dataset file encodings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileFormat {
    Binary,
    Csv,
}

impl FileFormat {
    /// Infer the format from a path extension; anything but `.csv` is binary.
    pub fn from_path(path: &Path) -> FileFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => FileFormat::Csv,
            _ => FileFormat::Binary,
        }
    }
}

/// Load a dataset in the requested format.
pub fn load_dataset(path: &Path, format: FileFormat) -> Result<Dataset> {
    match format {
        FileFormat::Binary => load_dataset_binary(path),
        FileFormat::Csv => load_dataset_csv(path),
    }
}

/// Save a dataset in the requested format.
pub fn save_dataset(ds: &Dataset, path: &Path, format: FileFormat) -> Result<()> {
    match format {
        FileFormat::Binary => save_dataset_binary(ds, path),
        FileFormat::Csv => save_dataset_csv(ds, path),
    }
}

fn dataset_name_from_path(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string()
}

pub fn save_dataset_binary(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);

    w.write_all(SCF_MAGIC).map_err(io_err)?;
    w.write_u32::<LittleEndian>(1).map_err(io_err)?;
    w.write_u64::<LittleEndian>(ds.len() as u64).map_err(io_err)?;
    w.write_u64::<LittleEndian>(ds.dim() as u64).map_err(io_err)?;
    w.write_u64::<LittleEndian>(ds.n_classes() as u64)
        .map_err(io_err)?;
    let flags = if ds.derived_predictions {
        0
    } else {
        FLAG_PREDICTIONS
    };
    w.write_u8(flags).map_err(io_err)?;
    for &v in ds.features.iter() {
        w.write_f32::<LittleEndian>(v).map_err(io_err)?;
    }
    for &v in ds.logits.iter() {
        w.write_f32::<LittleEndian>(v).map_err(io_err)?;
    }
    for &l in &ds.labels {
        w.write_i64::<LittleEndian>(l as i64).map_err(io_err)?;
    }
    if !ds.derived_predictions {
        for &p in &ds.predictions {
            w.write_i64::<LittleEndian>(p as i64).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn load_dataset_binary(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let bad = |detail: String| Error::format("SCF1", path, detail);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| Error::io(path, e))?;
    if &magic != SCF_MAGIC {
        return Err(bad(format!("bad magic {magic:?}, expected \"SCF1\"")));
    }
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|e| Error::io(path, e))?;
    if version != 1 {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n = r.read_u64::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
    let d = r.read_u64::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
    let k = r.read_u64::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
    let flags = r.read_u8().map_err(|e| Error::io(path, e))?;
    if n < 1 || d < 1 || k < 2 {
        return Err(bad(format!("invalid header dimensions N={n}, d={d}, K={k}")));
    }

    let read_f32_block = |r: &mut BufReader<File>, len: usize| -> Result<Vec<f32>> {
        let mut buf = vec![0u8; len * 4];
        r.read_exact(&mut buf)
            .map_err(|e| Error::format("SCF1", path, format!("truncated payload: {e}")))?;
        Ok(buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    };

    let feat_raw = read_f32_block(&mut r, n * d)?;
    for (idx, v) in feat_raw.iter().enumerate() {
        if !v.is_finite() {
            return Err(bad(format!("non-finite feature at row {}", idx / d)));
        }
    }
    let logit_raw = read_f32_block(&mut r, n * k)?;
    for (idx, v) in logit_raw.iter().enumerate() {
        if !v.is_finite() {
            return Err(bad(format!("non-finite logit at row {}", idx / k)));
        }
    }

    let mut labels = Vec::with_capacity(n);
    for row in 0..n {
        let v = r
            .read_i64::<LittleEndian>()
            .map_err(|e| Error::format("SCF1", path, format!("truncated labels: {e}")))?;
        if v < 0 || v as usize >= k {
            return Err(bad(format!("label {v} at row {row} is outside [0, {k})")));
        }
        labels.push(v as usize);
    }
    let predictions = if flags & FLAG_PREDICTIONS != 0 {
        let mut preds = Vec::with_capacity(n);
        for row in 0..n {
            let v = r
                .read_i64::<LittleEndian>()
                .map_err(|e| Error::format("SCF1", path, format!("truncated predictions: {e}")))?;
            if v < 0 || v as usize >= k {
                return Err(bad(format!(
                    "prediction {v} at row {row} is outside [0, {k})"
                )));
            }
            preds.push(v as usize);
        }
        Some(preds)
    } else {
        None
    };

    let features = Array2::from_shape_vec((n, d), feat_raw)
        .map_err(|e| bad(format!("feature shape: {e}")))?;
    let logits = Array2::from_shape_vec((n, k), logit_raw)
        .map_err(|e| bad(format!("logit shape: {e}")))?;
    Dataset::new(dataset_name_from_path(path), features, logits, labels, predictions)
}

pub fn save_dataset_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);

    let mut header = String::from("label,pred");
    for j in 0..ds.dim() {
        header.push_str(&format!(",f{j}"));
    }
    for j in 0..ds.n_classes() {
        header.push_str(&format!(",l{j}"));
    }
    writeln!(w, "{header}").map_err(io_err)?;

    for i in 0..ds.len() {
        let mut line = String::new();
        line.push_str(&ds.labels[i].to_string());
        line.push(',');
        if !ds.derived_predictions {
            line.push_str(&ds.predictions[i].to_string());
        }
        for j in 0..ds.dim() {
            line.push(',');
            line.push_str(&format!("{}", ds.features[[i, j]]));
        }
        for j in 0..ds.n_classes() {
            line.push(',');
            line.push_str(&format!("{}", ds.logits[[i, j]]));
        }
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_dataset_csv(path: &Path) -> Result<Dataset> {
    let bad = |detail: String| Error::format("CSV", path, detail);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::format("CSV", path, e.to_string()))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::format("CSV", path, e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 2 || cols[0] != "label" || cols[1] != "pred" {
        return Err(bad("header must start with `label,pred`".into()));
    }
    let d = cols[2..].iter().take_while(|c| c.starts_with('f')).count();
    let k = cols.len() - 2 - d;
    for (j, c) in cols[2..2 + d].iter().enumerate() {
        if **c != format!("f{j}") {
            return Err(bad(format!("expected feature column f{j}, found {c}")));
        }
    }
    for (j, c) in cols[2 + d..].iter().enumerate() {
        if **c != format!("l{j}") {
            return Err(bad(format!("expected logit column l{j}, found {c}")));
        }
    }
    if d < 1 || k < 2 {
        return Err(bad(format!("invalid header dimensions d={d}, K={k}")));
    }

    let mut features: Vec<f32> = Vec::new();
    let mut logits: Vec<f32> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut preds: Vec<Option<usize>> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(format!("row {row}: {e}")))?;
        if record.len() != cols.len() {
            return Err(bad(format!(
                "row {row} has {} fields, expected {}",
                record.len(),
                cols.len()
            )));
        }
        let label: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| bad(format!("row {row}: bad label `{}`", &record[0])))?;
        labels.push(label);
        let pred_field = record[1].trim();
        if pred_field.is_empty() {
            preds.push(None);
        } else {
            let p: usize = pred_field
                .parse()
                .map_err(|_| bad(format!("row {row}: bad pred `{pred_field}`")))?;
            preds.push(Some(p));
        }
        for j in 0..d {
            let v: f32 = record[2 + j]
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {row}: bad feature f{j}")))?;
            if !v.is_finite() {
                return Err(bad(format!("non-finite feature f{j} at row {row}")));
            }
            features.push(v);
        }
        for j in 0..k {
            let v: f32 = record[2 + d + j]
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {row}: bad logit l{j}")))?;
            if !v.is_finite() {
                return Err(bad(format!("non-finite logit l{j} at row {row}")));
            }
            logits.push(v);
        }
    }

    let n = labels.len();
    if n == 0 {
        return Err(bad("no data rows".into()));
    }
    let n_given = preds.iter().filter(|p| p.is_some()).count();
    let predictions = if n_given == 0 {
        None
    } else if n_given == n {
        Some(preds.into_iter().map(|p| p.unwrap()).collect())
    } else {
        return Err(bad(format!(
            "pred column must be all-empty or all-present, found {n_given}/{n}"
        )));
    };

    let features = Array2::from_shape_vec((n, d), features)
        .map_err(|e| bad(format!("feature shape: {e}")))?;
    let logits =
        Array2::from_shape_vec((n, k), logits).map_err(|e| bad(format!("logit shape: {e}")))?;
    Dataset::new(dataset_name_from_path(path), features, logits, labels, predictions)
}

/// Named score columns over one evaluation split.
#[derive(Clone, Debug, Default)]
pub struct ScoreBundle {
    pub columns: Vec<(String, Vec<f64>)>,
}

impl ScoreBundle {
    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, |(_, v)| v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if let Some((_, first)) = self.columns.first() {
            if first.len() != values.len() {
                return Err(Error::LengthMismatch {
                    left_name: "bundle",
                    left: first.len(),
                    right_name: "column",
                    right: values.len(),
                });
            }
        }
        self.columns.push((name, values));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e: std::io::Error| Error::io(path, e);
        w.write_all(SCB_MAGIC).map_err(io_err)?;
        w.write_u32::<LittleEndian>(1).map_err(io_err)?;
        w.write_u64::<LittleEndian>(self.len() as u64).map_err(io_err)?;
        w.write_u32::<LittleEndian>(self.columns.len() as u32)
            .map_err(io_err)?;
        for (name, values) in &self.columns {
            let bytes = name.as_bytes();
            if bytes.len() > u16::MAX as usize {
                return Err(Error::InvalidParameter(format!(
                    "score column name too long: {name}"
                )));
            }
            w.write_u16::<LittleEndian>(bytes.len() as u16).map_err(io_err)?;
            w.write_all(bytes).map_err(io_err)?;
            for &v in values {
                w.write_f64::<LittleEndian>(v).map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<ScoreBundle> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let bad = |detail: String| Error::format("SCB1", path, detail);

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != SCB_MAGIC {
            return Err(bad(format!("bad magic {magic:?}, expected \"SCB1\"")));
        }
        let version = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))?;
        if version != 1 {
            return Err(bad(format!("unsupported version {version}")));
        }
        let n = r.read_u64::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
        let ncols = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
        let mut columns = Vec::with_capacity(ncols);
        for _ in 0..ncols {
            let name_len = r.read_u16::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
            let mut name_buf = vec![0u8; name_len];
            r.read_exact(&mut name_buf).map_err(|e| Error::io(path, e))?;
            let name = String::from_utf8(name_buf)
                .map_err(|e| bad(format!("column name is not utf-8: {e}")))?;
            let mut values = Vec::with_capacity(n);
            for _ in 0..n {
                values.push(
                    r.read_f64::<LittleEndian>()
                        .map_err(|e| bad(format!("truncated column {name}: {e}")))?,
                );
            }
            columns.push((name, values));
        }
        Ok(ScoreBundle { columns })
    }
}

/// Write one score column as `index,score` CSV.
pub fn save_scores_csv(values: &[f64], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    writeln!(w, "index,score").map_err(io_err)?;
    for (i, v) in values.iter().enumerate() {
        writeln!(w, "{i},{v}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// JSON manifest listing dataset files and mix recipes by name.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub datasets: Vec<DatasetEntry>,
    #[serde(default)]
    pub mixes: Vec<MixEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub path: String,
    /// "binary" or "csv"; inferred from the extension when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MixEntry {
    pub name: String,
    pub seed: u64,
    pub sources: Vec<MixSourceEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MixSourceEntry {
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format("manifest", path, e.to_string()))
    }

    /// Resolve a name to a dataset: plain entries load from disk, mix entries
    /// load their sources and apply the seeded mix. Paths are relative to
    /// `base_dir`.
    pub fn resolve(&self, name: &str, base_dir: &Path) -> Result<Dataset> {
        if let Some(entry) = self.datasets.iter().find(|e| e.name == name) {
            let path = base_dir.join(&entry.path);
            let format = match entry.format.as_deref() {
                Some("csv") => FileFormat::Csv,
                Some("binary") => FileFormat::Binary,
                Some(other) => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown dataset format `{other}` for `{name}`"
                    )))
                }
                None => FileFormat::from_path(&path),
            };
            let mut ds = load_dataset(&path, format)?;
            ds.name = entry.name.clone();
            return Ok(ds);
        }
        if let Some(mix) = self.mixes.iter().find(|m| m.name == name) {
            let mut sources = Vec::new();
            for src in &mix.sources {
                sources.push((self.resolve(&src.dataset, base_dir)?, amount_of(src)?));
            }
            let spec = MixSpec {
                sources: sources.iter().map(|(ds, a)| (ds, *a)).collect(),
                seed: mix.seed,
            };
            let mut mixed = mix_datasets(&spec)?;
            mixed.name = mix.name.clone();
            return Ok(mixed);
        }
        Err(Error::UnknownDataset(name.to_string()))
    }
}

fn amount_of(src: &MixSourceEntry) -> Result<MixAmount> {
    match (src.fraction, src.count) {
        (Some(f), None) => Ok(MixAmount::Fraction(f)),
        (None, Some(c)) => Ok(MixAmount::Count(c)),
        _ => Err(Error::InvalidParameter(format!(
            "mix source `{}` must set exactly one of fraction/count",
            src.dataset
        ))),
    }
}

/// Resolve a CLI dataset argument: a name in the manifest when one is given
/// and matches, otherwise a filesystem path.
pub fn resolve_dataset(
    arg: &str,
    manifest: Option<(&Manifest, &Path)>,
) -> Result<Dataset> {
    if let Some((manifest, base_dir)) = manifest {
        let known = manifest.datasets.iter().any(|e| e.name == arg)
            || manifest.mixes.iter().any(|m| m.name == arg);
        if known {
            return manifest.resolve(arg, base_dir);
        }
    }
    let path = PathBuf::from(arg);
    load_dataset(&path, FileFormat::from_path(&path))
}
