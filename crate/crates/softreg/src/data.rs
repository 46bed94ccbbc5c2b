//! Dataset ingestion and preparation: sparse "label idx:val" text, dense
//! delimited text, train/test partition files, standardization fitted on
//! training rows only, label flipping, and the synthetic generators.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Dataset, Orientation};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Dense,
    Sparse,
    Synthetic,
}

/// A parsed feature table before bias augmentation. Labels are already
/// mapped to {0,1} (−1 maps to 0).
#[derive(Debug, Clone)]
pub struct RawTable {
    n: usize,
    v: usize,
    features: Vec<f64>, // row-major n×v, no bias column
    labels: Vec<u8>,
    pub source: SourceFormat,
}

impl RawTable {
    pub fn new(features: Vec<f64>, n: usize, v: usize, labels: Vec<u8>, source: SourceFormat) -> Result<Self> {
        if n == 0 || v == 0 {
            return Err(Error::Data("table needs at least one row and one feature".into()));
        }
        if features.len() != n * v {
            return Err(Error::Dimension(format!(
                "{} values for a {n}x{v} table",
                features.len()
            )));
        }
        if labels.len() != n {
            return Err(Error::Dimension(format!("{} labels for {n} rows", labels.len())));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Data(format!("label {l} is not binary")));
        }
        Ok(RawTable {
            n,
            v,
            features,
            labels,
            source,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.v
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.v..(i + 1) * self.v]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

fn parse_label_token(tok: &str, path: &Path, line_no: usize) -> Result<u8> {
    let val: f64 = tok.parse().map_err(|_| {
        Error::Data(format!(
            "{}:{line_no}: label '{tok}' is not numeric",
            path.display()
        ))
    })?;
    if val == 1.0 {
        Ok(1)
    } else if val == 0.0 || val == -1.0 {
        Ok(0)
    } else {
        Err(Error::Data(format!(
            "{}:{line_no}: label {val} is not binary (expect 0/1 or -1/+1)",
            path.display()
        )))
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(|s| s.to_string()).collect())
}

/// Parse sparse "label idx:val …" text with 1-based indices. The feature
/// count is the maximum index in the file unless `v_override` widens it
/// (needed when a test file's largest index is smaller than the train's).
pub fn parse_sparse(path: &Path, v_override: Option<usize>) -> Result<RawTable> {
    let lines = read_lines(path)?;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut v_max = 0usize;
    for (idx, line) in lines.iter().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let label_tok = toks.next().unwrap();
        labels.push(parse_label_token(label_tok, path, line_no)?);
        let mut entries = Vec::new();
        for tok in toks {
            let (i_str, v_str) = tok.split_once(':').ok_or_else(|| {
                Error::Data(format!(
                    "{}:{line_no}: malformed entry '{tok}' (want idx:val)",
                    path.display()
                ))
            })?;
            let fidx: usize = i_str.parse().map_err(|_| {
                Error::Data(format!(
                    "{}:{line_no}: bad feature index '{i_str}'",
                    path.display()
                ))
            })?;
            if fidx == 0 {
                return Err(Error::Data(format!(
                    "{}:{line_no}: feature indices are 1-based",
                    path.display()
                )));
            }
            let val: f64 = v_str.parse().map_err(|_| {
                Error::Data(format!(
                    "{}:{line_no}: bad feature value '{v_str}'",
                    path.display()
                ))
            })?;
            if val.is_nan() {
                return Err(Error::Data(format!("{}:{line_no}: NaN value", path.display())));
            }
            v_max = v_max.max(fidx);
            entries.push((fidx - 1, val));
        }
        rows.push(entries);
    }
    let v = match v_override {
        Some(v) if v >= v_max => v,
        Some(v) => {
            return Err(Error::Data(format!(
                "feature-count override {v} is below the file's max index {v_max}"
            )))
        }
        None => v_max,
    };
    let n = rows.len();
    let mut features = vec![0.0; n * v];
    for (i, entries) in rows.iter().enumerate() {
        for &(j, val) in entries {
            features[i * v + j] = val;
        }
    }
    RawTable::new(features, n, v, labels, SourceFormat::Sparse)
}

/// Write a table back out in the sparse format (zeros omitted). Values are
/// printed with Rust's shortest round-trip float formatting, so a parse of
/// the output reproduces the features exactly.
pub fn write_sparse(t: &RawTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..t.n() {
        let lab = if t.labels()[i] == 1 { "+1" } else { "-1" };
        out.push_str(lab);
        for (j, &v) in t.row(i).iter().enumerate() {
            if v != 0.0 {
                out.push_str(&format!(" {}:{}", j + 1, v));
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Where dense labels come from.
#[derive(Debug, Clone)]
pub enum DenseLabels {
    LastColumn,
    File(std::path::PathBuf),
}

fn split_delimited(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
}

/// Parse dense numeric text, one sample per row, comma- or whitespace-
/// delimited. Ragged rows and NaNs are errors.
pub fn parse_dense(path: &Path, labels: DenseLabels) -> Result<RawTable> {
    let lines = read_lines(path)?;
    let mut features = Vec::new();
    let mut labs = Vec::new();
    let mut width: Option<usize> = None;
    let label_in_row = matches!(labels, DenseLabels::LastColumn);
    for (idx, line) in lines.iter().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut vals = Vec::new();
        for tok in split_delimited(trimmed) {
            let v: f64 = tok.parse().map_err(|_| {
                Error::Data(format!(
                    "{}:{line_no}: '{tok}' is not numeric",
                    path.display()
                ))
            })?;
            if v.is_nan() {
                return Err(Error::Data(format!("{}:{line_no}: NaN value", path.display())));
            }
            vals.push(v);
        }
        match width {
            None => width = Some(vals.len()),
            Some(w) if w != vals.len() => {
                return Err(Error::Data(format!(
                    "{}:{line_no}: ragged row ({} columns, expected {w})",
                    path.display(),
                    vals.len()
                )))
            }
            _ => {}
        }
        if label_in_row {
            let lab_val = *vals.last().ok_or_else(|| {
                Error::Data(format!("{}:{line_no}: empty row", path.display()))
            })?;
            labs.push(parse_label_token(&lab_val.to_string(), path, line_no)?);
            vals.pop();
        }
        features.extend_from_slice(&vals);
    }
    let n = if label_in_row {
        labs.len()
    } else {
        match width {
            Some(w) if w > 0 => features.len() / w,
            _ => 0,
        }
    };
    if n == 0 {
        return Err(Error::Data(format!("{}: no rows", path.display())));
    }
    let v = features.len() / n;
    if let DenseLabels::File(lab_path) = labels {
        let lab_lines = read_lines(&lab_path)?;
        for (idx, line) in lab_lines.iter().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            labs.push(parse_label_token(trimmed, &lab_path, idx + 1)?);
        }
        if labs.len() != n {
            return Err(Error::Dimension(format!(
                "{} labels in {} for {} rows",
                labs.len(),
                lab_path.display(),
                n
            )));
        }
    }
    RawTable::new(features, n, v, labs, SourceFormat::Dense)
}

/// Z-score all rows of `t` using per-feature mean and population std
/// computed on `fit_idx` only. Constant features pass through unchanged
/// with (mean, std) recorded as (0, 1).
pub fn standardize(t: &RawTable, fit_idx: &[usize]) -> Result<(RawTable, Vec<(f64, f64)>)> {
    if fit_idx.is_empty() {
        return Err(Error::Parameter("standardize needs a nonempty fit set".into()));
    }
    for &i in fit_idx {
        if i >= t.n() {
            return Err(Error::Data(format!("fit index {i} out of range (n={})", t.n())));
        }
    }
    let v = t.n_features();
    let nf = fit_idx.len() as f64;
    let mut params = Vec::with_capacity(v);
    for j in 0..v {
        let mean = fit_idx.iter().map(|&i| t.row(i)[j]).sum::<f64>() / nf;
        let var = fit_idx
            .iter()
            .map(|&i| {
                let d = t.row(i)[j] - mean;
                d * d
            })
            .sum::<f64>()
            / nf;
        let std = var.sqrt();
        if std > 0.0 {
            params.push((mean, std));
        } else {
            params.push((0.0, 1.0));
        }
    }
    let mut features = t.features.clone();
    for i in 0..t.n() {
        for j in 0..v {
            let (m, s) = params[j];
            features[i * v + j] = (features[i * v + j] - m) / s;
        }
    }
    let out = RawTable {
        n: t.n,
        v: t.v,
        features,
        labels: t.labels.clone(),
        source: t.source,
    };
    Ok((out, params))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Circle,
    Xor,
    DoubleMoon,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle" => Ok(SyntheticKind::Circle),
            "xor" => Ok(SyntheticKind::Xor),
            "doublemoon" => Ok(SyntheticKind::DoubleMoon),
            other => Err(Error::Parameter(format!("unknown synthetic kind '{other}'"))),
        }
    }
}

/// The three 2-D toy generators.
///
/// * circle: 150 ring points (radius ~ N(2, 0.5²), uniform angle, class 1)
///   plus 150 centered points (each coordinate ~ N(0, 0.5²), class 0);
/// * xor: four N(·,1) blobs of 50, class 1 at (−2,2) and (2,−2), class 0
///   at (2,2) and (−2,−2);
/// * doublemoon: 250 per class on interleaved half-annuli, radius 2, width
///   1, second moon shifted by (+2, −0.5) and mirrored downward.
pub fn generate_synthetic(kind: SyntheticKind, seed: u64) -> RawTable {
    let mut rng = RngStream::new(seed, 0);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    match kind {
        SyntheticKind::Circle => {
            for _ in 0..150 {
                let r = 2.0 + 0.5 * rng.standard_normal();
                let a = rng.uniform(0.0, std::f64::consts::TAU);
                features.extend_from_slice(&[r * a.cos(), r * a.sin()]);
                labels.push(1);
            }
            for _ in 0..150 {
                features.extend_from_slice(&[0.5 * rng.standard_normal(), 0.5 * rng.standard_normal()]);
                labels.push(0);
            }
        }
        SyntheticKind::Xor => {
            let blobs = [((-2.0, 2.0), 1), ((2.0, -2.0), 1), ((2.0, 2.0), 0), ((-2.0, -2.0), 0)];
            for ((cx, cy), lab) in blobs {
                for _ in 0..50 {
                    features.extend_from_slice(&[cx + rng.standard_normal(), cy + rng.standard_normal()]);
                    labels.push(lab);
                }
            }
        }
        SyntheticKind::DoubleMoon => {
            for _ in 0..250 {
                let r = rng.uniform(1.5, 2.5);
                let a = rng.uniform(0.0, std::f64::consts::PI);
                features.extend_from_slice(&[r * a.cos(), r * a.sin()]);
                labels.push(1);
            }
            for _ in 0..250 {
                let r = rng.uniform(1.5, 2.5);
                let a = rng.uniform(0.0, std::f64::consts::PI);
                features.extend_from_slice(&[2.0 + r * a.cos(), -0.5 - r * a.sin()]);
                labels.push(0);
            }
        }
    }
    let n = labels.len();
    RawTable {
        n,
        v: 2,
        features,
        labels,
        source: SourceFormat::Synthetic,
    }
}

/// A predefined train/test split (0-based indices).
#[derive(Debug, Clone)]
pub struct PartitionSpec {
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub id: usize,
}

impl PartitionSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = HashSet::new();
        for &i in self.train_idx.iter().chain(&self.test_idx) {
            if i >= n {
                return Err(Error::Data(format!(
                    "partition {}: index {i} out of range (n={n})",
                    self.id
                )));
            }
            if !seen.insert(i) {
                return Err(Error::Data(format!(
                    "partition {}: index {i} appears in both sides",
                    self.id
                )));
            }
        }
        if self.train_idx.is_empty() {
            return Err(Error::Data(format!("partition {}: empty training side", self.id)));
        }
        Ok(())
    }
}

/// Read a partition file: one line per partition listing the 1-based
/// training indices; every other row becomes test.
pub fn read_partition_file(path: &Path, n_total: usize) -> Result<Vec<PartitionSpec>> {
    let lines = read_lines(path)?;
    let mut specs = Vec::new();
    for (idx, line) in lines.iter().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut train = Vec::new();
        for tok in split_delimited(trimmed) {
            let one_based: usize = tok.parse().map_err(|_| {
                Error::Data(format!(
                    "{}:{}: bad index '{tok}'",
                    path.display(),
                    idx + 1
                ))
            })?;
            if one_based == 0 || one_based > n_total {
                return Err(Error::Data(format!(
                    "{}:{}: index {one_based} out of range 1..={n_total}",
                    path.display(),
                    idx + 1
                )));
            }
            train.push(one_based - 1);
        }
        let train_set: HashSet<usize> = train.iter().copied().collect();
        if train_set.len() != train.len() {
            return Err(Error::Data(format!(
                "{}:{}: duplicate training index",
                path.display(),
                idx + 1
            )));
        }
        let test = (0..n_total).filter(|i| !train_set.contains(i)).collect();
        specs.push(PartitionSpec {
            train_idx: train,
            test_idx: test,
            id: specs.len() + 1,
        });
    }
    if specs.is_empty() {
        return Err(Error::Data(format!("{}: no partitions", path.display())));
    }
    Ok(specs)
}

/// Generate `count` label-stratified splits of size n_train. Used to build
/// partition files for tables that ship without published ones.
pub fn stratified_partitions(
    labels: &[u8],
    n_train: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<PartitionSpec>> {
    let n = labels.len();
    if n_train == 0 || n_train >= n {
        return Err(Error::Parameter(format!(
            "n_train must lie in 1..{n}, got {n_train}"
        )));
    }
    let pos: Vec<usize> = (0..n).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..n).filter(|&i| labels[i] == 0).collect();
    let n_pos_train = ((n_train as f64 * pos.len() as f64 / n as f64).round() as usize)
        .min(n_train)
        .min(pos.len());
    let n_neg_train = n_train - n_pos_train;
    if n_neg_train > neg.len() {
        return Err(Error::Data("not enough negative rows to stratify".into()));
    }
    let mut rng = RngStream::new(seed, 0);
    let mut specs = Vec::new();
    for id in 1..=count {
        let mut p = pos.clone();
        let mut q = neg.clone();
        rng.shuffle(&mut p);
        rng.shuffle(&mut q);
        let mut train: Vec<usize> = p[..n_pos_train]
            .iter()
            .chain(&q[..n_neg_train])
            .copied()
            .collect();
        train.sort_unstable();
        let train_set: HashSet<usize> = train.iter().copied().collect();
        let test = (0..n).filter(|i| !train_set.contains(i)).collect();
        specs.push(PartitionSpec {
            train_idx: train,
            test_idx: test,
            id,
        });
    }
    Ok(specs)
}

/// Write partitions in the same one-line-per-partition 1-based format.
pub fn write_partition_file(path: &Path, specs: &[PartitionSpec]) -> Result<()> {
    let mut out = String::new();
    for spec in specs {
        let line: Vec<String> = spec.train_idx.iter().map(|i| (i + 1).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn build_dataset(
    t: &RawTable,
    idx: &[usize],
    standardization: Option<&[(f64, f64)]>,
) -> Result<Dataset> {
    if idx.is_empty() {
        return Dataset::empty(t.n_features() + 1, standardization.map(|s| s.to_vec()));
    }
    let mut rows = Vec::with_capacity(idx.len());
    let mut y = Vec::with_capacity(idx.len());
    for &i in idx {
        let mut row = Vec::with_capacity(t.n_features() + 1);
        row.push(1.0);
        row.extend_from_slice(t.row(i));
        rows.push(row);
        y.push(t.labels()[i]);
    }
    Dataset::from_augmented(rows, y, standardization.map(|s| s.to_vec()), Orientation::AsIs)
}

/// Split a table into bias-augmented train/test datasets. When
/// `standardize_features` is set the scaler is fitted on the training rows
/// only and applied to both sides.
pub fn load_partition(
    t: &RawTable,
    spec: &PartitionSpec,
    standardize_features: bool,
) -> Result<(Dataset, Dataset)> {
    spec.validate(t.n())?;
    if standardize_features {
        let (tt, params) = standardize(t, &spec.train_idx)?;
        let train = build_dataset(&tt, &spec.train_idx, Some(&params))?;
        let test = build_dataset(&tt, &spec.test_idx, Some(&params))?;
        Ok((train, test))
    } else {
        let train = build_dataset(t, &spec.train_idx, None)?;
        let test = build_dataset(t, &spec.test_idx, None)?;
        Ok((train, test))
    }
}

/// All rows as one training dataset (identity partition).
pub fn to_dataset(t: &RawTable, standardize_features: bool) -> Result<Dataset> {
    let all: Vec<usize> = (0..t.n()).collect();
    let spec = PartitionSpec {
        train_idx: all,
        test_idx: Vec::new(),
        id: 0,
    };
    Ok(load_partition(t, &spec, standardize_features)?.0)
}

/// Complement every label; the orientation flag flips with them.
pub fn flip_labels(d: &Dataset) -> Dataset {
    d.flipped()
}
