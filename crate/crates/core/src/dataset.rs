//! Labeled vector datasets: CSV loading, standardization, k-fold partitions
//! and the synthetic swiss roll.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::metric::Points;
use crate::seed;

/// N samples in R^m with contiguous class ids.
///
/// Samples are stored row-major. Label ids index into `class_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    class_names: Vec<String>,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset from row-major samples and labels in `0..C`.
    ///
    /// Every id below the maximum label must occur at least once.
    pub fn new(samples: Vec<f64>, dim: usize, labels: Vec<usize>) -> Result<Self> {
        let class_count = labels.iter().max().map_or(0, |&m| m + 1);
        let class_names = (0..class_count).map(|c| c.to_string()).collect();
        Self::with_names(samples, dim, labels, class_names, None)
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut samples = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::RaggedRow { row: i, expected: dim, found: r.len() });
            }
            samples.extend_from_slice(r);
        }
        Self::new(samples, dim, labels)
    }

    pub fn with_names(
        samples: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        class_names: Vec<String>,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::NoRows);
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("samples need at least one feature".into()));
        }
        if samples.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dim,
                found: samples.len(),
            });
        }
        if let Some((pos, _)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / dim, column: pos % dim });
        }
        let mut seen = vec![false; class_names.len()];
        for &l in &labels {
            match seen.get_mut(l) {
                Some(s) => *s = true,
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "label {l} has no class name ({} classes)",
                        class_names.len()
                    )))
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("class id {missing} never occurs")));
        }
        if let Some(names) = &feature_names {
            if names.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: names.len() });
            }
        }
        Ok(Self { samples, dim, labels, class_names, feature_names })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn points(&self) -> Points<'_> {
        Points::from_parts(&self.samples, self.dim)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.class_count()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Sample indices grouped by class id.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.class_count()];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l].push(i);
        }
        members
    }

    /// Size of the smallest class.
    pub fn smallest_class(&self) -> usize {
        self.class_sizes().into_iter().min().unwrap_or(0)
    }

    /// Rows `indices`, in that order. Class ids and names are kept as-is, so a
    /// subset may leave some classes empty.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut samples = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            samples.extend_from_slice(self.row(i));
        }
        Dataset {
            samples,
            dim: self.dim,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub(crate) fn map_samples(&self, samples: Vec<f64>) -> Dataset {
        debug_assert_eq!(samples.len(), self.samples.len());
        Dataset { samples, ..self.clone() }
    }

    /// Writes the dataset as CSV with the label text in the last column.
    ///
    /// A header line is written only when feature names are present, so that
    /// reloading with the same `has_header` flag reproduces the dataset.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        if let Some(names) = &self.feature_names {
            let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
            header.push("class");
            w.write_record(&header)?;
        }
        let mut record = Vec::with_capacity(self.dim + 1);
        for i in 0..self.len() {
            record.clear();
            record.extend(self.row(i).iter().map(|v| v.to_string()));
            record.push(self.class_names[self.labels[i]].clone());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(File::create(path)?)
    }
}

/// Which CSV column holds the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    Last,
    Index(usize),
}

impl std::str::FromStr for LabelColumn {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "last" {
            return Ok(LabelColumn::Last);
        }
        s.parse()
            .map(LabelColumn::Index)
            .map_err(|_| format!("expected a column index or \"last\", got {s:?}"))
    }
}

pub fn load_csv(path: impl AsRef<Path>, has_header: bool, label: LabelColumn) -> Result<Dataset> {
    read_csv(File::open(path)?, has_header, label)
}

/// Parses a comma-separated dataset. Lines starting with `#` are skipped.
///
/// Integer labels are mapped to ids in ascending numeric order; any other
/// label text is mapped by order of first occurrence.
pub fn read_csv<R: Read>(reader: R, has_header: bool, label: LabelColumn) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = if has_header { Some(rdr.headers()?.clone()) } else { None };

    let mut width = None;
    let mut samples = Vec::new();
    let mut raw_labels = Vec::new();
    let mut label_col = 0;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        let w = *width.get_or_insert_with(|| rec.len());
        if rec.len() != w {
            return Err(Error::RaggedRow { row, expected: w, found: rec.len() });
        }
        if w < 2 {
            return Err(Error::InvalidArgument("need at least one feature and a label column".into()));
        }
        label_col = match label {
            LabelColumn::Last => w - 1,
            LabelColumn::Index(c) if c < w => c,
            LabelColumn::Index(c) => {
                return Err(Error::InvalidArgument(format!("label column {c} out of range ({w} columns)")))
            }
        };
        for (column, cell) in rec.iter().enumerate() {
            if column == label_col {
                raw_labels.push(cell.to_owned());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row,
                column,
                value: cell.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, column });
            }
            samples.push(v);
        }
    }
    let width = width.ok_or(Error::NoRows)?;
    let dim = width - 1;

    let (labels, class_names) = map_labels(&raw_labels);
    if class_names.len() < 2 {
        return Err(Error::SingleClass);
    }
    let feature_names = header.map(|h| {
        h.iter()
            .enumerate()
            .filter(|&(c, _)| c != label_col)
            .map(|(_, s)| s.to_owned())
            .collect()
    });
    Dataset::with_names(samples, dim, labels, class_names, feature_names)
}

fn map_labels(raw: &[String]) -> (Vec<usize>, Vec<String>) {
    let numeric: Option<Vec<i64>> = raw.iter().map(|s| s.parse().ok()).collect();
    let mut names: Vec<String> = Vec::new();
    let mut ids: HashMap<&str, usize> = HashMap::new();
    match numeric {
        Some(values) => {
            let mut distinct = values.clone();
            distinct.sort_unstable();
            distinct.dedup();
            let labels = values
                .iter()
                .map(|v| distinct.binary_search(v).expect("value is in distinct set"))
                .collect();
            // keep the original spelling of the first occurrence of each value
            let mut spelled = vec![None; distinct.len()];
            for (s, v) in raw.iter().zip(&values) {
                let id = distinct.binary_search(v).expect("value is in distinct set");
                spelled[id].get_or_insert_with(|| s.clone());
            }
            names.extend(spelled.into_iter().map(Option::unwrap));
            (labels, names)
        }
        None => {
            let labels = raw
                .iter()
                .map(|s| {
                    *ids.entry(s.as_str()).or_insert_with(|| {
                        names.push(s.clone());
                        names.len() - 1
                    })
                })
                .collect();
            (labels, names)
        }
    }
}

/// Per-feature affine standardization fitted on one dataset and applicable to
/// others (e.g. fitted on a training partition, applied to its test partition).
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl Standardizer {
    /// Column means and sample standard deviations (n − 1 denominator).
    pub fn fit(data: &Dataset) -> Self {
        Self::fit_points(data.points())
    }

    pub fn fit_points(points: Points<'_>) -> Self {
        let (n, m) = (points.len(), points.dim());
        let mut means = vec![0.0; m];
        for i in 0..n {
            for (acc, v) in means.iter_mut().zip(points.row(i)) {
                *acc += v;
            }
        }
        means.iter_mut().for_each(|v| *v /= n as f64);
        let mut stds = vec![0.0; m];
        if n > 1 {
            for i in 0..n {
                for ((acc, v), mu) in stds.iter_mut().zip(points.row(i)).zip(&means) {
                    *acc += (v - mu) * (v - mu);
                }
            }
            stds.iter_mut().for_each(|v| *v = (*v / (n - 1) as f64).sqrt());
        }
        Self { means, stds }
    }

    pub fn from_parts(means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        if means.len() != stds.len() {
            return Err(Error::DimensionMismatch { expected: means.len(), found: stds.len() });
        }
        Ok(Self { means, stds })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// Standardizes one vector in place. Zero-variance features map to 0.
    pub fn transform_in_place(&self, x: &mut [f64]) {
        for ((v, mu), sd) in x.iter_mut().zip(&self.means).zip(&self.stds) {
            *v = if *sd > 0.0 { (*v - mu) / sd } else { 0.0 };
        }
    }

    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: data.dim() });
        }
        let mut samples = data.samples().to_vec();
        for row in samples.chunks_exact_mut(self.dim()) {
            self.transform_in_place(row);
        }
        Ok(data.map_samples(samples))
    }
}

/// Z-scores every feature column with its own mean and sample standard
/// deviation. Constant columns become all-zero.
pub fn zscore(data: &Dataset) -> Dataset {
    Standardizer::fit(data)
        .transform(data)
        .expect("standardizer fitted on the same dataset")
}

/// Assignment of N samples to F cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    fold_count: usize,
}

impl FoldAssignment {
    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn fold_count(&self) -> usize {
        self.fold_count
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.fold_count];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles `0..n` with `seed` and deals the permutation round-robin into
/// `folds` folds, so fold sizes differ by at most one.
pub fn kfold(n: usize, folds: usize, seed: u64) -> Result<FoldAssignment> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(Error::InvalidArgument(format!("{folds} folds exceed {n} samples")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    Ok(FoldAssignment { fold_of, fold_count: folds })
}

pub const SWISS_ROLL_T_MIN: f64 = 1.5 * PI;
pub const SWISS_ROLL_T_MAX: f64 = 4.5 * PI;
pub const SWISS_ROLL_HEIGHT: f64 = 21.0;
/// Default noise level of generated swiss rolls.
pub const SWISS_ROLL_NOISE: f64 = 1.0;

/// A swiss roll sample together with the roll parameter of each point.
#[derive(Debug, Clone)]
pub struct SwissRoll {
    pub data: Dataset,
    pub t: Vec<f64>,
}

/// Three-class swiss roll: `x = (t cos t, h, t sin t)` with `t` uniform on
/// `[1.5π, 4.5π]`, `h` uniform on `[0, 21]`, plus isotropic Gaussian noise.
///
/// Class `c` is the `c`-th third of the `t` range; each class receives
/// exactly `n / 3` points.
pub fn swiss_roll(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    swiss_roll_with_t(n, noise_sd, seed).map(|s| s.data)
}

pub fn swiss_roll_with_t(n: usize, noise_sd: f64, seed: u64) -> Result<SwissRoll> {
    if n == 0 || n % 3 != 0 {
        return Err(Error::InvalidArgument(format!("sample count {n} is not a positive multiple of 3")));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sd must be >= 0, got {noise_sd}")));
    }
    let mut rng = seed::rng(seed);
    let noise = Normal::new(0.0, noise_sd).expect("sd checked above");
    let arc = (SWISS_ROLL_T_MAX - SWISS_ROLL_T_MIN) / 3.0;
    let per_class = n / 3;

    let mut samples = Vec::with_capacity(n * 3);
    let mut labels = Vec::with_capacity(n);
    let mut ts = Vec::with_capacity(n);
    for class in 0..3 {
        let lo = SWISS_ROLL_T_MIN + class as f64 * arc;
        for _ in 0..per_class {
            let t = lo + rng.random::<f64>() * arc;
            let h = rng.random::<f64>() * SWISS_ROLL_HEIGHT;
            let mut p = [t * t.cos(), h, t * t.sin()];
            if noise_sd > 0.0 {
                p.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
            }
            samples.extend_from_slice(&p);
            labels.push(class);
            ts.push(t);
        }
    }
    let names = Some(vec!["x".to_owned(), "y".to_owned(), "z".to_owned()]);
    let class_names = (0..3).map(|c| c.to_string()).collect();
    let data = Dataset::with_names(samples, 3, labels, class_names, names)?;
    Ok(SwissRoll { data, t: ts })
}
