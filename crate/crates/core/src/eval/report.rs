//! Evaluation reports and their CSV forms.
//!
//! Both files start with `# name: value` metadata lines. The long form then
//! holds one row per cell:
//!
//! | column   | meaning                                              |
//! |----------|------------------------------------------------------|
//! | protocol | `knn-sweep`, `fixed-k`, `forest-sweep`, `retrieval`  |
//! | dataset  | dataset id                                           |
//! | method   | model name, e.g. `rfd+p`, `euclidean`                |
//! | run      | run index, from 0                                    |
//! | fold     | fold index within the run, from 0                    |
//! | k        | neighbor count (named `class` for retrieval reports) |
//! | value    | accuracy, error or precision, in [0, 1]              |
//!
//! The summary form holds one row per (method, k):
//! `protocol,dataset,method,k,mean,std,n`. `mean` averages every cell;
//! `std` is the sample standard deviation of the per-run means when the
//! report has several runs and of the per-fold values otherwise, with `n`
//! the number of such units. A single unit has `std` 0.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyKind {
    K,
    Class,
}

impl KeyKind {
    pub fn column(self) -> &'static str {
        match self {
            KeyKind::K => "k",
            KeyKind::Class => "class",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub method: String,
    pub run: usize,
    pub fold: usize,
    pub key: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub key: usize,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    protocol: String,
    dataset: String,
    key_kind: KeyKind,
    cells: Vec<Cell>,
    metadata: Vec<(String, String)>,
}

impl EvalReport {
    pub fn new(protocol: impl Into<String>, dataset: impl Into<String>, key_kind: KeyKind) -> Self {
        Self { protocol: protocol.into(), dataset: dataset.into(), key_kind, cells: Vec::new(), metadata: Vec::new() }
    }

    pub fn protocol(&self) -> &str {
        &self.protocol
    }

    pub fn dataset(&self) -> &str {
        &self.dataset
    }

    pub fn key_kind(&self) -> KeyKind {
        self.key_kind
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn metadata(&self) -> &[(String, String)] {
        &self.metadata
    }

    pub fn meta(&self, name: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    /// Sets a metadata entry, replacing an earlier one of the same name.
    pub fn set_meta(&mut self, name: impl Into<String>, value: impl ToString) {
        let name = name.into();
        // one entry per line in the CSV header
        let value = value.to_string().replace(['\n', '\r'], " ");
        match self.metadata.iter_mut().find(|(k, _)| *k == name) {
            Some(slot) => slot.1 = value,
            None => self.metadata.push((name, value)),
        }
    }

    pub fn push(&mut self, cell: Cell) -> Result<()> {
        if !(0.0..=1.0).contains(&cell.value) {
            return Err(Error::InvalidArgument(format!("metric value {} outside [0, 1]", cell.value)));
        }
        self.cells.push(cell);
        Ok(())
    }

    /// Appends the cells of another report on the same protocol and dataset.
    pub fn merge(&mut self, other: EvalReport) -> Result<()> {
        if other.protocol != self.protocol || other.dataset != self.dataset || other.key_kind != self.key_kind {
            return Err(Error::MismatchedReports(format!(
                "cannot merge {}/{} into {}/{}",
                other.protocol, other.dataset, self.protocol, self.dataset
            )));
        }
        self.cells.extend(other.cells);
        for (k, v) in other.metadata {
            if self.meta(&k).is_none() {
                self.metadata.push((k, v));
            }
        }
        Ok(())
    }

    /// Methods in order of first appearance.
    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.method) {
                out.push(c.method.clone());
            }
        }
        out
    }

    pub fn keys(&self, method: &str) -> Vec<usize> {
        let mut keys: Vec<usize> = self.cells.iter().filter(|c| c.method == method).map(|c| c.key).collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        let multi_run = self.cells.iter().any(|c| c.run > 0);
        let mut groups: BTreeMap<(usize, usize), Vec<&Cell>> = BTreeMap::new();
        let methods = self.methods();
        for c in &self.cells {
            let m = methods.iter().position(|x| *x == c.method).expect("listed method");
            groups.entry((m, c.key)).or_default().push(c);
        }
        groups
            .into_iter()
            .map(|((m, key), cells)| {
                let mean = cells.iter().map(|c| c.value).sum::<f64>() / cells.len() as f64;
                let units: Vec<f64> = if multi_run {
                    let mut runs: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
                    for c in &cells {
                        let e = runs.entry(c.run).or_default();
                        e.0 += c.value;
                        e.1 += 1;
                    }
                    runs.values().map(|(s, n)| s / *n as f64).collect()
                } else {
                    cells.iter().map(|c| c.value).collect()
                };
                SummaryRow { method: methods[m].clone(), key, mean, std: sample_std(&units), n: units.len() }
            })
            .collect()
    }

    pub fn summary_row(&self, method: &str, key: usize) -> Option<SummaryRow> {
        self.summary().into_iter().find(|r| r.method == method && r.key == key)
    }

    /// Mean over every cell of `method` at `key`.
    pub fn mean(&self, method: &str, key: usize) -> Option<f64> {
        let values: Vec<f64> =
            self.cells.iter().filter(|c| c.method == method && c.key == key).map(|c| c.value).collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }

    /// Mean over the per-key means of `method`, weighting every key equally.
    pub fn method_mean(&self, method: &str) -> Option<f64> {
        let keys = self.keys(method);
        (!keys.is_empty()).then(|| keys.iter().map(|&k| self.mean(method, k).unwrap()).sum::<f64>() / keys.len() as f64)
    }

    fn write_meta<W: Write>(&self, w: &mut W) -> Result<()> {
        for (k, v) in &self.metadata {
            writeln!(w, "# {k}: {v}")?;
        }
        Ok(())
    }

    pub fn write_long<W: Write>(&self, mut w: W) -> Result<()> {
        self.write_meta(&mut w)?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["protocol", "dataset", "method", "run", "fold", self.key_kind.column(), "value"])?;
        for c in &self.cells {
            csv.write_record([
                self.protocol.as_str(),
                self.dataset.as_str(),
                c.method.as_str(),
                &c.run.to_string(),
                &c.fold.to_string(),
                &c.key.to_string(),
                &c.value.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, mut w: W) -> Result<()> {
        self.write_meta(&mut w)?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["protocol", "dataset", "method", self.key_kind.column(), "mean", "std", "n"])?;
        for r in self.summary() {
            csv.write_record([
                self.protocol.as_str(),
                self.dataset.as_str(),
                r.method.as_str(),
                &r.key.to_string(),
                &r.mean.to_string(),
                &r.std.to_string(),
                &r.n.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Writes `<stem>.csv` and `<stem>.summary.csv` under `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut long = BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?);
        self.write_long(&mut long)?;
        long.flush()?;
        let mut summary = BufWriter::new(File::create(dir.join(format!("{stem}.summary.csv")))?);
        self.write_summary(&mut summary)?;
        summary.flush()?;
        Ok(())
    }

    pub fn read_long<R: Read>(reader: R) -> Result<EvalReport> {
        let (metadata, body) = split_meta(reader)?;
        let mut csv = csv::Reader::from_reader(body.as_bytes());
        let headers = csv.headers()?.clone();
        let key_kind = match headers.get(5) {
            Some("k") => KeyKind::K,
            Some("class") => KeyKind::Class,
            other => return Err(Error::Format(format!("unexpected key column {other:?}"))),
        };
        let mut report: Option<EvalReport> = None;
        for (line, record) in csv.records().enumerate() {
            let record = record?;
            if record.len() != 7 {
                return Err(Error::Format(format!("row {}: expected 7 columns", line + 1)));
            }
            let r = report.get_or_insert_with(|| EvalReport::new(&record[0], &record[1], key_kind));
            if r.protocol != record[0] || r.dataset != record[1] {
                return Err(Error::Format(format!("row {}: mixed protocol or dataset", line + 1)));
            }
            let num = |i: usize| -> Result<usize> {
                record[i].parse().map_err(|_| Error::Format(format!("row {}: bad integer {:?}", line + 1, &record[i])))
            };
            let value: f64 = record[6]
                .parse()
                .map_err(|_| Error::Format(format!("row {}: bad value {:?}", line + 1, &record[6])))?;
            r.push(Cell { method: record[2].to_string(), run: num(3)?, fold: num(4)?, key: num(5)?, value })?;
        }
        let mut report = report.ok_or(Error::NoRows)?;
        report.metadata = metadata;
        Ok(report)
    }

    /// Reads a long-form report and checks that `summary` matches the summary
    /// recomputed from its cells.
    pub fn read_checked<R: Read, S: Read>(long: R, summary: S) -> Result<EvalReport> {
        let report = Self::read_long(long)?;
        let (_, body) = split_meta(summary)?;
        let mut csv = csv::Reader::from_reader(body.as_bytes());
        let expected = report.summary();
        let mut seen = 0;
        for record in csv.records() {
            let record = record?;
            let parse = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Format(format!("summary row {}: bad column {i}", seen + 1)))
            };
            let row = expected.get(seen).ok_or_else(|| Error::Format("summary has extra rows".into()))?;
            let (mean, std, n) = (parse(4)?, parse(5)?, parse(6)?);
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + b.abs());
            if record.get(2) != Some(row.method.as_str())
                || parse(3)? != row.key as f64
                || !close(mean, row.mean)
                || !close(std, row.std)
                || n != row.n as f64
            {
                return Err(Error::Format(format!(
                    "summary row {} does not match cells ({} k={})",
                    seen + 1,
                    row.method,
                    row.key
                )));
            }
            seen += 1;
        }
        if seen != expected.len() {
            return Err(Error::Format(format!("summary has {seen} rows, cells give {}", expected.len())));
        }
        Ok(report)
    }

    pub fn load(dir: impl AsRef<Path>, stem: &str) -> Result<EvalReport> {
        let dir = dir.as_ref();
        Self::read_checked(
            File::open(dir.join(format!("{stem}.csv")))?,
            File::open(dir.join(format!("{stem}.summary.csv")))?,
        )
    }
}

fn split_meta<R: Read>(mut reader: R) -> Result<(Vec<(String, String)>, String)> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut meta = Vec::new();
    let mut body = String::with_capacity(text.len());
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest.split_once(':').ok_or_else(|| Error::Format(format!("bad metadata line {line:?}")))?;
            meta.push((k.trim().to_string(), v.trim().to_string()));
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    Ok((meta, body))
}

pub(crate) fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}
