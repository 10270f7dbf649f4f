//! Gini impurity and exhaustive midpoint split search.

use crate::error::{Error, Result};

/// Minimum impurity decrease for a split to count as an improvement.
/// Guards against splits whose "gain" is floating-point residue.
pub const MIN_GAIN: f64 = 1e-12;

/// Gains closer than this are treated as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Pair features of the training rows, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    columns: Vec<f64>,
    rows: usize,
    width: usize,
}

impl FeatureTable {
    /// From row-major values.
    pub fn from_row_major(values: &[f64], width: usize) -> Result<Self> {
        if width == 0 || values.len() % width != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form rows of width {width}",
                values.len()
            )));
        }
        let rows = values.len() / width;
        let mut columns = vec![0.0; values.len()];
        for (r, row) in values.chunks_exact(width).enumerate() {
            for (f, &v) in row.iter().enumerate() {
                columns[f * rows + r] = v;
            }
        }
        Ok(Self { columns, rows, width })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::DimensionMismatch { expected: width, found: bad.len() });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_major(&flat, width)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn column(&self, feature: usize) -> &[f64] {
        &self.columns[feature * self.rows..(feature + 1) * self.rows]
    }

    #[inline]
    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.columns[feature * self.rows + row]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        (0..self.width).map(|f| self.value(row, f)).collect()
    }
}

/// Gini impurity `1 − p0² − p1²` from class counts.
#[inline]
pub fn gini_counts(zeros: usize, ones: usize) -> f64 {
    let n = (zeros + ones) as f64;
    let (p0, p1) = (zeros as f64 / n, ones as f64 / n);
    1.0 - p0 * p0 - p1 * p1
}

/// Gini impurity of a multiset of binary labels.
pub fn gini(labels: &[u8]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty);
    }
    let ones = labels.iter().filter(|&&y| y != 0).count();
    Ok(gini_counts(labels.len() - ones, ones))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Midpoint of two consecutive distinct values `lo < hi`, guaranteed to
/// satisfy `lo <= t < hi` so the routing rule `x <= t` separates them.
#[inline]
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    if mid >= lo && mid < hi {
        mid
    } else {
        lo
    }
}

/// Reusable buffer for split search.
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    pairs: Vec<(f64, u8)>,
}

/// Best Gini split of `rows` (indices into `table`/`labels`) over the
/// candidate features.
///
/// Thresholds are midpoints of consecutive distinct sorted values. Ties in
/// gain keep the lowest feature index, then the lowest threshold. Returns
/// `None` when no split leaves `min_leaf` rows on both sides with a gain of
/// at least [`MIN_GAIN`].
pub(crate) fn search(
    table: &FeatureTable,
    labels: &[u8],
    rows: &[u32],
    candidates: &[usize],
    min_leaf: usize,
    scratch: &mut Scratch,
) -> Option<Split> {
    let n = rows.len();
    if n < 2 || n < 2 * min_leaf {
        return None;
    }
    let ones = rows.iter().filter(|&&r| labels[r as usize] != 0).count();
    let parent = gini_counts(n - ones, ones);
    if parent == 0.0 {
        return None;
    }
    let nf = n as f64;
    let mut best: Option<Split> = None;
    let pairs = &mut scratch.pairs;

    for &feature in candidates {
        let column = table.column(feature);
        pairs.clear();
        pairs.extend(rows.iter().map(|&r| (column[r as usize], labels[r as usize])));
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        if pairs[0].0 >= pairs[n - 1].0 {
            continue;
        }
        let mut left_ones = 0usize;
        for i in 0..n - 1 {
            left_ones += pairs[i].1 as usize;
            // -0.0 and 0.0 sort apart under total_cmp but are the same value
            if pairs[i].0 >= pairs[i + 1].0 {
                continue;
            }
            let nl = i + 1;
            let nr = n - nl;
            if nl < min_leaf {
                continue;
            }
            if nr < min_leaf {
                break;
            }
            let right_ones = ones - left_ones;
            let child = (nl as f64 / nf) * gini_counts(nl - left_ones, left_ones)
                + (nr as f64 / nf) * gini_counts(nr - right_ones, right_ones);
            let gain = parent - child;
            if gain >= MIN_GAIN && best.is_none_or(|b| gain > b.gain + TIE_TOLERANCE) {
                best = Some(Split { feature, threshold: midpoint(pairs[i].0, pairs[i + 1].0), gain });
            }
        }
    }
    best
}

/// Best split over all rows of a row-major feature matrix.
///
/// Convenience wrapper around the search used during tree growth; candidate
/// features are considered in ascending order whatever order they are given in.
pub fn best_split(
    rows: &[Vec<f64>],
    labels: &[u8],
    candidate_features: &[usize],
    min_leaf: usize,
) -> Result<Option<Split>> {
    if rows.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: rows.len(), found: labels.len() });
    }
    if rows.is_empty() {
        return Ok(None);
    }
    let table = FeatureTable::from_rows(rows)?;
    let mut candidates = candidate_features.to_vec();
    candidates.sort_unstable();
    candidates.dedup();
    if let Some(&f) = candidates.iter().find(|&&f| f >= table.width()) {
        return Err(Error::InvalidArgument(format!("feature {f} out of range ({} features)", table.width())));
    }
    let idx: Vec<u32> = (0..rows.len() as u32).collect();
    Ok(search(&table, labels, &idx, &candidates, min_leaf.max(1), &mut Scratch::default()))
}
