//! Pair feature mapping.
//!
//! A pair `(a, b)` becomes `[|a − b|, (a + b) / 2]`: the element-wise absolute
//! difference (relative position) followed, optionally, by the midpoint
//! (absolute position). Both blocks are symmetric in `a` and `b`, bit for bit.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PairFeature {
    values: Vec<f64>,
    u_len: usize,
    includes_position: bool,
}

impl PairFeature {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The `|a − b|` block.
    pub fn relative(&self) -> &[f64] {
        &self.values[..self.u_len]
    }

    /// The midpoint block; empty when position is off.
    pub fn position(&self) -> &[f64] {
        &self.values[self.u_len..]
    }

    pub fn includes_position(&self) -> bool {
        self.includes_position
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Length of the mapped feature for points of dimension `dim`.
pub fn feature_len(dim: usize, include_position: bool) -> usize {
    if include_position {
        2 * dim
    } else {
        dim
    }
}

pub fn map_pair(a: &[f64], b: &[f64], include_position: bool) -> Result<PairFeature> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("cannot map zero-dimensional points".into()));
    }
    let mut values = vec![0.0; feature_len(a.len(), include_position)];
    write_pair(a, b, include_position, &mut values);
    Ok(PairFeature { values, u_len: a.len(), includes_position: include_position })
}

/// Writes the mapped pair into `out`, which must hold exactly
/// `feature_len(a.len(), include_position)` values.
#[inline]
pub fn write_pair(a: &[f64], b: &[f64], include_position: bool, out: &mut [f64]) {
    let m = a.len();
    assert!(b.len() == m && out.len() == feature_len(m, include_position));
    let (u, v) = out.split_at_mut(m);
    for ((o, x), y) in u.iter_mut().zip(a).zip(b) {
        *o = (x - y).abs();
    }
    if include_position {
        for ((o, x), y) in v.iter_mut().zip(a).zip(b) {
            *o = 0.5 * (x + y);
        }
    }
}
