//! Distance models: the learned forest distance and the two baselines
//! (Euclidean, covariance-based Mahalanobis), plus batch distance matrices.
//!
//! Every model is symmetric and non-negative. The forest distance is only a
//! pseudosemimetric: it obeys neither the triangle inequality nor identity
//! of indiscernibles, and `d(x, x)` is whatever the forest votes.

mod io;

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use self::io::{SavedModel, MODEL_MAGIC, MODEL_VERSION};
use crate::constraints::ConstraintSet;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forest::{train_forest, Forest, ForestParams};
use crate::pairmap::{feature_len, write_pair};

/// Borrowed row-major matrix of points.
#[derive(Debug, Clone, Copy)]
pub struct Points<'a> {
    data: &'a [f64],
    dim: usize,
}

impl<'a> Points<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!("{} values do not form rows of width {dim}", data.len())));
        }
        Ok(Self { data, dim })
    }

    pub(crate) fn from_parts(data: &'a [f64], dim: usize) -> Self {
        Self { data, dim }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Rfd,
    Euclidean,
    Mahalanobis,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Rfd => "rfd",
            ModelKind::Euclidean => "euclidean",
            ModelKind::Mahalanobis => "mahalanobis",
        })
    }
}

/// Which matrix the covariance baseline uses as its weight `W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceWeight {
    /// `W = (Σ + εI)^-1`, the usual Mahalanobis distance.
    #[default]
    Inverse,
    /// `W = Σ` itself.
    Covariance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfdModel {
    forest: Forest,
    include_position: bool,
    dim: usize,
}

impl RfdModel {
    pub fn new(forest: Forest, include_position: bool) -> Result<Self> {
        let width = forest.feature_len();
        let dim = if include_position { width / 2 } else { width };
        if dim == 0 || feature_len(dim, include_position) != width {
            return Err(Error::InvalidArgument(format!(
                "forest feature length {width} does not fit position={include_position}"
            )));
        }
        Ok(Self { forest, include_position, dim })
    }

    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    pub fn include_position(&self) -> bool {
        self.include_position
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_dim(self.dim, a, b)?;
        let mut feature = vec![0.0; self.forest.feature_len()];
        write_pair(a, b, self.include_position, &mut feature);
        Ok(self.forest.vote_count(&feature) as f64 / self.forest.tree_count() as f64)
    }

    pub fn truncated(&self, trees: usize) -> Result<Self> {
        Ok(Self { forest: self.forest.truncated(trees)?, ..self.clone() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MahalanobisModel {
    weights: Vec<f64>,
    dim: usize,
    weighting: CovarianceWeight,
}

impl MahalanobisModel {
    /// Row-major `dim × dim` weight matrix.
    pub fn new(weights: Vec<f64>, dim: usize, weighting: CovarianceWeight) -> Result<Self> {
        if dim == 0 || weights.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: weights.len() });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("weight matrix is not finite".into()));
        }
        Ok(Self { weights, dim, weighting })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weighting(&self) -> CovarianceWeight {
        self.weighting
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_dim(self.dim, a, b)?;
        Ok(self.quadratic_form(a, b))
    }

    #[inline]
    fn quadratic_form(&self, a: &[f64], b: &[f64]) -> f64 {
        let m = self.dim;
        let mut total = 0.0;
        for i in 0..m {
            let di = a[i] - b[i];
            let row = &self.weights[i * m..(i + 1) * m];
            let mut acc = 0.0;
            for j in 0..m {
                acc += row[j] * (a[j] - b[j]);
            }
            total += di * acc;
        }
        total.max(0.0)
    }
}

/// A trained distance function.
#[derive(Debug, Clone, PartialEq)]
pub enum DistanceModel {
    Rfd(RfdModel),
    Euclidean { dim: usize },
    Mahalanobis(MahalanobisModel),
}

impl DistanceModel {
    /// Trains the forest distance on `constraints` over `data`.
    pub fn train_rfd(
        constraints: &ConstraintSet,
        data: &Dataset,
        include_position: bool,
        params: &ForestParams,
    ) -> Result<Self> {
        let forest = train_forest(constraints, data, include_position, params)?;
        Ok(DistanceModel::Rfd(RfdModel::new(forest, include_position)?))
    }

    pub fn euclidean(dim: usize) -> Self {
        DistanceModel::Euclidean { dim }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            DistanceModel::Rfd(_) => ModelKind::Rfd,
            DistanceModel::Euclidean { .. } => ModelKind::Euclidean,
            DistanceModel::Mahalanobis(_) => ModelKind::Mahalanobis,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DistanceModel::Rfd(m) => m.dim(),
            DistanceModel::Euclidean { dim } => *dim,
            DistanceModel::Mahalanobis(m) => m.dim(),
        }
    }

    pub fn as_rfd(&self) -> Option<&RfdModel> {
        match self {
            DistanceModel::Rfd(m) => Some(m),
            _ => None,
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            DistanceModel::Rfd(m) => m.distance(a, b),
            DistanceModel::Euclidean { dim } => {
                check_dim(*dim, a, b)?;
                euclidean(a, b)
            }
            DistanceModel::Mahalanobis(m) => m.distance(a, b),
        }
    }
}

fn check_dim(dim: usize, a: &[f64], b: &[f64]) -> Result<()> {
    for x in [a, b] {
        if x.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: x.len() });
        }
    }
    Ok(())
}

/// Forest distance of a trained RFD model.
pub fn rfd_distance(model: &DistanceModel, a: &[f64], b: &[f64]) -> Result<f64> {
    match model {
        DistanceModel::Rfd(m) => m.distance(a, b),
        other => Err(Error::InvalidArgument(format!("expected an rfd model, got {}", other.kind()))),
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Sample covariance matrix (n − 1 denominator), row-major.
pub fn covariance(points: Points<'_>) -> Result<Vec<f64>> {
    let (n, m) = (points.len(), points.dim());
    if n < 2 {
        return Err(Error::InvalidArgument(format!("covariance needs at least 2 samples, got {n}")));
    }
    let mut mean = vec![0.0; m];
    for i in 0..n {
        mean.iter_mut().zip(points.row(i)).for_each(|(acc, v)| *acc += v);
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let mut cov = vec![0.0; m * m];
    let mut centered = vec![0.0; m];
    for i in 0..n {
        centered.iter_mut().zip(points.row(i)).zip(&mean).for_each(|((c, v), mu)| *c = v - mu);
        for a in 0..m {
            for b in a..m {
                cov[a * m + b] += centered[a] * centered[b];
            }
        }
    }
    for a in 0..m {
        for b in a..m {
            let v = cov[a * m + b] / (n - 1) as f64;
            cov[a * m + b] = v;
            cov[b * m + a] = v;
        }
    }
    Ok(cov)
}

/// Mahalanobis baseline with `W = (Σ + εI)^-1`, `ε = 1e-6 · trace(Σ) / m`.
pub fn fit_mahalanobis_cov(data: &Dataset) -> Result<DistanceModel> {
    fit_mahalanobis(data, CovarianceWeight::Inverse)
}

pub fn fit_mahalanobis(data: &Dataset, weighting: CovarianceWeight) -> Result<DistanceModel> {
    let m = data.dim();
    let cov = covariance(data.points())?;
    let weights = match weighting {
        CovarianceWeight::Covariance => cov,
        CovarianceWeight::Inverse => {
            let trace: f64 = (0..m).map(|i| cov[i * m + i]).sum();
            let ridge = if trace > 0.0 { 1e-6 * trace / m as f64 } else { 1e-6 };
            let mut sigma = DMatrix::from_row_slice(m, m, &cov);
            for i in 0..m {
                sigma[(i, i)] += ridge;
            }
            let inv = sigma
                .cholesky()
                .map(|c| c.inverse())
                .ok_or_else(|| Error::InvalidArgument("regularized covariance is not positive definite".into()))?;
            // nalgebra is column-major; the inverse is symmetric up to rounding, read it row by row
            (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| inv[(i, j)]).collect()
        }
    };
    Ok(DistanceModel::Mahalanobis(MahalanobisModel::new(weights, m, weighting)?))
}

/// Dense query × gallery distances, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, q: usize, g: usize) -> f64 {
        self.values[q * self.cols + g]
    }

    pub fn row(&self, q: usize) -> &[f64] {
        &self.values[q * self.cols..(q + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn transposed(&self) -> DistanceMatrix {
        let mut values = vec![0.0; self.values.len()];
        for q in 0..self.rows {
            for g in 0..self.cols {
                values[g * self.rows + q] = self.get(q, g);
            }
        }
        DistanceMatrix { rows: self.cols, cols: self.rows, values }
    }
}

/// Gallery points processed together per tree pass.
const BLOCK: usize = 1024;

/// Distances from every query to every gallery point. Rows are computed in
/// parallel; the result does not depend on scheduling.
pub fn distance_matrix(model: &DistanceModel, queries: Points<'_>, gallery: Points<'_>) -> Result<DistanceMatrix> {
    let dim = model.dim();
    for p in [&queries, &gallery] {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: p.dim() });
        }
    }
    if let DistanceModel::Rfd(m) = model {
        let t = m.forest().tree_count();
        return Ok(rfd_matrices(m, queries, gallery, &[t]).pop().expect("one checkpoint"));
    }
    let (rows, cols) = (queries.len(), gallery.len());
    let mut values = vec![0.0; rows * cols];
    if cols > 0 {
        values.par_chunks_mut(cols).enumerate().for_each(|(q, out)| {
            let a = queries.row(q);
            for (g, o) in out.iter_mut().enumerate() {
                let b = gallery.row(g);
                *o = match model {
                    DistanceModel::Euclidean { .. } => {
                        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
                    }
                    DistanceModel::Mahalanobis(w) => w.quadratic_form(a, b),
                    DistanceModel::Rfd(_) => unreachable!(),
                };
            }
        });
    }
    Ok(DistanceMatrix { rows, cols, values })
}

/// Forest distance matrices of the truncated forests made of the first
/// `tree_counts[i]` trees, computed in a single pass over the forest.
///
/// Each matrix equals `distance_matrix` of the correspondingly truncated model.
pub fn rfd_distance_matrices(
    model: &RfdModel,
    queries: Points<'_>,
    gallery: Points<'_>,
    tree_counts: &[usize],
) -> Result<Vec<DistanceMatrix>> {
    for p in [&queries, &gallery] {
        if p.dim() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), found: p.dim() });
        }
    }
    let total = model.forest().tree_count();
    if tree_counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("tree counts must be strictly increasing".into()));
    }
    if let Some(&bad) = tree_counts.iter().find(|&&t| t == 0 || t > total) {
        return Err(Error::InvalidArgument(format!("cannot evaluate {bad} of {total} trees")));
    }
    Ok(rfd_matrices(model, queries, gallery, tree_counts))
}

fn rfd_matrices(model: &RfdModel, queries: Points<'_>, gallery: Points<'_>, checkpoints: &[usize]) -> Vec<DistanceMatrix> {
    let (rows, cols) = (queries.len(), gallery.len());
    let forest = model.forest();
    let width = forest.feature_len();
    let pos = model.include_position();

    let per_query: Vec<Vec<Vec<f64>>> = (0..rows)
        .into_par_iter()
        .map_init(
            || (vec![0.0; BLOCK * width], vec![0u32; BLOCK], vec![0.0; width]),
            |(features, counts, row_buf), q| {
                let a = queries.row(q);
                let mut out = vec![vec![0.0; cols]; checkpoints.len()];
                for start in (0..cols).step_by(BLOCK) {
                    let len = BLOCK.min(cols - start);
                    let feats = &mut features[..len * width];
                    for k in 0..len {
                        write_pair(a, gallery.row(start + k), pos, row_buf);
                        for (f, &v) in row_buf.iter().enumerate() {
                            feats[f * len + k] = v;
                        }
                    }
                    let counts = &mut counts[..len];
                    counts.iter_mut().for_each(|c| *c = 0);
                    let mut done = 0;
                    for (slot, &t) in checkpoints.iter().enumerate() {
                        forest.accumulate_votes_columns(done..t, feats, counts);
                        done = t;
                        let denom = t as f64;
                        for (o, &c) in out[slot][start..start + len].iter_mut().zip(counts.iter()) {
                            *o = c as f64 / denom;
                        }
                    }
                }
                out
            },
        )
        .collect();

    (0..checkpoints.len())
        .map(|slot| {
            let mut values = Vec::with_capacity(rows * cols);
            for q in &per_query {
                values.extend_from_slice(&q[slot]);
            }
            DistanceMatrix { rows, cols, values }
        })
        .collect()
}
