//! Random forest over pair features.
//!
//! Each tree is a CART classifier grown with Gini splits on a bootstrap
//! resample, considering `mtry` random features per node. A forest's vote on
//! a pair feature is the fraction of trees whose reached leaf votes 1
//! (dissimilar); that fraction is the learned distance.
//!
//! Tree `t` draws all of its randomness from streams derived from
//! `(seed, t)`, so training is identical for any thread count and the first
//! `T'` trees of a `T`-tree forest equal a forest trained with `T'` trees.

mod io;
mod split;
mod tree;

use std::ops::Range;

use rayon::prelude::*;

pub use self::split::{best_split, gini, gini_counts, midpoint, FeatureTable, Split, MIN_GAIN};
pub use self::tree::{tree_sample, Node, Tree};
use crate::constraints::ConstraintSet;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::pairmap::{feature_len, write_pair, PairFeature};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForestParams {
    pub tree_count: usize,
    /// `None` grows until purity or another stop rule.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Candidate features per split; `None` means `⌈√feature_len⌉`.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { tree_count: 400, max_depth: None, min_leaf: 1, mtry: None, bootstrap: true, seed: 0 }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, feature_len: usize) -> usize {
        self.mtry.unwrap_or_else(|| (feature_len as f64).sqrt().ceil() as usize)
    }

    pub fn validate(&self, feature_len: usize) -> Result<()> {
        if self.tree_count == 0 {
            return Err(Error::InvalidArgument("tree count must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidArgument("min_leaf must be at least 1".into()));
        }
        let mtry = self.resolved_mtry(feature_len);
        if mtry == 0 || mtry > feature_len {
            return Err(Error::InvalidArgument(format!("mtry {mtry} outside [1, {feature_len}]")));
        }
        if self.tree_count > u32::MAX as usize {
            return Err(Error::InvalidArgument("tree count does not fit the model format".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    params: ForestParams,
    feature_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestStats {
    pub trees: usize,
    pub nodes: usize,
    pub leaves: usize,
    pub max_depth: usize,
    pub mean_depth: f64,
}

impl Forest {
    /// Trains on a ready feature table with binary labels.
    pub fn fit(table: &FeatureTable, labels: &[u8], params: &ForestParams) -> Result<Forest> {
        if table.rows() != labels.len() {
            return Err(Error::DimensionMismatch { expected: table.rows(), found: labels.len() });
        }
        if labels.is_empty() {
            return Err(Error::Empty);
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        if labels.iter().all(|&y| y == labels[0]) {
            return Err(Error::OneSidedConstraints);
        }
        if table.rows() > u32::MAX as usize {
            return Err(Error::InvalidArgument("too many training rows".into()));
        }
        let width = table.width();
        params.validate(width)?;
        let growth = tree::Growth {
            mtry: params.resolved_mtry(width),
            min_leaf: params.min_leaf,
            max_depth: params.max_depth,
            bootstrap: params.bootstrap,
        };
        let trees = (0..params.tree_count)
            .into_par_iter()
            .map(|t| tree::grow(table, labels, growth, params.seed, t))
            .collect();
        let params = ForestParams { mtry: Some(growth.mtry), ..params.clone() };
        Ok(Forest { trees, params, feature_len: width })
    }

    pub(crate) fn from_parts(trees: Vec<Tree>, params: ForestParams, feature_len: usize) -> Result<Forest> {
        if trees.is_empty() {
            return Err(Error::Empty);
        }
        if trees.len() != params.tree_count {
            return Err(Error::Format(format!("{} trees, header says {}", trees.len(), params.tree_count)));
        }
        Ok(Forest { trees, params, feature_len })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn feature_len(&self) -> usize {
        self.feature_len
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    /// The forest made of the first `count` trees.
    pub fn truncated(&self, count: usize) -> Result<Forest> {
        if count == 0 || count > self.trees.len() {
            return Err(Error::InvalidArgument(format!("cannot keep {count} of {} trees", self.trees.len())));
        }
        let params = ForestParams { tree_count: count, ..self.params.clone() };
        Ok(Forest { trees: self.trees[..count].to_vec(), params, feature_len: self.feature_len })
    }

    /// Number of trees voting 1 on `x`.
    #[inline]
    pub fn vote_count(&self, x: &[f64]) -> u32 {
        self.trees.iter().map(|t| t.predict(x) as u32).sum()
    }

    /// Fraction of trees voting 1 on `x`, a multiple of `1 / T` in `[0, 1]`.
    pub fn vote(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.feature_len {
            return Err(Error::DimensionMismatch { expected: self.feature_len, found: x.len() });
        }
        Ok(self.vote_count(x) as f64 / self.trees.len() as f64)
    }

    /// Adds the votes of trees in `trees` for every row of the row-major
    /// `features` matrix into `counts`.
    pub fn accumulate_votes(&self, trees: Range<usize>, features: &[f64], counts: &mut [u32]) {
        let width = self.feature_len;
        assert_eq!(features.len(), counts.len() * width, "feature block does not match counts");
        let rows = counts.len();
        let mut columns = vec![0.0; features.len()];
        for (r, row) in features.chunks_exact(width).enumerate() {
            for (f, &v) in row.iter().enumerate() {
                columns[f * rows + r] = v;
            }
        }
        self.accumulate_votes_columns(trees, &columns, counts);
    }

    /// Same as [`Forest::accumulate_votes`] for a column-major block:
    /// feature `f` of row `r` is `columns[f * counts.len() + r]`.
    pub fn accumulate_votes_columns(&self, trees: Range<usize>, columns: &[f64], counts: &mut [u32]) {
        let rows = counts.len();
        assert_eq!(columns.len(), rows * self.feature_len, "feature block does not match counts");
        assert!(rows <= u32::MAX as usize);
        let mut order: Vec<u32> = Vec::with_capacity(rows);
        let mut scratch = vec![0u32; rows];
        let mut stack = Vec::new();
        for tree in &self.trees[trees] {
            order.clear();
            order.extend(0..rows as u32);
            tree.accumulate_rows(columns, rows, &mut order, &mut scratch, counts, &mut stack);
        }
    }

    pub fn stats(&self) -> ForestStats {
        let depths: Vec<usize> = self.trees.iter().map(Tree::depth).collect();
        ForestStats {
            trees: self.trees.len(),
            nodes: self.trees.iter().map(|t| t.nodes().len()).sum(),
            leaves: self.trees.iter().map(Tree::leaf_count).sum(),
            max_depth: depths.iter().copied().max().unwrap_or(0),
            mean_depth: depths.iter().sum::<usize>() as f64 / depths.len().max(1) as f64,
        }
    }
}

/// Maps every constraint pair of `data` into a feature table with its target.
pub fn pair_table(constraints: &ConstraintSet, data: &Dataset, include_position: bool) -> Result<(FeatureTable, Vec<u8>)> {
    if let Some(max) = constraints.max_index() {
        if max >= data.len() {
            return Err(Error::InvalidArgument(format!("constraint index {max} past {} samples", data.len())));
        }
    }
    let width = feature_len(data.dim(), include_position);
    let mut values = vec![0.0; constraints.len() * width];
    for (((i, j), _), out) in constraints.iter().zip(values.chunks_exact_mut(width)) {
        write_pair(data.row(i), data.row(j), include_position, out);
    }
    Ok((FeatureTable::from_row_major(&values, width)?, constraints.targets().to_vec()))
}

/// Trains a forest on the mapped constraint pairs.
pub fn train_forest(
    constraints: &ConstraintSet,
    data: &Dataset,
    include_position: bool,
    params: &ForestParams,
) -> Result<Forest> {
    if constraints.is_empty() {
        return Err(Error::Empty);
    }
    let (table, labels) = pair_table(constraints, data, include_position)?;
    Forest::fit(&table, &labels, params)
}

/// Average tree vote on a mapped pair.
pub fn forest_vote(forest: &Forest, feature: &PairFeature) -> Result<f64> {
    forest.vote(feature.values())
}
