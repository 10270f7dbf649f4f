use rand::seq::index;
use rand::Rng;

use super::split::{search, FeatureTable, Scratch};
use crate::seed;

/// A node of a binary decision tree. Rows with `value <= threshold` go left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf { vote: u8 },
}

/// Decision tree stored as a preorder node list; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub(crate) fn from_nodes(nodes: Vec<Node>) -> Self {
        Self { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> u8 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { vote } => return vote,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature as usize] <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0usize;
        while let Node::Split { feature, threshold, left, right } = self.nodes[i] {
            i = if x[feature as usize] <= threshold { left } else { right } as usize;
        }
        i
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left as usize).max(walk(nodes, right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Adds this tree's vote for every row listed in `rows` to `counts`.
    ///
    /// `columns` is column-major (`columns[f * stride + r]`). The row list is
    /// partitioned down the tree instead of walking one row at a time;
    /// comparisons are the same as in [`Tree::predict`]. `rows` is reordered
    /// and `scratch` must be at least as long.
    pub(crate) fn accumulate_rows(
        &self,
        columns: &[f64],
        stride: usize,
        rows: &mut [u32],
        scratch: &mut [u32],
        counts: &mut [u32],
        stack: &mut Vec<(u32, u32, u32)>,
    ) {
        stack.clear();
        stack.push((0, 0, rows.len() as u32));
        while let Some((node, lo, hi)) = stack.pop() {
            let (lo, hi) = (lo as usize, hi as usize);
            match self.nodes[node as usize] {
                Node::Leaf { vote } => {
                    if vote != 0 {
                        for &r in &rows[lo..hi] {
                            counts[r as usize] += 1;
                        }
                    }
                }
                Node::Split { feature, threshold, left, right } => {
                    let col = &columns[feature as usize * stride..(feature as usize + 1) * stride];
                    let seg = &mut rows[lo..hi];
                    let n = seg.len();
                    let tmp = &mut scratch[..n];
                    tmp.copy_from_slice(seg);
                    // lefts fill from the front, rights from the back
                    let (mut l, mut r) = (0, n);
                    for &row in tmp.iter() {
                        let go_left = col[row as usize] <= threshold;
                        seg[l] = row;
                        seg[r - 1] = row;
                        l += usize::from(go_left);
                        r -= usize::from(!go_left);
                    }
                    let l = lo + l;
                    if l < hi {
                        stack.push((right, l as u32, hi as u32));
                    }
                    if lo < l {
                        stack.push((left, lo as u32, l as u32));
                    }
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Growth settings with every default resolved.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Growth {
    pub mtry: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

/// Training rows used by tree `tree` of a forest seeded with `forest_seed`:
/// a bootstrap resample, or every row when bootstrapping is off.
pub fn tree_sample(forest_seed: u64, tree: usize, rows: usize, bootstrap: bool) -> Vec<u32> {
    if !bootstrap {
        return (0..rows as u32).collect();
    }
    let mut rng = seed::rng(seed::derive_path(forest_seed, &[tree as u64, 0]));
    (0..rows).map(|_| rng.random_range(0..rows as u32)).collect()
}

pub(crate) fn grow(table: &FeatureTable, labels: &[u8], growth: Growth, forest_seed: u64, tree: usize) -> Tree {
    let mut rows = tree_sample(forest_seed, tree, table.rows(), growth.bootstrap);
    let mut grower = Grower {
        table,
        labels,
        growth,
        rng: seed::rng(seed::derive_path(forest_seed, &[tree as u64, 1])),
        scratch: Scratch::default(),
        candidates: Vec::with_capacity(growth.mtry),
        nodes: Vec::new(),
    };
    grower.grow(&mut rows, 0);
    Tree { nodes: grower.nodes }
}

struct Grower<'a> {
    table: &'a FeatureTable,
    labels: &'a [u8],
    growth: Growth,
    rng: rand_chacha::ChaCha8Rng,
    scratch: Scratch,
    candidates: Vec<usize>,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn leaf(&mut self, rows: &[u32]) -> u32 {
        let ones = rows.iter().filter(|&&r| self.labels[r as usize] != 0).count();
        // ties vote dissimilar
        let vote = u8::from(2 * ones >= rows.len());
        self.nodes.push(Node::Leaf { vote });
        (self.nodes.len() - 1) as u32
    }

    fn grow(&mut self, rows: &mut [u32], depth: usize) -> u32 {
        if self.growth.max_depth.is_some_and(|d| depth >= d) {
            return self.leaf(rows);
        }
        self.candidates.clear();
        self.candidates.extend(index::sample(&mut self.rng, self.table.width(), self.growth.mtry).iter());
        self.candidates.sort_unstable();
        let Some(split) = search(self.table, self.labels, rows, &self.candidates, self.growth.min_leaf, &mut self.scratch)
        else {
            return self.leaf(rows);
        };

        let column = self.table.column(split.feature);
        let mut boundary = 0;
        for i in 0..rows.len() {
            if column[rows[i] as usize] <= split.threshold {
                rows.swap(i, boundary);
                boundary += 1;
            }
        }
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { vote: 0 });
        let (left_rows, right_rows) = rows.split_at_mut(boundary);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[at] = Node::Split { feature: split.feature as u32, threshold: split.threshold, left, right };
        at as u32
    }
}
