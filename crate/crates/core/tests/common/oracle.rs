//! Independent interpreter for serialized forests.
//!
//! Parses the byte format from scratch and walks the trees directly, so a
//! trained forest can be checked against code that shares nothing with the
//! library's own traversal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rfd_core::constraints::sample_per_class;
use rfd_core::dataset::Dataset;
use rfd_core::forest::ForestParams;
use rfd_core::metric::{rfd_distance, DistanceModel};

use super::{ensure, Check};

#[derive(Debug, Clone)]
pub enum OracleNode {
    Leaf(u8),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug)]
pub struct OracleForest {
    pub feature_len: usize,
    pub trees: Vec<Vec<OracleNode>>,
}

struct Bytes<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Bytes<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out: [u8; N] = self.buf[self.at..self.at + N].try_into().unwrap();
        self.at += N;
        out
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
}

pub fn parse(buf: &[u8]) -> OracleForest {
    let mut b = Bytes { buf, at: 0 };
    assert_eq!(&b.take::<4>(), b"RFDF");
    assert_eq!(u16::from_le_bytes(b.take()), 1);
    let feature_len = b.u32() as usize;
    let tree_count = b.u32() as usize;
    let _max_depth = b.u32();
    let _min_leaf = b.u32();
    let _mtry = b.u32();
    let _bootstrap = b.u8();
    let _seed = u64::from_le_bytes(b.take());
    let mut trees = Vec::new();
    for _ in 0..tree_count {
        let n = b.u32() as usize;
        let mut nodes = Vec::new();
        for _ in 0..n {
            nodes.push(match b.u8() {
                0 => OracleNode::Leaf(b.u8()),
                1 => {
                    let feature = b.u32() as usize;
                    let threshold = f64::from_bits(u64::from_le_bytes(b.take()));
                    let left = b.u32() as usize;
                    let right = b.u32() as usize;
                    OracleNode::Split { feature, threshold, left, right }
                }
                t => panic!("unknown node tag {t}"),
            });
        }
        trees.push(nodes);
    }
    assert_eq!(b.at, buf.len(), "trailing bytes");
    OracleForest { feature_len, trees }
}

impl OracleForest {
    pub fn depth(&self, tree: usize) -> usize {
        fn walk(nodes: &[OracleNode], i: usize) -> usize {
            match nodes[i] {
                OracleNode::Leaf(_) => 0,
                OracleNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.trees[tree], 0)
    }

    pub fn votes(&self, x: &[f64]) -> usize {
        let mut total = 0;
        for nodes in &self.trees {
            let mut i = 0;
            loop {
                match nodes[i] {
                    OracleNode::Leaf(v) => {
                        total += v as usize;
                        break;
                    }
                    OracleNode::Split { feature, threshold, left, right } => {
                        i = if x[feature] <= threshold { left } else { right };
                    }
                }
            }
        }
        total
    }

    pub fn distance(&self, a: &[f64], b: &[f64], position: bool) -> f64 {
        let mut x: Vec<f64> = a.iter().zip(b).map(|(p, q)| (p - q).abs()).collect();
        if position {
            x.extend(a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)));
        }
        assert_eq!(x.len(), self.feature_len);
        self.votes(&x) as f64 / self.trees.len() as f64
    }

    pub fn thresholds(&self) -> Vec<(usize, f64)> {
        self.trees
            .iter()
            .flatten()
            .filter_map(|n| match *n {
                OracleNode::Split { feature, threshold, .. } => Some((feature, threshold)),
                OracleNode::Leaf(_) => None,
            })
            .collect()
    }
}

fn random_dataset(rng: &mut ChaCha20Rng, dim: usize) -> Dataset {
    let n = rng.random_range(30..80);
    let samples: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-5.0..5.0)).collect();
    // labels follow the first coordinate loosely so trees have structure
    let labels: Vec<usize> = (0..n)
        .map(|i| usize::from(samples[i * dim] + rng.random_range(-2.0..2.0) > 0.0))
        .collect();
    Dataset::new(samples, dim, labels).unwrap()
}

/// Small forests (T ≤ 3, depth ≤ 2) agree with the interpreter on every
/// input: `inputs` random pair-feature vectors (a share of them sitting
/// exactly on split thresholds) and `inputs` random point pairs.
pub fn small_forests_match(forests: usize, inputs: usize) -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
    for case in 0..forests {
        let dim = rng.random_range(1..=4);
        let position = case % 2 == 0;
        let data = loop {
            let d = random_dataset(&mut rng, dim);
            if d.class_count() == 2 && d.smallest_class() >= 2 {
                break d;
            }
        };
        let cs = sample_per_class(&data, 40, 40, rng.random()).map_err(|e| e.to_string())?;
        let params = ForestParams {
            tree_count: rng.random_range(1..=3),
            max_depth: Some(rng.random_range(1..=2)),
            seed: rng.random(),
            ..Default::default()
        };
        let model = DistanceModel::train_rfd(&cs, &data, position, &params).map_err(|e| e.to_string())?;
        let forest = model.as_rfd().unwrap().forest();
        let oracle = parse(&forest.to_bytes());
        ensure(oracle.trees.len() <= 3, || format!("case {case}: {} trees", oracle.trees.len()))?;
        for t in 0..oracle.trees.len() {
            ensure(oracle.depth(t) <= 2, || format!("case {case}: tree {t} has depth {}", oracle.depth(t)))?;
        }

        let thresholds = oracle.thresholds();
        for i in 0..inputs {
            let mut x: Vec<f64> = (0..oracle.feature_len).map(|_| rng.random_range(-6.0..6.0)).collect();
            if i % 4 == 0 && !thresholds.is_empty() {
                let (f, t) = thresholds[rng.random_range(0..thresholds.len())];
                x[f] = t;
            }
            let want = oracle.votes(&x) as f64 / oracle.trees.len() as f64;
            let got = forest.vote(&x).map_err(|e| e.to_string())?;
            ensure(got.to_bits() == want.to_bits(), || format!("case {case}: vote {got} vs oracle {want} at {x:?}"))?;

            let a: Vec<f64> = (0..dim).map(|_| rng.random_range(-6.0..6.0)).collect();
            let b: Vec<f64> = (0..dim).map(|_| rng.random_range(-6.0..6.0)).collect();
            let want = oracle.distance(&a, &b, position);
            let got = rfd_distance(&model, &a, &b).map_err(|e| e.to_string())?;
            ensure(got.to_bits() == want.to_bits(), || format!("case {case}: distance {got} vs oracle {want}"))?;
        }
    }
    Ok(())
}
