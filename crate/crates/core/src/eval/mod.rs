//! Evaluation protocols: k-NN accuracy sweeps, fixed-k test error, forest
//! size sweeps, retrieval precision and mean-rank summaries.
//!
//! Every protocol runs `runs × folds` independent train/test splits. Models
//! are fitted on the training partition only and see nothing of the test
//! partition; normalization statistics, when enabled, come from the training
//! partition as well. Splits are seeded from the master seed by (run, fold),
//! so every method evaluated with the same options sees the same partitions.

mod knn;
mod rank;
mod report;

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

pub use self::knn::{knn_predict, neighbor_order};
pub use self::rank::{mean_rank, mean_rank_table};
pub use self::report::{Cell, EvalReport, KeyKind, SummaryRow};
use crate::constraints::{sample_fraction, sample_per_class, ConstraintSet};
use crate::dataset::{kfold, Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::forest::ForestParams;
use crate::metric::{distance_matrix, fit_mahalanobis, rfd_distance_matrices, CovarianceWeight, DistanceMatrix, DistanceModel};
use crate::seed;

/// Neighbor count of the fixed-k protocol.
pub const FIXED_K: usize = 11;

/// What the audit hook sees each time a model registers its constraints.
#[derive(Debug)]
pub struct Audit<'a> {
    pub run: usize,
    pub fold: usize,
    /// Constraint endpoints as indices into the full dataset.
    pub constraint_indices: &'a [usize],
    /// Test partition, as indices into the full dataset.
    pub test_indices: &'a [usize],
}

pub type AuditHook = Arc<dyn Fn(&Audit<'_>) + Send + Sync>;

#[derive(Clone)]
pub struct EvalOptions {
    pub folds: usize,
    pub runs: usize,
    pub seed: u64,
    /// Z-score features with statistics of each training partition.
    pub normalize: bool,
    /// Dataset id written into reports.
    pub dataset: String,
    /// Extra entries copied into every report's metadata.
    pub metadata: Vec<(String, String)>,
    pub audit: Option<AuditHook>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { folds: 5, runs: 1, seed: 0, normalize: false, dataset: "data".into(), metadata: Vec::new(), audit: None }
    }
}

impl fmt::Debug for EvalOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EvalOptions")
            .field("folds", &self.folds)
            .field("runs", &self.runs)
            .field("seed", &self.seed)
            .field("normalize", &self.normalize)
            .field("dataset", &self.dataset)
            .field("metadata", &self.metadata)
            .field("audit", &self.audit.is_some())
            .finish()
    }
}

impl EvalOptions {
    /// Three folds, ten runs.
    pub fn fixed_k(seed: u64) -> Self {
        Self { folds: 3, runs: 10, seed, ..Self::default() }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidArgument("runs must be at least 1".into()));
        }
        if self.folds < 2 || self.folds > n {
            return Err(Error::InvalidArgument(format!("{} folds do not fit {n} samples", self.folds)));
        }
        Ok(())
    }
}

/// Training-side view handed to a [`ModelFactory`].
pub struct FitContext<'a> {
    train: &'a Dataset,
    train_indices: Option<&'a [usize]>,
    test_indices: &'a [usize],
    run: usize,
    fold: usize,
    seed: u64,
    audit: Option<&'a AuditHook>,
}

impl<'a> FitContext<'a> {
    /// `train_indices[i]` is the full-dataset index of training row `i`;
    /// `test_indices` must be sorted.
    pub fn new(
        train: &'a Dataset,
        train_indices: &'a [usize],
        test_indices: &'a [usize],
        run: usize,
        fold: usize,
        seed: u64,
    ) -> Self {
        Self { train, train_indices: Some(train_indices), test_indices, run, fold, seed, audit: None }
    }

    /// Context for fitting on a whole dataset outside any protocol.
    pub fn standalone(train: &'a Dataset, seed: u64) -> Self {
        Self { train, train_indices: None, test_indices: &[], run: 0, fold: 0, seed, audit: None }
    }

    pub fn train(&self) -> &Dataset {
        self.train
    }

    pub fn run(&self) -> usize {
        self.run
    }

    pub fn fold(&self) -> usize {
        self.fold
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Checks that no constraint endpoint belongs to the test partition and
    /// reports the constraint set to the audit hook.
    pub fn register_constraints(&self, constraints: &ConstraintSet) -> Result<()> {
        let mut global = Vec::with_capacity(2 * constraints.len());
        for &(i, j) in constraints.pairs() {
            for local in [i, j] {
                let g = match self.train_indices {
                    Some(map) => *map.get(local).ok_or_else(|| {
                        Error::InvalidArgument(format!("constraint index {local} beyond training partition"))
                    })?,
                    None => local,
                };
                if self.test_indices.binary_search(&g).is_ok() {
                    return Err(Error::Leakage { run: self.run, fold: self.fold, index: g });
                }
                global.push(g);
            }
        }
        if let Some(hook) = self.audit {
            hook(&Audit { run: self.run, fold: self.fold, constraint_indices: &global, test_indices: self.test_indices });
        }
        Ok(())
    }
}

/// Builds a distance model from a training partition.
pub trait ModelFactory: Send + Sync {
    /// Method name used in reports.
    fn name(&self) -> String;
    fn fit(&self, ctx: &FitContext<'_>) -> Result<DistanceModel>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstraintBudget {
    PerClass { positive: usize, negative: usize },
    Fraction { positive: f64, negative: f64 },
}

impl ConstraintBudget {
    pub fn sample(&self, data: &Dataset, seed: u64) -> Result<ConstraintSet> {
        match *self {
            ConstraintBudget::PerClass { positive, negative } => sample_per_class(data, positive, negative, seed),
            ConstraintBudget::Fraction { positive, negative } => sample_fraction(data, positive, negative, seed),
        }
    }
}

impl fmt::Display for ConstraintBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintBudget::PerClass { positive, negative } => write!(f, "{positive}+{negative} per class"),
            ConstraintBudget::Fraction { positive, negative } => write!(f, "{positive}+{negative} of all pairs"),
        }
    }
}

/// Random forest distance. Constraint sampling and forest growth are seeded
/// from the fit context, so `params.seed` is ignored.
#[derive(Debug, Clone)]
pub struct RfdFactory {
    pub budget: ConstraintBudget,
    pub include_position: bool,
    pub params: ForestParams,
}

impl RfdFactory {
    /// 1000 similar and 1000 dissimilar pairs per class, 400 trees.
    pub fn per_class(include_position: bool) -> Self {
        Self {
            budget: ConstraintBudget::PerClass { positive: 1000, negative: 1000 },
            include_position,
            params: ForestParams { tree_count: 400, ..ForestParams::default() },
        }
    }

    /// 1% of the similar and 1% of the dissimilar pairs, 1000 trees.
    pub fn fractional(include_position: bool) -> Self {
        Self {
            budget: ConstraintBudget::Fraction { positive: 0.01, negative: 0.01 },
            include_position,
            params: ForestParams { tree_count: 1000, ..ForestParams::default() },
        }
    }

    pub fn with_trees(mut self, trees: usize) -> Self {
        self.params.tree_count = trees;
        self
    }
}

impl ModelFactory for RfdFactory {
    fn name(&self) -> String {
        if self.include_position { "rfd+p" } else { "rfd-p" }.into()
    }

    fn fit(&self, ctx: &FitContext<'_>) -> Result<DistanceModel> {
        let constraints = self.budget.sample(ctx.train(), seed::derive(ctx.seed(), 1))?;
        ctx.register_constraints(&constraints)?;
        let params = ForestParams { seed: seed::derive(ctx.seed(), 2), ..self.params.clone() };
        DistanceModel::train_rfd(&constraints, ctx.train(), self.include_position, &params)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EuclideanFactory;

impl ModelFactory for EuclideanFactory {
    fn name(&self) -> String {
        "euclidean".into()
    }

    fn fit(&self, ctx: &FitContext<'_>) -> Result<DistanceModel> {
        Ok(DistanceModel::euclidean(ctx.train().dim()))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MahalanobisFactory {
    pub weighting: CovarianceWeight,
}

impl ModelFactory for MahalanobisFactory {
    fn name(&self) -> String {
        match self.weighting {
            CovarianceWeight::Inverse => "mahalanobis",
            CovarianceWeight::Covariance => "mahalanobis-cov",
        }
        .into()
    }

    fn fit(&self, ctx: &FitContext<'_>) -> Result<DistanceModel> {
        fit_mahalanobis(ctx.train(), self.weighting)
    }
}

/// `step, 2·step, …` up to `max`, then `max` itself.
pub fn k_grid(step: usize, max: usize) -> Result<Vec<usize>> {
    if step == 0 || max == 0 {
        return Err(Error::InvalidArgument(format!("k grid needs positive step and max, got {step} and {max}")));
    }
    let mut ks: Vec<usize> = (1..).map(|i| i * step).take_while(|&k| k <= max).collect();
    if ks.last() != Some(&max) {
        ks.push(max);
    }
    Ok(ks)
}

/// Steps of 5 up to the size of the smallest class.
pub fn default_k_grid(data: &Dataset) -> Vec<usize> {
    k_grid(5, data.smallest_class()).expect("classes are nonempty")
}

struct Split {
    run: usize,
    fold: usize,
    seed: u64,
    train: Dataset,
    test: Dataset,
    train_indices: Vec<usize>,
    test_indices: Vec<usize>,
}

impl Split {
    fn context<'a>(&'a self, audit: Option<&'a AuditHook>) -> FitContext<'a> {
        FitContext {
            audit,
            ..FitContext::new(&self.train, &self.train_indices, &self.test_indices, self.run, self.fold, self.seed)
        }
    }
}

/// Runs `job` on every (run, fold) split, in parallel, returning results in
/// (run, fold) order.
fn for_each_split<T: Send>(
    data: &Dataset,
    opts: &EvalOptions,
    job: impl Fn(&Split) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    opts.validate(data.len())?;
    let assignments = (0..opts.runs)
        .map(|run| kfold(data.len(), opts.folds, seed::derive_path(opts.seed, &[run as u64, 0])))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..opts.runs).flat_map(|r| (0..opts.folds).map(move |f| (r, f))).collect();
    jobs.into_par_iter()
        .map(|(run, fold)| {
            let a = &assignments[run];
            let (train_indices, test_indices) = (a.train_indices(fold), a.test_indices(fold));
            let (mut train, mut test) = (data.subset(&train_indices), data.subset(&test_indices));
            if opts.normalize {
                let s = Standardizer::fit(&train);
                train = s.transform(&train)?;
                test = s.transform(&test)?;
            }
            let seed = seed::derive_path(opts.seed, &[run as u64, 1, fold as u64]);
            job(&Split { run, fold, seed, train, test, train_indices, test_indices })
        })
        .collect()
}

/// Fraction of test rows whose k-NN prediction is correct, for each k.
fn knn_accuracies(dm: &DistanceMatrix, gallery: &[usize], queries: &[usize], classes: usize, ks: &[usize]) -> Vec<f64> {
    let correct = (0..dm.rows())
        .into_par_iter()
        .map(|q| {
            let order = neighbor_order(dm.row(q));
            knn::predict_many(&order, gallery, classes, ks).into_iter().map(|p| usize::from(p == queries[q])).collect()
        })
        .reduce(|| vec![0usize; ks.len()], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    correct.into_iter().map(|c| c as f64 / dm.rows() as f64).collect()
}

fn check_k(data: &Dataset, ks: &[usize]) -> Result<Vec<usize>> {
    if ks.is_empty() {
        return Err(Error::InvalidArgument("empty k grid".into()));
    }
    let max = data.smallest_class();
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > max) {
        return Err(Error::KOutOfRange { k, max });
    }
    let mut sorted = ks.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    Ok(sorted)
}

fn new_report(protocol: &str, key: KeyKind, opts: &EvalOptions, method: &str) -> EvalReport {
    let mut r = EvalReport::new(protocol, &opts.dataset, key);
    for (k, v) in &opts.metadata {
        r.set_meta(k.clone(), v);
    }
    r.set_meta("version", crate::VERSION);
    r.set_meta("method", method);
    r.set_meta("seed", opts.seed);
    r.set_meta("folds", opts.folds);
    r.set_meta("runs", opts.runs);
    r.set_meta("normalize", opts.normalize);
    r
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

/// (run, fold, one accuracy per k).
type SplitScores = (usize, usize, Vec<f64>);

/// Accuracy per (k, split) cell, with ks effectively clamped to each
/// gallery's size. Returns the cells' (run, fold, values) and the clamped ks.
fn knn_cells(
    factory: &dyn ModelFactory,
    data: &Dataset,
    ks: &[usize],
    opts: &EvalOptions,
) -> Result<(Vec<SplitScores>, Vec<usize>)> {
    let results = for_each_split(data, opts, |s| {
        let model = factory.fit(&s.context(opts.audit.as_ref()))?;
        let dm = distance_matrix(&model, s.test.points(), s.train.points())?;
        let effective: Vec<usize> = ks.iter().map(|&k| k.min(s.train.len())).collect();
        let acc = knn_accuracies(&dm, s.train.labels(), s.test.labels(), data.class_count(), &effective);
        Ok((s.run, s.fold, acc, s.train.len()))
    })?;
    let smallest_gallery = results.iter().map(|r| r.3).min().unwrap_or(0);
    let clamped = ks.iter().copied().filter(|&k| k > smallest_gallery).collect();
    Ok((results.into_iter().map(|(r, f, a, _)| (r, f, a)).collect(), clamped))
}

/// Mean k-NN accuracy at each k of `k_values`. Each k must not exceed the
/// smallest class; a k larger than a training partition is clamped to it and
/// recorded in the `k_clamped` metadata entry.
pub fn knn_sweep(
    factory: &dyn ModelFactory,
    data: &Dataset,
    k_values: &[usize],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let ks = check_k(data, k_values)?;
    let start = Instant::now();
    let name = factory.name();
    let (cells, clamped) = knn_cells(factory, data, &ks, opts)?;
    let mut report = new_report("knn-sweep", KeyKind::K, opts, &name);
    for (run, fold, acc) in cells {
        for (&k, value) in ks.iter().zip(acc) {
            report.push(Cell { method: name.clone(), run, fold, key: k, value })?;
        }
    }
    report.set_meta("k_grid", join(&ks));
    report.set_meta("k_clamped", if clamped.is_empty() { "none".into() } else { join(&clamped) });
    report.set_meta("seconds", format!("{:.3}", start.elapsed().as_secs_f64()));
    Ok(report)
}

/// Test error (1 − accuracy) of k-NN at a single k.
pub fn fixed_k_error(factory: &dyn ModelFactory, data: &Dataset, k: usize, opts: &EvalOptions) -> Result<EvalReport> {
    let ks = check_k(data, &[k])?;
    let start = Instant::now();
    let name = factory.name();
    let (cells, clamped) = knn_cells(factory, data, &ks, opts)?;
    let mut report = new_report("fixed-k", KeyKind::K, opts, &name);
    for (run, fold, acc) in cells {
        report.push(Cell { method: name.clone(), run, fold, key: k, value: 1.0 - acc[0] })?;
    }
    report.set_meta("k_grid", k);
    report.set_meta("k_clamped", if clamped.is_empty() { "none".into() } else { join(&clamped) });
    report.set_meta("seconds", format!("{:.3}", start.elapsed().as_secs_f64()));
    Ok(report)
}

/// Method name of the `trees`-tree prefix of `method` in forest sweeps.
pub fn forest_sweep_method(method: &str, trees: usize) -> String {
    format!("{method}@T{trees}")
}

/// k-NN accuracy of the forests made of the first `tree_counts[i]` trees of
/// a single forest grown with the largest count. The first T trees of a
/// forest are exactly the forest grown with T trees and the same seed.
pub fn forest_sweep(
    factory: &RfdFactory,
    data: &Dataset,
    tree_counts: &[usize],
    k_values: &[usize],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let ks = check_k(data, k_values)?;
    let mut counts = tree_counts.to_vec();
    counts.sort_unstable();
    counts.dedup();
    let Some(&max) = counts.last() else {
        return Err(Error::InvalidArgument("no tree counts".into()));
    };
    if counts[0] == 0 {
        return Err(Error::InvalidArgument("tree counts must be positive".into()));
    }
    let start = Instant::now();
    let grown = factory.clone().with_trees(max);
    let name = grown.name();
    let results = for_each_split(data, opts, |s| {
        let model = grown.fit(&s.context(opts.audit.as_ref()))?;
        let rfd = model.as_rfd().expect("rfd factory");
        let mats = rfd_distance_matrices(rfd, s.test.points(), s.train.points(), &counts)?;
        let effective: Vec<usize> = ks.iter().map(|&k| k.min(s.train.len())).collect();
        let per_count: Vec<Vec<f64>> = mats
            .iter()
            .map(|dm| knn_accuracies(dm, s.train.labels(), s.test.labels(), data.class_count(), &effective))
            .collect();
        Ok((s.run, s.fold, per_count))
    })?;
    let mut report = new_report("forest-sweep", KeyKind::K, opts, &name);
    for (ci, &t) in counts.iter().enumerate() {
        let method = forest_sweep_method(&name, t);
        for (run, fold, per_count) in &results {
            for (&k, &value) in ks.iter().zip(&per_count[ci]) {
                report.push(Cell { method: method.clone(), run: *run, fold: *fold, key: k, value })?;
            }
        }
    }
    report.set_meta("tree_counts", join(&counts));
    report.set_meta("k_grid", join(&ks));
    report.set_meta("seconds", format!("{:.3}", start.elapsed().as_secs_f64()));
    Ok(report)
}

/// Per-class precision of the `top_k` nearest training points of each test
/// point. Every class needs more than `top_k` members in every training
/// partition.
pub fn retrieval_precision(
    factory: &dyn ModelFactory,
    data: &Dataset,
    top_k: usize,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if top_k == 0 {
        return Err(Error::KOutOfRange { k: 0, max: data.smallest_class() });
    }
    let start = Instant::now();
    let name = factory.name();
    let classes = data.class_count();
    let results = for_each_split(data, opts, |s| {
        let sizes = s.train.class_sizes();
        for c in 0..classes {
            let size = sizes.get(c).copied().unwrap_or(0);
            if size <= top_k {
                return Err(Error::ClassTooSmall { class: c, size, top_k });
            }
        }
        let model = factory.fit(&s.context(opts.audit.as_ref()))?;
        let dm = distance_matrix(&model, s.test.points(), s.train.points())?;
        let gallery = s.train.labels();
        let precisions: Vec<f64> = (0..dm.rows())
            .into_par_iter()
            .map(|q| {
                let own = s.test.label(q);
                let order = neighbor_order(dm.row(q));
                order[..top_k].iter().filter(|&&g| gallery[g as usize] == own).count() as f64 / top_k as f64
            })
            .collect();
        let mut sums = vec![(0.0, 0usize); classes];
        for (q, p) in precisions.into_iter().enumerate() {
            let e = &mut sums[s.test.label(q)];
            e.0 += p;
            e.1 += 1;
        }
        Ok((s.run, s.fold, sums))
    })?;
    let mut report = new_report("retrieval", KeyKind::Class, opts, &name);
    for (run, fold, sums) in results {
        for (class, (sum, n)) in sums.into_iter().enumerate() {
            if n > 0 {
                report.push(Cell { method: name.clone(), run, fold, key: class, value: (sum / n as f64).min(1.0) })?;
            }
        }
    }
    report.set_meta("top_k", top_k);
    report.set_meta("classes", join(data.class_names()));
    report.set_meta("seconds", format!("{:.3}", start.elapsed().as_secs_f64()));
    Ok(report)
}
