//! Randomized invariants of the distance models and the evaluation harness.

use std::sync::{Arc, Mutex, OnceLock};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rfd_core::constraints::sample_per_class;
use rfd_core::dataset::{swiss_roll, Dataset};
use rfd_core::eval::{
    fixed_k_error, knn_predict, knn_sweep, Audit, AuditHook, ConstraintBudget, EvalOptions, RfdFactory,
};
use rfd_core::forest::{Forest, ForestParams};
use rfd_core::metric::{distance_matrix, fit_mahalanobis_cov, rfd_distance, DistanceModel, Points, SavedModel};
use rfd_core::pairmap::map_pair;

use super::{ensure, Check};

pub struct Fixture {
    pub data: Dataset,
    pub with_position: DistanceModel,
    pub without_position: DistanceModel,
    pub mahalanobis: DistanceModel,
}

pub const FIXTURE_TREES: usize = 60;

pub fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let data = swiss_roll(300, 1.0, 21).unwrap();
        let cs = sample_per_class(&data, 300, 300, 22).unwrap();
        let params = ForestParams { tree_count: FIXTURE_TREES, seed: 23, ..Default::default() };
        Fixture {
            with_position: DistanceModel::train_rfd(&cs, &data, true, &params).unwrap(),
            without_position: DistanceModel::train_rfd(&cs, &data, false, &params).unwrap(),
            mahalanobis: fit_mahalanobis_cov(&data).unwrap(),
            data,
        }
    })
}

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Check {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-15.0f64..15.0, 3)
}

/// Multiples of 1/1024 in [-16, 16]: sums of two stay exact.
fn dyadic_point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-16384i32..=16384).prop_map(|k| k as f64 / 1024.0), 3)
}

pub fn symmetry_and_range() -> Check {
    let f = fixture();
    run(1000, (point(), point()), |(a, b)| {
        for m in [&f.with_position, &f.without_position] {
            let (ab, ba) = (rfd_distance(m, &a, &b).unwrap(), rfd_distance(m, &b, &a).unwrap());
            prop_assert_eq!(ab.to_bits(), ba.to_bits());
            prop_assert!((0.0..=1.0).contains(&ab));
        }
        for m in [&DistanceModel::euclidean(3), &f.mahalanobis] {
            let (ab, ba) = (m.distance(&a, &b).unwrap(), m.distance(&b, &a).unwrap());
            prop_assert_eq!(ab.to_bits(), ba.to_bits());
            prop_assert!(ab >= 0.0);
        }
        Ok(())
    })
}

pub fn translation_invariance() -> Check {
    let m = &fixture().without_position;
    run(1000, (dyadic_point(), dyadic_point(), dyadic_point()), |(a, b, c)| {
        let shift = |x: &[f64]| x.iter().zip(&c).map(|(v, d)| v + d).collect::<Vec<f64>>();
        let moved = rfd_distance(m, &shift(&a), &shift(&b)).unwrap();
        prop_assert_eq!(moved.to_bits(), rfd_distance(m, &a, &b).unwrap().to_bits());
        Ok(())
    })
}

pub fn quantization() -> Check {
    let f = fixture();
    run(1000, (point(), point()), |(a, b)| {
        for (m, pos) in [(&f.with_position, true), (&f.without_position, false)] {
            let forest = m.as_rfd().unwrap().forest();
            let t = forest.tree_count() as f64;
            let d = rfd_distance(m, &a, &b).unwrap();
            let votes = forest.vote_count(map_pair(&a, &b, pos).unwrap().values());
            prop_assert_eq!(d, votes as f64 / t);
            prop_assert_eq!(((d * t).round() / t).to_bits(), d.to_bits());
        }
        Ok(())
    })
}

/// Trains and evaluates inside a pool of `threads` workers.
fn train_in_pool(threads: usize) -> (Vec<u8>, Vec<f64>) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let data = swiss_roll(150, 0.8, 5).unwrap();
        let cs = sample_per_class(&data, 150, 150, 6).unwrap();
        let params = ForestParams { tree_count: 24, seed: 7, ..Default::default() };
        let model = DistanceModel::train_rfd(&cs, &data, true, &params).unwrap();
        let dm = distance_matrix(&model, data.points(), data.points()).unwrap();
        (model.as_rfd().unwrap().forest().to_bytes(), dm.values().to_vec())
    })
}

pub fn thread_determinism() -> Check {
    let (bytes1, dm1) = train_in_pool(1);
    for threads in [2, 4] {
        let (bytes, dm) = train_in_pool(threads);
        ensure(bytes == bytes1, || format!("forest bytes differ between 1 and {threads} threads"))?;
        ensure(
            dm.iter().zip(&dm1).all(|(a, b)| a.to_bits() == b.to_bits()),
            || format!("distance matrix differs between 1 and {threads} threads"),
        )?;
    }
    Ok(())
}

pub fn matrix_matches_elementwise() -> Check {
    let f = fixture();
    // more gallery points than one evaluation block
    let gallery = swiss_roll(1200, 1.5, 31).unwrap();
    let queries = f.data.subset(&(0..23).collect::<Vec<_>>());
    let models = [&f.with_position, &f.without_position, &f.mahalanobis, &DistanceModel::euclidean(3)];
    for m in models {
        let dm = distance_matrix(m, queries.points(), gallery.points()).map_err(|e| e.to_string())?;
        ensure(dm.rows() == queries.len() && dm.cols() == gallery.len(), || "matrix shape".into())?;
        for q in 0..queries.len() {
            for g in 0..gallery.len() {
                let d = m.distance(queries.row(q), gallery.row(g)).unwrap();
                ensure(d.to_bits() == dm.get(q, g).to_bits(), || {
                    format!("{} entry ({q}, {g}): matrix {} vs direct {d}", m.kind(), dm.get(q, g))
                })?;
            }
        }
    }
    Ok(())
}

pub fn serialization_round_trip() -> Check {
    let f = fixture();
    for m in [&f.with_position, &f.without_position, &f.mahalanobis] {
        let saved = SavedModel { model: m.clone(), scaler: None, metadata: "{}".into() };
        let bytes = saved.to_bytes().map_err(|e| e.to_string())?;
        let back = SavedModel::from_bytes(&bytes).map_err(|e| e.to_string())?;
        ensure(back == saved, || format!("{} model changed in a round trip", m.kind()))?;
        ensure(back.to_bytes().unwrap() == bytes, || "re-serialized bytes differ".into())?;
        let p = f.data.points();
        let (a, b) = (distance_matrix(m, p, p).unwrap(), distance_matrix(&back.model, p, p).unwrap());
        ensure(
            a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()),
            || "distances changed in a round trip".into(),
        )?;
        if let Some(rfd) = m.as_rfd() {
            let forest_bytes = rfd.forest().to_bytes();
            let forest = Forest::from_bytes(&forest_bytes).map_err(|e| e.to_string())?;
            ensure(&forest == rfd.forest() && forest.to_bytes() == forest_bytes, || "forest round trip".into())?;
        }
    }
    Ok(())
}

pub fn no_leakage() -> Check {
    let data = swiss_roll(120, 0.8, 8).unwrap();
    let calls = Arc::new(Mutex::new(Vec::<String>::new()));
    let sink = calls.clone();
    let hook: AuditHook = Arc::new(move |a: &Audit<'_>| {
        let leaked = a.constraint_indices.iter().find(|i| a.test_indices.binary_search(i).is_ok());
        sink.lock().unwrap().push(match leaked {
            Some(i) => format!("run {} fold {}: test index {i} in constraints", a.run, a.fold),
            None => String::new(),
        });
    });
    let per_class = RfdFactory {
        budget: ConstraintBudget::PerClass { positive: 100, negative: 100 },
        ..RfdFactory::per_class(true)
    }
    .with_trees(10);
    let opts = EvalOptions { folds: 5, runs: 2, seed: 3, normalize: true, audit: Some(hook.clone()), ..Default::default() };
    knn_sweep(&per_class, &data, &[1, 5, 20], &opts).map_err(|e| e.to_string())?;
    let fractional = RfdFactory::fractional(false).with_trees(10);
    let opts = EvalOptions { audit: Some(hook), ..EvalOptions::fixed_k(4) };
    fixed_k_error(&fractional, &data, 11, &opts).map_err(|e| e.to_string())?;

    let calls = calls.lock().unwrap();
    ensure(calls.len() == 10 + 30, || format!("audit hook saw {} fits, expected 40", calls.len()))?;
    match calls.iter().find(|c| !c.is_empty()) {
        Some(c) => Err(c.clone()),
        None => Ok(()),
    }
}

pub fn knn_rank_invariance() -> Check {
    let row = (1usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec((0u32..=20).prop_map(|v| v as f64 / 20.0), n),
            prop::collection::vec(0usize..4, n),
            1..=n,
        )
    });
    let transforms: [fn(f64) -> f64; 4] = [f64::exp, |x| x * x * x + x, |x| (x + 1.0).ln(), |x| 3.0 * x - 7.25];
    run(1000, row, |(dist, labels, k)| {
        let base = knn_predict(&dist, &labels, k).unwrap();
        for t in transforms {
            let moved: Vec<f64> = dist.iter().map(|&d| t(d)).collect();
            prop_assert_eq!(knn_predict(&moved, &labels, k).unwrap(), base);
        }
        Ok(())
    })
}

pub type CheckFn = fn() -> Check;

/// Every property check with its name.
pub fn all() -> Vec<(&'static str, CheckFn)> {
    vec![
        ("symmetry and range", symmetry_and_range),
        ("translation invariance without position", translation_invariance),
        ("vote quantization", quantization),
        ("determinism across thread counts", thread_determinism),
        ("distance matrix vs element-wise oracle", matrix_matches_elementwise),
        ("serialization round trip", serialization_round_trip),
        ("no test-set leakage", no_leakage),
        ("knn rank invariance", knn_rank_invariance),
    ]
}

pub fn points(data: &Dataset) -> Points<'_> {
    data.points()
}
