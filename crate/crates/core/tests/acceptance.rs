//! End-to-end acceptance checks on the bundled datasets.
//!
//! Each test prints one `PASS`/`FAIL` line to stderr (uncaptured) with the
//! measured numbers, then asserts. All runs use the fixed seed below.

mod common;

use std::io::Write;
use std::time::Instant;

use common::{oracle, props, uci};
use rfd_core::dataset::{swiss_roll, SWISS_ROLL_NOISE};
use rfd_core::eval::{
    default_k_grid, fixed_k_error, forest_sweep, forest_sweep_method, knn_sweep, EuclideanFactory, EvalOptions,
    ModelFactory, RfdFactory, FIXED_K,
};

const SEED: u64 = 1;

fn verdict(id: u32, name: &str, pass: bool, detail: &str, started: Instant) {
    let line = format!(
        "[acceptance] {} criterion {id} ({name}): {detail} [{:.0}s]",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    // written straight to the stream so the harness does not capture it
    let _ = writeln!(std::io::stderr(), "{line}");
    assert!(pass, "{line}");
}

fn fixed_k(id: u32, dataset: &str, limit: f64, reference: &str) {
    let started = Instant::now();
    let data = uci(dataset);
    let opts = EvalOptions { dataset: dataset.into(), ..EvalOptions::fixed_k(SEED) };
    let report = fixed_k_error(&RfdFactory::fractional(true), &data, FIXED_K, &opts).unwrap();
    let s = report.summary_row("rfd+p", FIXED_K).unwrap();
    verdict(
        id,
        &format!("{dataset} fixed-k error"),
        s.mean <= limit,
        &format!("error {:.3} ± {:.3} over {} runs (limit {limit}, reference {reference})", s.mean, s.std, s.n),
        started,
    );
}

#[test]
fn criterion_1_diabetes_fixed_k_error() {
    fixed_k(1, "diabetes", 0.30, "0.241 ± 0.028");
}

#[test]
fn criterion_2_balance_fixed_k_error() {
    fixed_k(2, "balance", 0.17, "0.120 ± 0.024");
}

#[test]
fn criterion_3_swiss_roll_large_k() {
    let started = Instant::now();
    let data = swiss_roll(900, SWISS_ROLL_NOISE, SEED).unwrap();
    let opts = EvalOptions { dataset: "swissroll".into(), seed: SEED, ..Default::default() };
    let ks = [5, 100];
    let rfd = knn_sweep(&RfdFactory::per_class(true), &data, &ks, &opts).unwrap();
    let euc = knn_sweep(&EuclideanFactory, &data, &ks, &opts).unwrap();
    let (r5, r100) = (rfd.mean("rfd+p", 5).unwrap(), rfd.mean("rfd+p", 100).unwrap());
    let (e5, e100) = (euc.mean("euclidean", 5).unwrap(), euc.mean("euclidean", 100).unwrap());
    let pass = r100 - e100 >= 0.20 && (r100 - r5).abs() <= 0.05;
    verdict(
        3,
        "swiss roll accuracy at large k",
        pass,
        &format!(
            "rfd+p k=5 {r5:.3} k=100 {r100:.3}; euclidean k=5 {e5:.3} k=100 {e100:.3}; \
             gap at k=100 {:.3} (need >= 0.20), rfd+p drift {:.3} (need <= 0.05)",
            r100 - e100,
            (r100 - r5).abs()
        ),
        started,
    );
}

#[test]
fn criterion_4_forest_size_trend() {
    let started = Instant::now();
    let data = uci("diabetes");
    let ks = default_k_grid(&data);
    let opts = EvalOptions { dataset: "diabetes".into(), seed: SEED, runs: 10, ..Default::default() };
    let mut acc = Vec::new();
    for pos in [true, false] {
        let f = RfdFactory::per_class(pos);
        let report = forest_sweep(&f, &data, &[10, 100, 500], &ks, &opts).unwrap();
        let at = |t| report.method_mean(&forest_sweep_method(&f.name(), t)).unwrap();
        acc.push((f.name(), at(10), at(100), at(500)));
    }
    let (p, m) = (&acc[0], &acc[1]);
    let pass = p.2 > p.1 && m.2 > m.1 && p.3 >= p.2 - 0.005;
    let detail = acc
        .iter()
        .map(|(n, a, b, c)| format!("{n} T10 {a:.4} T100 {b:.4} T500 {c:.4}"))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(4, "diabetes forest size", pass, &format!("mean accuracy over k grid: {detail}"), started);
}

#[test]
fn criterion_5_position_ablation() {
    let started = Instant::now();
    let mut wins = 0;
    let mut detail = Vec::new();
    for name in ["diabetes", "segmentation", "sonar"] {
        let data = uci(name);
        let opts = EvalOptions { dataset: name.into(), seed: SEED, ..Default::default() };
        let mut acc = [0.0; 2];
        for (slot, pos) in [true, false].into_iter().enumerate() {
            let f = RfdFactory::per_class(pos);
            acc[slot] = knn_sweep(&f, &data, &[20], &opts).unwrap().mean(&f.name(), 20).unwrap();
        }
        wins += usize::from(acc[0] >= acc[1]);
        detail.push(format!("{name} +P {:.3} -P {:.3}", acc[0], acc[1]));
    }
    verdict(
        5,
        "position ablation at k=20",
        wins >= 2,
        &format!("{}; +P >= -P on {wins} of 3 (need 2)", detail.join(", ")),
        started,
    );
}

#[test]
fn criterion_6_property_suite() {
    let started = Instant::now();
    let mut failures = Vec::new();
    for (name, check) in props::all() {
        if let Err(e) = check() {
            failures.push(format!("{name}: {e}"));
        }
    }
    let seconds = started.elapsed().as_secs_f64();
    let pass = failures.is_empty() && seconds < 60.0;
    let detail = if failures.is_empty() {
        format!("{} property checks hold, {seconds:.1}s (limit 60s)", props::all().len())
    } else {
        failures.join("; ")
    };
    verdict(6, "property suite", pass, &detail, started);
}

#[test]
fn criterion_7_small_forest_oracle() {
    let started = Instant::now();
    let result = oracle::small_forests_match(10, 1000);
    let detail = match &result {
        Ok(()) => "10 forests (T <= 3, depth <= 2) x 1000 feature vectors and 1000 point pairs match exactly".into(),
        Err(e) => e.clone(),
    };
    verdict(7, "small-forest oracle", result.is_ok(), &detail, started);
}
