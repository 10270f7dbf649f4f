use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rfd_core::constraints::ConstraintSet;
use rfd_core::dataset::{load_csv, swiss_roll, Dataset, Standardizer};
use rfd_core::eval::{
    fixed_k_error, forest_sweep, forest_sweep_method, k_grid, knn_sweep, retrieval_precision, ConstraintBudget,
    EuclideanFactory, EvalOptions, EvalReport, MahalanobisFactory, ModelFactory, RfdFactory,
};
use rfd_core::forest::ForestParams;
use rfd_core::metric::{fit_mahalanobis_cov, CovarianceWeight, DistanceModel, SavedModel};
use rfd_core::seed;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<rfd_core::Error> for CliError {
    fn from(e: rfd_core::Error) -> Self {
        if e.is_usage() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn with_path(path: &Path, e: rfd_core::Error) -> CliError {
    match CliError::from(e) {
        CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
        CliError::Runtime(m) => CliError::Runtime(format!("{}: {m}", path.display())),
    }
}

/// The resolved configuration of a run, embedded in everything it writes.
fn run_config(command: &str, args: &impl Serialize, resolved: Value, threads: Option<usize>) -> String {
    json!({
        "tool": "rfd",
        "version": rfd_core::VERSION,
        "command": command,
        "threads": threads,
        "args": args,
        "resolved": resolved,
    })
    .to_string()
}

fn load(data: &DataArgs) -> Result<Dataset> {
    load_csv(&data.data, data.header.on(), data.label).map_err(|e| with_path(&data.data, e))
}

fn dataset_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
}

fn forest_params(args: &ForestArgs, default_trees: usize) -> Result<ForestParams> {
    let params = ForestParams {
        tree_count: args.trees.unwrap_or(default_trees),
        max_depth: args.max_depth,
        min_leaf: args.min_leaf,
        mtry: args.mtry,
        bootstrap: args.bootstrap.on(),
        seed: 0,
    };
    if params.tree_count == 0 {
        return Err(usage("--trees must be at least 1"));
    }
    if params.min_leaf == 0 {
        return Err(usage("--min-leaf must be at least 1"));
    }
    if params.mtry == Some(0) {
        return Err(usage("--mtry must be at least 1"));
    }
    if params.max_depth == Some(0) {
        return Err(usage("--max-depth must be at least 1"));
    }
    Ok(params)
}

fn budget(args: &ConstraintArgs, default: ConstraintBudget) -> Result<ConstraintBudget> {
    let per_class = args.pos_per_class.is_some() || args.neg_per_class.is_some();
    let fraction = args.pos_frac.is_some() || args.neg_frac.is_some();
    let b = match (per_class, fraction) {
        (true, true) => return Err(usage("per-class counts and fractions cannot be combined")),
        (true, false) => {
            let (dp, dn) = match default {
                ConstraintBudget::PerClass { positive, negative } => (positive, negative),
                ConstraintBudget::Fraction { .. } => (1000, 1000),
            };
            ConstraintBudget::PerClass {
                positive: args.pos_per_class.unwrap_or(dp),
                negative: args.neg_per_class.unwrap_or(dn),
            }
        }
        (false, true) => {
            let (dp, dn) = match default {
                ConstraintBudget::Fraction { positive, negative } => (positive, negative),
                ConstraintBudget::PerClass { .. } => (0.01, 0.01),
            };
            ConstraintBudget::Fraction { positive: args.pos_frac.unwrap_or(dp), negative: args.neg_frac.unwrap_or(dn) }
        }
        (false, false) => default,
    };
    match b {
        ConstraintBudget::PerClass { positive, negative } if positive == 0 || negative == 0 => {
            Err(usage("--pos-per-class and --neg-per-class must be at least 1"))
        }
        ConstraintBudget::Fraction { positive, negative }
            if !(positive > 0.0 && positive <= 1.0 && negative > 0.0 && negative <= 1.0) =>
        {
            Err(usage("--pos-frac and --neg-frac must lie in (0, 1]"))
        }
        b => Ok(b),
    }
}

fn budget_json(b: &ConstraintBudget) -> Value {
    match *b {
        ConstraintBudget::PerClass { positive, negative } => {
            json!({ "pos_per_class": positive, "neg_per_class": negative })
        }
        ConstraintBudget::Fraction { positive, negative } => json!({ "pos_frac": positive, "neg_frac": negative }),
    }
}

fn params_json(p: &ForestParams) -> Value {
    json!({
        "trees": p.tree_count,
        "max_depth": p.max_depth,
        "min_leaf": p.min_leaf,
        "mtry": p.mtry,
        "bootstrap": p.bootstrap,
    })
}

const METHODS: [&str; 5] = ["rfd+p", "rfd-p", "euclidean", "mahalanobis", "mahalanobis-cov"];

fn factory(method: &str, budget: ConstraintBudget, params: &ForestParams) -> Result<Box<dyn ModelFactory>> {
    Ok(match method {
        "rfd+p" | "rfd-p" => {
            Box::new(RfdFactory { budget, include_position: method == "rfd+p", params: params.clone() })
        }
        "euclidean" => Box::new(EuclideanFactory),
        "mahalanobis" => Box::new(MahalanobisFactory { weighting: CovarianceWeight::Inverse }),
        "mahalanobis-cov" => Box::new(MahalanobisFactory { weighting: CovarianceWeight::Covariance }),
        other => return Err(usage(format!("unknown method {other:?}; expected one of {}", METHODS.join(", ")))),
    })
}

fn methods(args: &Option<Vec<String>>, default: &[&str]) -> Result<Vec<String>> {
    let list: Vec<String> = match args {
        Some(m) => m.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        None => default.iter().map(|s| s.to_string()).collect(),
    };
    if list.is_empty() {
        return Err(usage("--methods is empty"));
    }
    for m in &list {
        if !METHODS.contains(&m.as_str()) {
            return Err(usage(format!("unknown method {m:?}; expected one of {}", METHODS.join(", "))));
        }
    }
    Ok(list)
}

fn count(v: Option<usize>, default: usize, name: &str, min: usize) -> Result<usize> {
    let v = v.unwrap_or(default);
    if v < min {
        return Err(usage(format!("--{name} must be at least {min}")));
    }
    Ok(v)
}

/// Common state of the benchmark commands, validated before any work.
struct Bench {
    data: Dataset,
    methods: Vec<String>,
    budget: ConstraintBudget,
    params: ForestParams,
    opts: EvalOptions,
}

struct BenchDefaults<'a> {
    methods: &'a [&'a str],
    folds: usize,
    runs: usize,
    trees: usize,
    budget: ConstraintBudget,
}

fn bench(args: &EvalArgs, d: BenchDefaults<'_>) -> Result<Bench> {
    let methods = methods(&args.methods, d.methods)?;
    let folds = count(args.folds, d.folds, "folds", 2)?;
    let runs = count(args.runs, d.runs, "runs", 1)?;
    let params = forest_params(&args.forest, d.trees)?;
    let budget = budget(&args.constraints, d.budget)?;
    let data = load(&args.data)?;
    if folds > data.len() {
        return Err(usage(format!("{folds} folds exceed {} samples", data.len())));
    }
    let opts = EvalOptions {
        folds,
        runs,
        seed: args.seed,
        normalize: args.normalize.on(),
        dataset: dataset_id(&args.data.data),
        metadata: Vec::new(),
        audit: None,
    };
    Ok(Bench { data, methods, budget, params, opts })
}

impl Bench {
    fn resolved(&self) -> Value {
        json!({
            "dataset": self.opts.dataset,
            "samples": self.data.len(),
            "features": self.data.dim(),
            "classes": self.data.class_names(),
            "methods": self.methods,
            "folds": self.opts.folds,
            "runs": self.opts.runs,
            "seed": self.opts.seed,
            "normalize": self.opts.normalize,
            "constraints": budget_json(&self.budget),
            "forest": params_json(&self.params),
        })
    }

    fn stamp(&mut self, command: &str, args: &impl Serialize, extra: Value, threads: Option<usize>) {
        let mut resolved = self.resolved();
        if let (Value::Object(r), Value::Object(e)) = (&mut resolved, extra) {
            r.extend(e);
        }
        self.opts.metadata = vec![("config".into(), run_config(command, args, resolved, threads))];
    }
}

fn resolve_grid(grid: &KGridArgs, data: &Dataset) -> Result<Vec<usize>> {
    let smallest = data.smallest_class();
    let max = grid.k_max.unwrap_or(smallest);
    if grid.k_step == 0 {
        return Err(usage("--k-step must be at least 1"));
    }
    if max == 0 || max > smallest {
        return Err(usage(format!("--k-max {max} is outside [1, {smallest}] (smallest class)")));
    }
    Ok(k_grid(grid.k_step, max)?)
}

fn save_report(report: &EvalReport, out: &Path, stem: &str) -> Result<()> {
    report.save(out, stem).map_err(|e| with_path(out, e))?;
    eprintln!("wrote {}", out.join(format!("{stem}.csv")).display());
    eprintln!("wrote {}", out.join(format!("{stem}.summary.csv")).display());
    Ok(())
}

fn print_summary(report: &EvalReport) {
    println!("method,{},mean,std,n", report.key_kind().column());
    for r in report.summary() {
        println!("{},{},{:.4},{:.4},{}", r.method, r.key, r.mean, r.std, r.n);
    }
}

pub fn train(args: &TrainArgs, threads: Option<usize>) -> Result<()> {
    let params = forest_params(&args.forest, 400)?;
    let budget = budget(&args.constraints, ConstraintBudget::PerClass { positive: 1000, negative: 1000 })?;
    let raw = load(&args.data)?;
    let start = Instant::now();
    let (data, scaler) = if args.normalize.on() {
        let s = Standardizer::fit(&raw);
        (s.transform(&raw)?, Some(s))
    } else {
        (raw, None)
    };

    let mut log = serde_json::Map::new();
    let model = match args.method {
        TrainMethod::Rfd => {
            let constraints: ConstraintSet = budget.sample(&data, seed::derive(args.seed, 1))?;
            let params = ForestParams { seed: seed::derive(args.seed, 2), ..params.clone() };
            let model = DistanceModel::train_rfd(&constraints, &data, args.position.on(), &params)?;
            let stats = model.as_rfd().expect("rfd model").forest().stats();
            log.insert(
                "constraints".into(),
                json!({
                    "similar": constraints.similar_count(),
                    "dissimilar": constraints.dissimilar_count(),
                    "notes": constraints.notes(),
                }),
            );
            log.insert(
                "forest".into(),
                json!({
                    "trees": stats.trees,
                    "nodes": stats.nodes,
                    "leaves": stats.leaves,
                    "max_depth": stats.max_depth,
                    "mean_depth": stats.mean_depth,
                }),
            );
            eprintln!(
                "trained {} trees ({} nodes, mean depth {:.1}) on {} similar + {} dissimilar pairs",
                stats.trees,
                stats.nodes,
                stats.mean_depth,
                constraints.similar_count(),
                constraints.dissimilar_count()
            );
            model
        }
        TrainMethod::Euclidean => DistanceModel::euclidean(data.dim()),
        TrainMethod::Mahalanobis => fit_mahalanobis_cov(&data)?,
    };
    let seconds = start.elapsed().as_secs_f64();

    let resolved = json!({
        "dataset": dataset_id(&args.data.data),
        "samples": data.len(),
        "features": data.dim(),
        "classes": data.class_names(),
        "method": args.method,
        "position": args.position.on(),
        "normalize": args.normalize.on(),
        "seed": args.seed,
        "constraints": budget_json(&budget),
        "forest": params_json(&params),
    });
    let config = run_config("train", args, resolved, threads);
    let saved = SavedModel { model, scaler, metadata: config.clone() };
    saved.save(&args.model).map_err(|e| with_path(&args.model, e))?;

    log.insert("config".into(), serde_json::from_str(&config).expect("valid json"));
    log.insert("seconds".into(), json!(seconds));
    let log_path = args.model.with_extension("log.json");
    fs::write(&log_path, serde_json::to_string_pretty(&Value::Object(log)).expect("serializable") + "\n")?;
    eprintln!("wrote {} and {} ({seconds:.2}s)", args.model.display(), log_path.display());
    Ok(())
}

fn parse_point(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            let x: f64 = v.trim().parse().map_err(|_| usage(format!("cannot parse {v:?} as a number")))?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(usage(format!("{v:?} is not finite")))
            }
        })
        .collect()
}

pub fn dist(args: &DistArgs) -> Result<()> {
    let saved = SavedModel::load(&args.model).map_err(|e| with_path(&args.model, e))?;
    let (a, b) = match (&args.data, &args.a, &args.b) {
        (Some(path), _, _) => {
            let data = load_csv(path, args.header.on(), args.label).map_err(|e| with_path(path, e))?;
            let (i, j) = (args.i.expect("clap requires --i"), args.j.expect("clap requires --j"));
            for idx in [i, j] {
                if idx >= data.len() {
                    return Err(usage(format!("row {idx} is outside the {} rows of {}", data.len(), path.display())));
                }
            }
            (data.row(i).to_vec(), data.row(j).to_vec())
        }
        (None, Some(a), Some(b)) => (parse_point(a)?, parse_point(b)?),
        _ => return Err(usage("give either --data with --i and --j, or --a and --b")),
    };
    let d = saved.distance(&a, &b)?;
    println!("{d:.6}");
    Ok(())
}

pub fn bench_knn(args: &KnnArgs, threads: Option<usize>) -> Result<()> {
    let mut b = bench(
        &args.eval,
        BenchDefaults {
            methods: &["rfd+p", "rfd-p", "euclidean", "mahalanobis"],
            folds: 5,
            runs: 1,
            trees: 400,
            budget: ConstraintBudget::PerClass { positive: 1000, negative: 1000 },
        },
    )?;
    let ks = resolve_grid(&args.grid, &b.data)?;
    let factories =
        b.methods.iter().map(|m| factory(m, b.budget, &b.params)).collect::<Result<Vec<_>>>()?;
    b.stamp("bench-knn", args, json!({ "k_grid": ks }), threads);
    let mut report: Option<EvalReport> = None;
    for f in &factories {
        eprintln!("evaluating {} on {}", f.name(), b.opts.dataset);
        let r = knn_sweep(f.as_ref(), &b.data, &ks, &b.opts)?;
        match &mut report {
            None => report = Some(r),
            Some(all) => all.merge(r)?,
        }
    }
    let report = report.expect("at least one method");
    save_report(&report, &args.eval.out, "knn")?;
    print_summary(&report);
    Ok(())
}

pub fn bench_fixed_k(args: &FixedKArgs, threads: Option<usize>) -> Result<()> {
    let mut b = bench(
        &args.eval,
        BenchDefaults {
            methods: &["rfd+p"],
            folds: 3,
            runs: 10,
            trees: 1000,
            budget: ConstraintBudget::Fraction { positive: 0.01, negative: 0.01 },
        },
    )?;
    let smallest = b.data.smallest_class();
    if args.k == 0 || args.k > smallest {
        return Err(usage(format!("--k {} is outside [1, {smallest}] (smallest class)", args.k)));
    }
    let factories =
        b.methods.iter().map(|m| factory(m, b.budget, &b.params)).collect::<Result<Vec<_>>>()?;
    b.stamp("bench-fixed-k", args, json!({ "k": args.k }), threads);
    let mut report: Option<EvalReport> = None;
    for f in &factories {
        eprintln!("evaluating {} on {}", f.name(), b.opts.dataset);
        let r = fixed_k_error(f.as_ref(), &b.data, args.k, &b.opts)?;
        match &mut report {
            None => report = Some(r),
            Some(all) => all.merge(r)?,
        }
    }
    let report = report.expect("at least one method");
    save_report(&report, &args.eval.out, "fixed_k")?;
    print_summary(&report);
    Ok(())
}

pub fn bench_retrieval(args: &RetrievalArgs, threads: Option<usize>) -> Result<()> {
    let mut b = bench(
        &args.eval,
        BenchDefaults {
            methods: &["rfd+p", "euclidean"],
            folds: 5,
            runs: 10,
            trees: 1500,
            budget: ConstraintBudget::PerClass { positive: 1000, negative: 1000 },
        },
    )?;
    if args.top_k == 0 {
        return Err(usage("--top-k must be at least 1"));
    }
    let factories =
        b.methods.iter().map(|m| factory(m, b.budget, &b.params)).collect::<Result<Vec<_>>>()?;
    b.stamp("bench-retrieval", args, json!({ "top_k": args.top_k }), threads);
    let mut report: Option<EvalReport> = None;
    for f in &factories {
        eprintln!("evaluating {} on {}", f.name(), b.opts.dataset);
        let r = retrieval_precision(f.as_ref(), &b.data, args.top_k, &b.opts)?;
        match &mut report {
            None => report = Some(r),
            Some(all) => all.merge(r)?,
        }
    }
    let report = report.expect("at least one method");
    save_report(&report, &args.eval.out, "retrieval")?;
    print_summary(&report);
    Ok(())
}

pub fn forest_sweep_cmd(args: &SweepArgs, threads: Option<usize>) -> Result<()> {
    let mut b = bench(
        &args.eval,
        BenchDefaults {
            methods: &["rfd+p", "rfd-p"],
            folds: 5,
            runs: 10,
            trees: 400,
            budget: ConstraintBudget::PerClass { positive: 1000, negative: 1000 },
        },
    )?;
    if let Some(m) = b.methods.iter().find(|m| !m.starts_with("rfd")) {
        return Err(usage(format!("forest-sweep only evaluates rfd methods, got {m:?}")));
    }
    let mut counts = args.tree_counts.clone();
    counts.sort_unstable();
    counts.dedup();
    if counts.is_empty() || counts[0] == 0 {
        return Err(usage("--tree-counts must be positive"));
    }
    let ks = resolve_grid(&args.grid, &b.data)?;
    b.stamp("forest-sweep", args, json!({ "k_grid": ks, "tree_counts": counts }), threads);
    let mut report: Option<EvalReport> = None;
    for m in &b.methods {
        let f = RfdFactory { budget: b.budget, include_position: m == "rfd+p", params: b.params.clone() };
        eprintln!("sweeping {m} on {}", b.opts.dataset);
        let r = forest_sweep(&f, &b.data, &counts, &ks, &b.opts)?;
        match &mut report {
            None => report = Some(r),
            Some(all) => all.merge(r)?,
        }
    }
    let report = report.expect("at least one method");
    save_report(&report, &args.eval.out, "forest_sweep")?;
    println!("method,trees,accuracy");
    for m in &b.methods {
        for &t in &counts {
            let acc = report.method_mean(&forest_sweep_method(m, t)).expect("swept");
            println!("{m},{t},{acc:.4}");
        }
    }
    Ok(())
}

pub fn gen_swissroll(args: &SwissArgs, threads: Option<usize>) -> Result<()> {
    if args.n < 3 {
        return Err(usage("--n must be at least 3"));
    }
    if !(args.noise >= 0.0 && args.noise.is_finite()) {
        return Err(usage("--noise must be a finite non-negative number"));
    }
    let data = swiss_roll(args.n, args.noise, args.seed)?;
    let config = run_config("gen-swissroll", args, json!({ "rows": data.len() }), threads);
    let mut buf = Vec::new();
    use std::io::Write;
    writeln!(buf, "# config: {config}")?;
    data.write_csv(&mut buf)?;
    fs::write(&args.out, buf).map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;
    eprintln!("wrote {} rows to {}", data.len(), args.out.display());
    Ok(())
}
