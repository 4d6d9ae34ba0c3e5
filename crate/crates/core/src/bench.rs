//! Accuracy and throughput harness.
//!
//! A bench run evaluates every `(method, m, trial)` cell on in-memory
//! relations. Trial `t` uses the hash seed [`trial_seed`]`(seed, t)` for every
//! method and width, so any row can be recomputed from the base seed and its
//! trial index. Rows always come out in `(method, m, trial)` order.

use std::io::Write;
use std::time::Instant;

use crate::ams::ams_estimate;
use crate::error::{Error, Result};
use crate::estimator::{estimate_with, median, EstimateOptions, Kernel};
use crate::graph::{traversal_plan, JoinGraph, PlanTree};
use crate::hashing::mix64;
use crate::metrics::{abs_rel_error, loglog_slope, percentile, q_error};
use crate::oracle::exact_cardinality;
use crate::par::{self, Execution};
use crate::sketch::{build_sketch, Method, RelationSketch, SketchConfig, TupleUpdate};

/// First line of every results file; bump the version when columns change.
pub const CSV_SCHEMA: &str = "# jsk bench results v1";

pub const CSV_COLUMNS: [&str; 14] = [
    "kind",
    "method",
    "m",
    "trial",
    "seed",
    "estimate",
    "exact",
    "abs_rel_error",
    "q_error",
    "sketch_ms",
    "infer_ms",
    "median_are",
    "p95_are",
    "slope",
];

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub widths: Vec<usize>,
    pub trials: usize,
    pub reps: usize,
    pub seed: u64,
    /// Scheduling of the trial pool.
    pub execution: Execution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub method: Method,
    pub m: usize,
    pub trial: usize,
    pub seed: u64,
    pub estimate: f64,
    pub exact: f64,
    pub abs_rel_error: f64,
    pub q_error: f64,
    pub sketch_ms: f64,
    pub infer_ms: f64,
}

/// Error distribution of one `(method, m)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub m: usize,
    pub median_are: f64,
    pub p95_are: f64,
}

/// Least-squares slope of `ln(median ARE)` against `ln m` for one method;
/// `None` when fewer than two widths have a non-zero median error.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeRow {
    pub method: Method,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub exact: f64,
    pub trials: Vec<TrialRow>,
    pub summaries: Vec<SummaryRow>,
    pub slopes: Vec<SlopeRow>,
}

pub fn trial_seed(base: u64, trial: usize) -> u64 {
    mix64(base ^ mix64(trial as u64))
}

/// Outcome of sketching and estimating once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub estimate: f64,
    pub sketch_ms: f64,
    pub infer_ms: f64,
}

/// Sketches every relation under `config` and estimates the query.
pub fn run_trial(
    relations: &[Vec<TupleUpdate>],
    graph: &JoinGraph,
    plan: &PlanTree,
    config: SketchConfig,
) -> Result<TrialOutcome> {
    let start = Instant::now();
    let hashes = config.hashes(graph)?;
    let sketches = relations
        .iter()
        .enumerate()
        .map(|(k, r)| build_sketch(r, graph, &hashes, config, k))
        .collect::<Result<Vec<RelationSketch>>>()?;
    let sketch_ms = start.elapsed().as_secs_f64() * 1e3;
    let report = match config.method {
        Method::Conv => estimate_with(
            &sketches,
            graph,
            plan,
            EstimateOptions {
                kernel: Kernel::Auto,
                execution: Execution::Sequential,
            },
        )?,
        Method::Ams => ams_estimate(&sketches, graph)?,
    };
    Ok(TrialOutcome {
        estimate: report.estimate,
        sketch_ms,
        infer_ms: report.inference_ms,
    })
}

pub fn run_bench(relations: &[Vec<TupleUpdate>], graph: &JoinGraph, config: &BenchConfig) -> Result<BenchReport> {
    if config.trials == 0 || config.widths.is_empty() || config.methods.is_empty() {
        return Err(Error::InvalidArgument(
            "bench needs at least one method, width and trial".into(),
        ));
    }
    let exact = exact_cardinality(relations, graph)?;
    let plan = traversal_plan(graph, None)?;
    let mut cells = Vec::new();
    for &method in &config.methods {
        for &m in &config.widths {
            for trial in 0..config.trials {
                cells.push((method, m, trial));
            }
        }
    }
    let rows = par::map_slice(config.execution, &cells, |&(method, m, trial)| {
        let seed = trial_seed(config.seed, trial);
        let sketch = SketchConfig::new(m, config.reps, seed, method)?;
        let out = run_trial(relations, graph, &plan, sketch)?;
        Ok(TrialRow {
            method,
            m,
            trial,
            seed,
            estimate: out.estimate,
            exact,
            abs_rel_error: abs_rel_error(exact, out.estimate),
            q_error: q_error(exact, out.estimate),
            sketch_ms: out.sketch_ms,
            infer_ms: out.infer_ms,
        })
    })
    .into_iter()
    .collect::<Result<Vec<TrialRow>>>()?;

    let (summaries, slopes) = summarize(&rows);
    Ok(BenchReport {
        exact,
        trials: rows,
        summaries,
        slopes,
    })
}

/// Summary and slope rows recomputed from trial rows.
pub fn summarize(rows: &[TrialRow]) -> (Vec<SummaryRow>, Vec<SlopeRow>) {
    let mut summaries: Vec<SummaryRow> = Vec::new();
    let mut keys: Vec<(Method, usize)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.method, r.m)) {
            keys.push((r.method, r.m));
        }
    }
    for (method, m) in keys {
        let errors: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == method && r.m == m)
            .map(|r| r.abs_rel_error)
            .collect();
        summaries.push(SummaryRow {
            method,
            m,
            median_are: median(&errors),
            p95_are: percentile(&errors, 95.0),
        });
    }
    let mut methods: Vec<Method> = Vec::new();
    for s in &summaries {
        if !methods.contains(&s.method) {
            methods.push(s.method);
        }
    }
    let slopes = methods
        .into_iter()
        .map(|method| {
            let points: Vec<(f64, f64)> = summaries
                .iter()
                .filter(|s| s.method == method)
                .map(|s| (s.m as f64, s.median_are))
                .collect();
            SlopeRow {
                method,
                slope: loglog_slope(&points),
            }
        })
        .collect();
    (summaries, slopes)
}

fn num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        x.to_string()
    }
}

impl BenchReport {
    /// Writes the schema comment, a header and all rows (trial rows first,
    /// then summaries, then slopes). Inapplicable cells are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = out;
        writeln!(out, "{CSV_SCHEMA}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for r in &self.trials {
            w.write_record([
                "trial".to_string(),
                r.method.to_string(),
                r.m.to_string(),
                r.trial.to_string(),
                r.seed.to_string(),
                num(r.estimate),
                num(r.exact),
                num(r.abs_rel_error),
                num(r.q_error),
                num(r.sketch_ms),
                num(r.infer_ms),
                String::new(),
                String::new(),
                String::new(),
            ])?;
        }
        for s in &self.summaries {
            let mut rec = vec![String::new(); CSV_COLUMNS.len()];
            rec[0] = "summary".into();
            rec[1] = s.method.to_string();
            rec[2] = s.m.to_string();
            rec[6] = num(self.exact);
            rec[11] = num(s.median_are);
            rec[12] = num(s.p95_are);
            w.write_record(&rec)?;
        }
        for s in &self.slopes {
            let mut rec = vec![String::new(); CSV_COLUMNS.len()];
            rec[0] = "slope".into();
            rec[1] = s.method.to_string();
            rec[13] = s.slope.map(num).unwrap_or_default();
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputRow {
    pub method: Method,
    pub m: usize,
    pub tuples: usize,
    pub seconds: f64,
    /// Updates per second; zero when nothing was processed.
    pub rate: f64,
}

/// Index of the relation with the most updates (the first on ties).
pub fn largest_relation(relations: &[Vec<TupleUpdate>]) -> Option<usize> {
    relations
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))
        .map(|(k, _)| k)
}

/// Times sketching `updates` (all of relation `relation`) under `config`.
pub fn measure_throughput(
    updates: &[TupleUpdate],
    graph: &JoinGraph,
    relation: usize,
    config: SketchConfig,
) -> Result<ThroughputRow> {
    let hashes = config.hashes(graph)?;
    let start = Instant::now();
    let sketch = build_sketch(updates, graph, &hashes, config, relation)?;
    let seconds = start.elapsed().as_secs_f64();
    std::hint::black_box(&sketch);
    let rate = if updates.is_empty() || seconds <= 0.0 {
        0.0
    } else {
        updates.len() as f64 / seconds
    };
    Ok(ThroughputRow {
        method: config.method,
        m: config.m,
        tuples: updates.len(),
        seconds,
        rate,
    })
}
