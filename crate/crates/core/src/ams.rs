//! Multi-join AMS sketch baseline.
//!
//! Every counter `j` of a repetition has its own set of edge sign functions,
//! so each update touches all `m` counters. The estimate of a repetition is
//! the mean over `j` of the product of the `r` relation counters at `j`.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::estimator::{check_sketch_set, EstimateReport};
use crate::graph::JoinGraph;
use crate::hashing::{SignFamily, SketchHashes};
use crate::sketch::{check_tuple, Method, RelationSketch, TupleUpdate};

/// Applies one update to an AMS sketch.
pub fn ams_update(
    sketch: &mut RelationSketch,
    graph: &JoinGraph,
    hashes: &SketchHashes,
    t: &TupleUpdate,
) -> Result<()> {
    if sketch.method() != Method::Ams {
        return Err(Error::Mismatch("ams_update on a conv sketch".into()));
    }
    check_tuple(graph, t)?;
    sketch.update(graph, hashes, t)
}

/// (value, sign family) pairs whose product forms the tuple sign.
fn incidences(graph: &JoinGraph, seed: u64, rep: usize, t: &TupleUpdate) -> Vec<(u64, SignFamily)> {
    let mut out = Vec::new();
    for (&u, &x) in graph.omega(t.relation).iter().zip(&t.values) {
        for n in graph.gamma(u) {
            out.push((x, SignFamily::new(seed, n.edge, rep)));
        }
    }
    out
}

pub(crate) fn ams_update_unchecked(
    sketch: &mut RelationSketch,
    graph: &JoinGraph,
    hashes: &SketchHashes,
    t: &TupleUpdate,
) {
    let reps = sketch.reps();
    let m = sketch.m();
    for rep in 0..reps {
        let factors = incidences(graph, hashes.seed(), rep, t);
        let row = sketch.row_mut(rep);
        for (j, cell) in row.iter_mut().enumerate() {
            let mut sign = 1;
            for (x, family) in &factors {
                sign *= family.member(j).eval(*x);
            }
            *cell += sign as f64 * t.delta;
        }
    }
    sketch.add_writes((reps * m) as u64);
}

/// Mean over counters of the product of relation counters, per repetition.
pub fn ams_repetition_estimate(sketches: &[RelationSketch], rep: usize) -> f64 {
    let m = sketches[0].m();
    let rows: Vec<&[f64]> = sketches.iter().map(|s| s.row(rep)).collect();
    let total: f64 = (0..m).map(|j| rows.iter().map(|r| r[j]).product::<f64>()).sum();
    total / m as f64
}

/// Estimates the query cardinality from AMS sketches (one per relation, in
/// relation order).
pub fn ams_estimate(sketches: &[RelationSketch], graph: &JoinGraph) -> Result<EstimateReport> {
    let start = Instant::now();
    let config = check_sketch_set(sketches, graph, Method::Ams)?;
    let per_rep: Vec<f64> = (0..config.reps)
        .map(|rep| ams_repetition_estimate(sketches, rep))
        .collect();
    Ok(EstimateReport::from_repetitions(per_rep, Method::Ams, start.elapsed()))
}
