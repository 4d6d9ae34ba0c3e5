//! Per-relation sketches and the convolution-based Count sketch update.
//!
//! A tuple of relation `R_k` is mapped to a single sign (the product of the
//! edge sign functions of all its joined attributes) and a single bin (the
//! sum of the component bin functions, mod `m`). This is the circular
//! convolution of the per-attribute single-item Count sketches, which only
//! ever has one non-zero cell, so an update touches one counter per
//! repetition independent of `m`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::JoinGraph;
use crate::hashing::SketchHashes;
use crate::par::{self, Execution};

/// Repetitions used when none are given; the estimate is their median.
pub const DEFAULT_REPS: usize = 5;

/// Updates whose cell loads are issued together by [`RelationSketch::update_many`].
const UPDATE_BLOCK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Convolution of Count sketches, O(1) per update and repetition.
    Conv,
    /// Multi-join AMS sketch, O(m) per update and repetition.
    Ams,
}

impl Method {
    pub fn tag(self) -> u8 {
        match self {
            Method::Conv => 0,
            Method::Ams => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Method> {
        match tag {
            0 => Some(Method::Conv),
            1 => Some(Method::Ams),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Conv => "conv",
            Method::Ams => "ams",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "conv" => Ok(Method::Conv),
            "ams" => Ok(Method::Ams),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SketchConfig {
    /// Bins per repetition.
    pub m: usize,
    /// Independent repetitions.
    pub reps: usize,
    pub seed: u64,
    pub method: Method,
}

impl SketchConfig {
    pub fn new(m: usize, reps: usize, seed: u64, method: Method) -> Result<Self> {
        if m == 0 || reps == 0 {
            return Err(Error::InvalidArgument(format!(
                "bin count and repetitions must be positive (m={m}, reps={reps})"
            )));
        }
        Ok(SketchConfig { m, reps, seed, method })
    }

    pub fn conv(m: usize, reps: usize, seed: u64) -> Result<Self> {
        SketchConfig::new(m, reps, seed, Method::Conv)
    }

    pub fn ams(m: usize, reps: usize, seed: u64) -> Result<Self> {
        SketchConfig::new(m, reps, seed, Method::Ams)
    }

    /// Derives the hash functions this configuration sketches `graph` with.
    pub fn hashes(&self, graph: &JoinGraph) -> Result<SketchHashes> {
        SketchHashes::derive(self.seed, self.m, self.reps, graph)
    }
}

/// One stream element: canonical values for the joined attributes of a
/// relation, in the order of [`JoinGraph::omega`], and a frequency change.
#[derive(Debug, Clone, PartialEq)]
pub struct TupleUpdate {
    pub relation: usize,
    pub values: Vec<u64>,
    pub delta: f64,
}

impl TupleUpdate {
    pub fn new(relation: usize, values: Vec<u64>, delta: f64) -> Self {
        TupleUpdate {
            relation,
            values,
            delta,
        }
    }

    pub fn insert(relation: usize, values: Vec<u64>) -> Self {
        TupleUpdate::new(relation, values, 1.0)
    }
}

pub(crate) fn check_tuple(graph: &JoinGraph, t: &TupleUpdate) -> Result<()> {
    if t.relation >= graph.num_relations() {
        return Err(Error::Tuple(format!("unknown relation {}", t.relation)));
    }
    let expected = graph.omega(t.relation).len();
    if t.values.len() != expected {
        return Err(Error::Tuple(format!(
            "relation `{}` has {expected} joined attributes but the tuple carries {} values",
            graph.relation_names()[t.relation],
            t.values.len()
        )));
    }
    Ok(())
}

/// Sign of a tuple: product over its joined attributes `u` and every
/// attribute `v` joined with `u` of `s_{u,v}(i_u)`.
pub fn tuple_sign(graph: &JoinGraph, hashes: &SketchHashes, rep: usize, t: &TupleUpdate) -> Result<i32> {
    check_tuple(graph, t)?;
    Ok(sign_unchecked(graph, hashes, rep, t))
}

/// Bin of a tuple: sum of the component bin functions of its joined attributes, mod `m`.
pub fn tuple_bin(graph: &JoinGraph, hashes: &SketchHashes, rep: usize, t: &TupleUpdate) -> Result<usize> {
    check_tuple(graph, t)?;
    Ok(bin_unchecked(graph, hashes, rep, t))
}

#[inline]
fn sign_unchecked(graph: &JoinGraph, hashes: &SketchHashes, rep: usize, t: &TupleUpdate) -> i32 {
    let mut sign = 1;
    for (&u, &x) in graph.omega(t.relation).iter().zip(&t.values) {
        for n in graph.gamma(u) {
            sign *= hashes.sign(n.edge, rep).eval(x);
        }
    }
    sign
}

#[inline]
fn bin_unchecked(graph: &JoinGraph, hashes: &SketchHashes, rep: usize, t: &TupleUpdate) -> usize {
    let m = hashes.m();
    let mut bin = 0usize;
    for (&u, &x) in graph.omega(t.relation).iter().zip(&t.values) {
        bin += hashes.bin(graph.component_index(u), rep).eval(x);
        if bin >= m {
            bin -= m;
        }
    }
    bin
}

/// `reps x m` grid of counters for one relation.
///
/// Equality compares relation, name, configuration and counters; the write
/// counter is instrumentation and is ignored.
#[derive(Debug, Clone)]
pub struct RelationSketch {
    relation: usize,
    name: String,
    config: SketchConfig,
    counters: Vec<f64>,
    writes: u64,
}

impl PartialEq for RelationSketch {
    fn eq(&self, other: &Self) -> bool {
        self.relation == other.relation
            && self.name == other.name
            && self.config == other.config
            && self.counters == other.counters
    }
}

impl RelationSketch {
    pub fn new(config: SketchConfig, relation: usize, name: impl Into<String>) -> Self {
        RelationSketch {
            relation,
            name: name.into(),
            config,
            counters: vec![0.0; config.m * config.reps],
            writes: 0,
        }
    }

    pub fn for_relation(config: SketchConfig, graph: &JoinGraph, relation: usize) -> Self {
        RelationSketch::new(config, relation, graph.relation_names()[relation].clone())
    }

    /// Wraps an existing counter grid (repetition-major).
    pub fn from_counters(
        config: SketchConfig,
        relation: usize,
        name: impl Into<String>,
        counters: Vec<f64>,
    ) -> Result<Self> {
        if counters.len() != config.m * config.reps {
            return Err(Error::Mismatch(format!(
                "expected {}x{} counters, got {}",
                config.reps,
                config.m,
                counters.len()
            )));
        }
        if counters.iter().any(|c| !c.is_finite()) {
            return Err(Error::Format("non-finite counter".into()));
        }
        Ok(RelationSketch {
            relation,
            name: name.into(),
            config,
            counters,
            writes: 0,
        })
    }

    pub fn relation(&self) -> usize {
        self.relation
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn config(&self) -> &SketchConfig {
        &self.config
    }

    pub fn method(&self) -> Method {
        self.config.method
    }

    pub fn m(&self) -> usize {
        self.config.m
    }

    pub fn reps(&self) -> usize {
        self.config.reps
    }

    pub fn row(&self, rep: usize) -> &[f64] {
        let m = self.config.m;
        &self.counters[rep * m..(rep + 1) * m]
    }

    pub(crate) fn row_mut(&mut self, rep: usize) -> &mut [f64] {
        let m = self.config.m;
        &mut self.counters[rep * m..(rep + 1) * m]
    }

    pub fn counters(&self) -> &[f64] {
        &self.counters
    }

    pub fn is_zero(&self) -> bool {
        self.counters.iter().all(|&c| c == 0.0)
    }

    /// Number of counter cells written since construction.
    pub fn writes(&self) -> u64 {
        self.writes
    }

    pub(crate) fn add_writes(&mut self, n: u64) {
        self.writes += n;
    }

    fn check_hashes(&self, hashes: &SketchHashes) -> Result<()> {
        if hashes.m() != self.config.m || hashes.reps() != self.config.reps || hashes.seed() != self.config.seed {
            return Err(Error::Mismatch(
                "hash functions were derived for a different configuration".into(),
            ));
        }
        Ok(())
    }

    /// Applies one update with the sketch's method.
    pub fn update(&mut self, graph: &JoinGraph, hashes: &SketchHashes, t: &TupleUpdate) -> Result<()> {
        if t.relation != self.relation {
            return Err(Error::Tuple(format!(
                "tuple of relation {} fed to the sketch of relation {}",
                t.relation, self.relation
            )));
        }
        check_tuple(graph, t)?;
        self.check_hashes(hashes)?;
        match self.config.method {
            Method::Conv => self.conv_update(graph, hashes, t),
            Method::Ams => crate::ams::ams_update_unchecked(self, graph, hashes, t),
        }
        Ok(())
    }

    fn conv_update(&mut self, graph: &JoinGraph, hashes: &SketchHashes, t: &TupleUpdate) {
        let m = self.config.m;
        for rep in 0..self.config.reps {
            let sign = sign_unchecked(graph, hashes, rep, t);
            let bin = bin_unchecked(graph, hashes, rep, t);
            self.counters[rep * m + bin] += sign as f64 * t.delta;
        }
        self.writes += self.config.reps as u64;
    }

    /// Applies a run of updates in order; the counters equal those of calling
    /// [`update`](Self::update) on each.
    ///
    /// For conv sketches the target cells of a block of updates are computed
    /// and loaded before any sign is evaluated, so that cache misses on large
    /// grids overlap instead of stalling one update at a time.
    pub fn update_many(&mut self, graph: &JoinGraph, hashes: &SketchHashes, updates: &[&TupleUpdate]) -> Result<()> {
        self.check_hashes(hashes)?;
        for t in updates {
            if t.relation != self.relation {
                return Err(Error::Tuple(format!(
                    "tuple of relation {} fed to the sketch of relation {}",
                    t.relation, self.relation
                )));
            }
            check_tuple(graph, t)?;
        }
        if self.config.method == Method::Ams {
            for t in updates {
                crate::ams::ams_update_unchecked(self, graph, hashes, t);
            }
            return Ok(());
        }
        let m = self.config.m;
        let reps = self.config.reps;
        let mut cells = Vec::with_capacity(UPDATE_BLOCK * reps);
        for block in updates.chunks(UPDATE_BLOCK) {
            cells.clear();
            for t in block {
                for rep in 0..reps {
                    cells.push(rep * m + bin_unchecked(graph, hashes, rep, t));
                }
            }
            // a tight loop of independent loads keeps many misses in flight
            let mut touch = 0u64;
            for &cell in &cells {
                touch |= self.counters[cell].to_bits();
            }
            std::hint::black_box(touch);
            for (i, t) in block.iter().enumerate() {
                for rep in 0..reps {
                    let sign = sign_unchecked(graph, hashes, rep, t);
                    self.counters[cells[i * reps + rep]] += sign as f64 * t.delta;
                }
            }
            self.writes += (block.len() * reps) as u64;
        }
        Ok(())
    }

    fn check_compatible(&self, other: &RelationSketch) -> Result<()> {
        if self.config != other.config {
            return Err(Error::Mismatch(format!(
                "cannot merge sketches with configs {:?} and {:?}",
                self.config, other.config
            )));
        }
        if self.relation != other.relation {
            return Err(Error::Mismatch(format!(
                "cannot merge sketches of relations {} and {}",
                self.relation, other.relation
            )));
        }
        Ok(())
    }

    /// Adds `other` into `self` cell by cell.
    pub fn merge_from(&mut self, other: &RelationSketch) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.counters.iter_mut().zip(&other.counters) {
            *a += b;
        }
        Ok(())
    }

    /// Sketch of the concatenated streams.
    pub fn merge(&self, other: &RelationSketch) -> Result<RelationSketch> {
        let mut out = self.clone();
        out.merge_from(other)?;
        out.writes = 0;
        Ok(out)
    }
}

/// Folds a stream of updates for one relation into a fresh sketch.
pub fn build_sketch<'a, I>(
    updates: I,
    graph: &JoinGraph,
    hashes: &SketchHashes,
    config: SketchConfig,
    relation: usize,
) -> Result<RelationSketch>
where
    I: IntoIterator<Item = &'a TupleUpdate>,
{
    let mut sketch = RelationSketch::for_relation(config, graph, relation);
    let mut block: Vec<&TupleUpdate> = Vec::with_capacity(UPDATE_BLOCK);
    for t in updates {
        block.push(t);
        if block.len() == UPDATE_BLOCK {
            sketch.update_many(graph, hashes, &block)?;
            block.clear();
        }
    }
    sketch.update_many(graph, hashes, &block)?;
    Ok(sketch)
}

/// Builds one sketch per shard of `updates` and merges them. For integer
/// deltas the result equals [`build_sketch`] exactly.
pub fn build_sketch_sharded(
    updates: &[TupleUpdate],
    graph: &JoinGraph,
    hashes: &SketchHashes,
    config: SketchConfig,
    relation: usize,
    shards: usize,
    exec: Execution,
) -> Result<RelationSketch> {
    let shards = shards.clamp(1, updates.len().max(1));
    let chunk = updates.len().div_ceil(shards).max(1);
    let partials = par::map_range(exec, shards, |s| {
        let lo = (s * chunk).min(updates.len());
        let hi = ((s + 1) * chunk).min(updates.len());
        build_sketch(&updates[lo..hi], graph, hashes, config, relation)
    });
    let mut out = RelationSketch::for_relation(config, graph, relation);
    for p in partials {
        let p = p?;
        out.merge_from(&p)?;
        out.writes += p.writes;
    }
    Ok(out)
}
