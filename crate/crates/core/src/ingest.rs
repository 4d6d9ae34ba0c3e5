//! CSV ingestion: filters are applied while streaming and joined-column
//! cells are canonicalized to 64-bit items.
//!
//! Integers map to their two's-complement bit pattern. Strings map through
//! 64-bit FNV-1a over their UTF-8 bytes (offset basis `0xcbf29ce484222325`,
//! prime `0x100000001b3`); distinct strings can collide with probability
//! about `pairs / 2^64`.

use std::fs::File;
use std::hash::Hasher;
use std::io::Read;
use std::num::ParseIntError;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;

use crate::error::{Error, Result};
use crate::graph::{CmpOp, ColumnDecl, ColumnType, JoinGraph, Predicate, QuerySpec, RelationSpec, Scalar};
use crate::hashing::SketchHashes;
use crate::par::{self, Execution};
use crate::sketch::{RelationSketch, SketchConfig, TupleUpdate};

/// Optional CSV column carrying the frequency change of a row (default `+1`).
pub const DELTA_COLUMN: &str = "__delta";

/// Maps a cell to its item value.
pub fn canonicalize(cell: &str, ty: ColumnType) -> std::result::Result<u64, ParseIntError> {
    match ty {
        ColumnType::Int => cell.trim().parse::<i64>().map(|v| v as u64),
        ColumnType::Str => {
            let mut h = FnvHasher::default();
            h.write(cell.as_bytes());
            Ok(h.finish())
        }
    }
}

fn eval_predicate(p: &Predicate, cell: &str) -> Result<bool> {
    p.check()?;
    if cell.is_empty() {
        // NULL satisfies no comparison
        return Ok(false);
    }
    match &p.value {
        Scalar::Int(rhs) => {
            let lhs: i64 = cell.trim().parse().map_err(|_| {
                Error::InvalidArgument(format!("cannot compare `{cell}` in int column `{}`", p.column.name))
            })?;
            Ok(p.op.test(&lhs, rhs))
        }
        Scalar::Str(rhs) => match p.op {
            CmpOp::Eq | CmpOp::Ne => Ok(p.op.test(cell, rhs.as_str())),
            _ => unreachable!("rejected by check"),
        },
    }
}

/// Conjunction of `predicates` over one row; `cell` looks a column up by name.
pub fn apply_filters<'a, F>(cell: F, predicates: &[Predicate]) -> Result<bool>
where
    F: Fn(&str) -> Option<&'a str>,
{
    for p in predicates {
        let value = cell(&p.column.name)
            .ok_or_else(|| Error::Config(format!("filter column `{}` does not exist", p.column.name)))?;
        if !eval_predicate(p, value)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Streaming reader producing one [`TupleUpdate`] per passing row.
pub struct CsvStream<R: Read> {
    reader: csv::Reader<R>,
    record: csv::StringRecord,
    path: PathBuf,
    relation: usize,
    joined: Vec<(usize, ColumnType)>,
    filters: Vec<(usize, Predicate)>,
    delta: Option<usize>,
    rows_read: u64,
    done: bool,
}

impl<R: Read> std::fmt::Debug for CsvStream<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CsvStream")
            .field("path", &self.path)
            .field("relation", &self.relation)
            .field("rows_read", &self.rows_read)
            .finish()
    }
}

/// Opens `path` for relation `relation`, whose joined columns (in attribute
/// order) are `joined`.
pub fn read_stream(
    path: &Path,
    relation: usize,
    joined: &[ColumnDecl],
    predicates: &[Predicate],
) -> Result<CsvStream<File>> {
    let file = File::open(path).map_err(|e| Error::data(path, e.to_string()))?;
    CsvStream::new(file, path, relation, joined, predicates)
}

impl<R: Read> CsvStream<R> {
    pub fn new(
        input: R,
        label: &Path,
        relation: usize,
        joined: &[ColumnDecl],
        predicates: &[Predicate],
    ) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let headers = reader.headers().map_err(|e| Error::data(label, e.to_string()))?.clone();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let mut joined_idx = Vec::with_capacity(joined.len());
        for c in joined {
            let idx =
                find(&c.name).ok_or_else(|| Error::data(label, format!("missing declared column `{}`", c.name)))?;
            joined_idx.push((idx, c.ty));
        }
        let mut filters = Vec::with_capacity(predicates.len());
        for p in predicates {
            p.check()?;
            let idx = find(&p.column.name)
                .ok_or_else(|| Error::data(label, format!("missing filter column `{}`", p.column.name)))?;
            filters.push((idx, p.clone()));
        }
        Ok(CsvStream {
            reader,
            record: csv::StringRecord::new(),
            path: label.to_path_buf(),
            relation,
            joined: joined_idx,
            filters,
            delta: find(DELTA_COLUMN),
            rows_read: 0,
            done: false,
        })
    }

    /// Data rows consumed so far.
    pub fn rows_read(&self) -> u64 {
        self.rows_read
    }

    fn row_error(&self, message: String) -> Error {
        Error::data(&self.path, format!("row {}: {message}", self.rows_read))
    }

    /// Turns the current record into an update, or `None` if it is filtered
    /// out or has a NULL join value.
    fn convert(&self) -> Result<Option<TupleUpdate>> {
        let rec = &self.record;
        for (idx, p) in &self.filters {
            let cell = rec.get(*idx).unwrap_or("");
            if !eval_predicate(p, cell).map_err(|e| self.row_error(e.to_string()))? {
                return Ok(None);
            }
        }
        let mut values = Vec::with_capacity(self.joined.len());
        for &(idx, ty) in &self.joined {
            let cell = rec.get(idx).unwrap_or("");
            if cell.is_empty() {
                return Ok(None);
            }
            values.push(canonicalize(cell, ty).map_err(|e| self.row_error(format!("bad int `{cell}`: {e}")))?);
        }
        let delta = match self.delta.and_then(|i| rec.get(i)).map(str::trim) {
            None | Some("") => 1.0,
            Some(text) => {
                let d: f64 = text
                    .parse()
                    .map_err(|_| self.row_error(format!("bad {DELTA_COLUMN} `{text}`")))?;
                if !d.is_finite() {
                    return Err(self.row_error(format!("non-finite {DELTA_COLUMN}")));
                }
                d
            }
        };
        Ok(Some(TupleUpdate::new(self.relation, values, delta)))
    }
}

impl<R: Read> Iterator for CsvStream<R> {
    type Item = Result<TupleUpdate>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            match self.reader.read_record(&mut self.record) {
                Ok(false) => self.done = true,
                Ok(true) => {
                    self.rows_read += 1;
                    match self.convert() {
                        Ok(Some(t)) => return Some(Ok(t)),
                        Ok(None) => continue,
                        Err(e) => {
                            self.done = true;
                            return Some(Err(e));
                        }
                    }
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(Error::data(&self.path, e.to_string())));
                }
            }
        }
        None
    }
}

/// Joined columns of relation `k` in attribute order.
pub fn joined_columns(graph: &JoinGraph, relation: usize) -> Vec<ColumnDecl> {
    graph
        .omega(relation)
        .iter()
        .map(|&u| {
            let a = graph.attribute(u);
            ColumnDecl::new(a.column.clone(), a.ty)
        })
        .collect()
}

/// Opens the source of relation `k` of a query.
pub fn open_relation(spec: &RelationSpec, graph: &JoinGraph, relation: usize) -> Result<CsvStream<File>> {
    read_stream(&spec.source, relation, &joined_columns(graph, relation), &spec.filters)
}

/// Streams the source of relation `k` straight into a fresh sketch.
/// Returns the sketch and the number of data rows read.
pub fn sketch_relation(
    spec: &RelationSpec,
    graph: &JoinGraph,
    relation: usize,
    hashes: &SketchHashes,
    config: SketchConfig,
) -> Result<(RelationSketch, u64)> {
    const CHUNK: usize = 4096;
    let mut stream = open_relation(spec, graph, relation)?;
    let mut sketch = RelationSketch::for_relation(config, graph, relation);
    let mut chunk = Vec::with_capacity(CHUNK);
    loop {
        chunk.clear();
        for t in stream.by_ref().take(CHUNK) {
            chunk.push(t?);
        }
        if chunk.is_empty() {
            break;
        }
        let refs: Vec<&TupleUpdate> = chunk.iter().collect();
        sketch.update_many(graph, hashes, &refs)?;
    }
    Ok((sketch, stream.rows_read()))
}

/// Sketches every relation of the query, one reader per relation, in
/// relation order.
pub fn sketch_query(
    query: &QuerySpec,
    graph: &JoinGraph,
    config: SketchConfig,
    exec: Execution,
) -> Result<Vec<RelationSketch>> {
    let hashes = config.hashes(graph)?;
    let mut out: Vec<(usize, RelationSketch)> = par::map_slice(exec, &query.relations, |spec| {
        let k = relation_of_spec(graph, spec)?;
        let (sketch, rows) = sketch_relation(spec, graph, k, &hashes, config)?;
        log::debug!("sketched {rows} rows of `{}`", spec.name);
        Ok((k, sketch))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|(k, _)| *k);
    Ok(out.into_iter().map(|(_, s)| s).collect())
}

fn relation_of_spec(graph: &JoinGraph, spec: &RelationSpec) -> Result<usize> {
    graph
        .relation_index(&spec.name)
        .ok_or_else(|| Error::InvalidQuery(format!("relation `{}` not in graph", spec.name)))
}

/// Materializes every relation of the query, one reader per relation, in
/// relation order.
pub fn read_all(query: &QuerySpec, graph: &JoinGraph, exec: Execution) -> Result<Vec<Vec<TupleUpdate>>> {
    let mut out: Vec<(usize, Vec<TupleUpdate>)> = par::map_slice(exec, &query.relations, |spec| {
        let k = relation_of_spec(graph, spec)?;
        Ok((k, open_relation(spec, graph, k)?.collect::<Result<Vec<_>>>()?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|(k, _)| *k);
    Ok(out.into_iter().map(|(_, r)| r).collect())
}
