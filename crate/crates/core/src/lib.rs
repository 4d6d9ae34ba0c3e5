//! Streaming join cardinality estimation with convolution-based Count
//! sketches.
//!
//! Each relation of an acyclic equi-join query is summarized by a `reps x m`
//! grid of counters. One update writes a single counter per repetition. At
//! query time the relation sketches are combined by circular
//! cross-correlation along a traversal of the join graph, and the median over
//! repetitions is reported. A multi-join AMS sketch and an exact oracle are
//! included for comparison.
//!
//! ```
//! use jsk_core::{build_sketch, estimate, exact_cardinality, traversal_plan};
//! use jsk_core::{JoinGraph, SketchConfig, TupleUpdate};
//!
//! // R0(a0) joins R1(a1) on a0 = a1
//! let graph = JoinGraph::from_edges(&[1, 1], &[(0, 1)]).unwrap();
//! let r0: Vec<_> = [1, 1, 2].iter().map(|&v| TupleUpdate::insert(0, vec![v])).collect();
//! let r1: Vec<_> = [1, 2, 2].iter().map(|&v| TupleUpdate::insert(1, vec![v])).collect();
//!
//! let config = SketchConfig::conv(1024, 5, 42).unwrap();
//! let hashes = config.hashes(&graph).unwrap();
//! let sketches = vec![
//!     build_sketch(&r0, &graph, &hashes, config, 0).unwrap(),
//!     build_sketch(&r1, &graph, &hashes, config, 1).unwrap(),
//! ];
//! let plan = traversal_plan(&graph, None).unwrap();
//! let report = estimate(&sketches, &graph, &plan).unwrap();
//! assert_eq!(exact_cardinality(&[r0, r1], &graph).unwrap(), 4.0);
//! assert!(report.estimate.is_finite());
//! ```

pub mod ams;
pub mod bench;
pub mod error;
pub mod estimator;
pub mod graph;
pub mod hashing;
pub mod ingest;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod par;
pub mod sketch;
pub mod synth;

pub use ams::{ams_estimate, ams_update};
pub use error::{Error, Result};
pub use estimator::{
    circ_convolve, circ_cross_correlate, combine_sketches, estimate, estimate_with, median, naive_estimate,
    naive_report, required_bins, Correlator, EstimateOptions, EstimateReport, Kernel,
};
pub use graph::{parse_query, traversal_plan, JoinGraph, PlanTree, QuerySpec};
pub use hashing::{BinHash, SignHash, SketchHashes};
pub use oracle::{exact_cardinality, exact_cardinality_with, frequency_norm, ExactMethod};
pub use par::Execution;
pub use sketch::{build_sketch, build_sketch_sharded, Method, RelationSketch, SketchConfig, TupleUpdate};
