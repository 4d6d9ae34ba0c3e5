//! Synthetic workloads: Zipf-skewed relations over generated acyclic queries.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Zipf};

use crate::error::{Error, Result};
use crate::graph::JoinGraph;
use crate::sketch::TupleUpdate;

/// A query graph with one materialized update stream per relation.
#[derive(Debug, Clone)]
pub struct Workload {
    pub graph: JoinGraph,
    pub relations: Vec<Vec<TupleUpdate>>,
}

/// Draws from Zipf(`exponent`) over `1..=domain`.
#[derive(Debug, Clone, Copy)]
pub struct ZipfValues {
    dist: Zipf<f64>,
}

impl ZipfValues {
    pub fn new(domain: u64, exponent: f64) -> Result<Self> {
        if domain == 0 {
            return Err(Error::InvalidArgument("zipf domain must be positive".into()));
        }
        let dist = Zipf::new(domain as f64, exponent)
            .map_err(|e| Error::InvalidArgument(format!("zipf({domain}, {exponent}): {e}")))?;
        Ok(ZipfValues { dist })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.dist.sample(rng) as u64
    }
}

/// Insert-only relations whose joined values are independent Zipf draws.
pub fn zipf_relations<R: Rng + ?Sized>(
    rng: &mut R,
    graph: &JoinGraph,
    tuples: &[usize],
    values: ZipfValues,
) -> Vec<Vec<TupleUpdate>> {
    (0..graph.num_relations())
        .map(|k| {
            let arity = graph.omega(k).len();
            (0..tuples[k])
                .map(|_| TupleUpdate::insert(k, (0..arity).map(|_| values.sample(rng)).collect()))
                .collect()
        })
        .collect()
}

/// Two-join chain `R0(a0) - R1(a1, a2) - R2(a3)` with Zipf values.
pub fn zipf_chain<R: Rng + ?Sized>(
    rng: &mut R,
    tuples_per_relation: usize,
    domain: u64,
    exponent: f64,
) -> Result<Workload> {
    let graph = JoinGraph::from_edges(&[1, 2, 1], &[(0, 1), (2, 3)])?;
    let values = ZipfValues::new(domain, exponent)?;
    let relations = zipf_relations(rng, &graph, &[tuples_per_relation; 3], values);
    Ok(Workload { graph, relations })
}

/// Random acyclic connected query with at most `max_width` attributes and
/// at most `max_components` join components.
///
/// Relations are added one at a time, each joined to an earlier relation
/// through either an existing or a new attribute of that relation.
pub fn random_query<R: Rng + ?Sized>(rng: &mut R, max_width: usize, max_components: usize) -> JoinGraph {
    assert!(max_width >= 2 && max_components >= 1);
    // owner relation and component of every attribute, in creation order
    let mut owner: Vec<usize> = vec![0, 1];
    let mut component: Vec<usize> = vec![0, 0];
    let mut edges: Vec<(usize, usize)> = vec![(0, 1)];
    let mut relations = 2;
    let mut components = 1;
    let target = rng.random_range(2..=max_width);
    while owner.len() < target {
        let room = target - owner.len();
        let parent = rng.random_range(0..relations);
        let existing: Vec<usize> = (0..owner.len()).filter(|&a| owner[a] == parent).collect();
        let fresh_allowed = room >= 2 && components < max_components;
        let anchor = if fresh_allowed && rng.random_bool(0.4) {
            owner.push(parent);
            component.push(components);
            components += 1;
            owner.len() - 1
        } else {
            existing[rng.random_range(0..existing.len())]
        };
        let child_attr = owner.len();
        owner.push(relations);
        component.push(component[anchor]);
        edges.push((anchor, child_attr));
        relations += 1;
    }
    // renumber attributes so each relation's attributes are contiguous
    let mut order: Vec<usize> = (0..owner.len()).collect();
    order.sort_by_key(|&a| (owner[a], a));
    let mut new_id = vec![0; owner.len()];
    for (i, &a) in order.iter().enumerate() {
        new_id[a] = i;
    }
    let mut arity = vec![0; relations];
    for &k in &owner {
        arity[k] += 1;
    }
    let edges: Vec<(usize, usize)> = edges.iter().map(|&(u, v)| (new_id[u], new_id[v])).collect();
    JoinGraph::from_edges(&arity, &edges).expect("generated query is a connected tree")
}

/// Uniform random relations; with `signed` some deltas are negative.
pub fn random_relations<R: Rng + ?Sized>(
    rng: &mut R,
    graph: &JoinGraph,
    max_tuples: usize,
    domain: u64,
    signed: bool,
) -> Vec<Vec<TupleUpdate>> {
    (0..graph.num_relations())
        .map(|k| {
            let n = rng.random_range(0..=max_tuples);
            (0..n)
                .map(|_| {
                    let values = graph.omega(k).iter().map(|_| rng.random_range(0..domain)).collect();
                    let delta = if signed {
                        rng.random_range(-2i32..=3) as f64
                    } else {
                        1.0
                    };
                    TupleUpdate::new(k, values, delta)
                })
                .collect()
        })
        .collect()
}

/// Writes one CSV per relation plus `query.json` into `dir`. Columns keep the
/// graph's attribute names and are typed `int`; non-unit deltas go to a
/// `__delta` column.
pub fn write_workload(dir: &Path, workload: &Workload) -> Result<()> {
    fs::create_dir_all(dir)?;
    let graph = &workload.graph;
    let mut relations = Vec::new();
    for (k, tuples) in workload.relations.iter().enumerate() {
        let name = &graph.relation_names()[k];
        let columns: Vec<&str> = graph
            .omega(k)
            .iter()
            .map(|&u| graph.attribute(u).column.as_str())
            .collect();
        let with_delta = tuples.iter().any(|t| t.delta != 1.0);
        let mut text = columns.join(",");
        if with_delta {
            text.push_str(",__delta");
        }
        text.push('\n');
        for t in tuples {
            let cells: Vec<String> = t.values.iter().map(|v| (*v as i64).to_string()).collect();
            text.push_str(&cells.join(","));
            if with_delta {
                let _ = write!(text, ",{}", t.delta);
            }
            text.push('\n');
        }
        let file = format!("{name}.csv");
        fs::write(dir.join(&file), text)?;
        relations.push(serde_json::json!({
            "name": name,
            "source": file,
            "join_columns": columns.iter().map(|c| format!("{c}:int")).collect::<Vec<_>>(),
        }));
    }
    let joins: Vec<[String; 2]> = graph
        .edges()
        .iter()
        .map(|e| {
            e.map(|u| {
                let a = graph.attribute(u);
                format!("{}.{}", graph.relation_names()[a.relation], a.column)
            })
        })
        .collect();
    let query = serde_json::json!({ "relations": relations, "joins": joins });
    let text = serde_json::to_string_pretty(&query).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    fs::write(dir.join("query.json"), text + "\n")?;
    Ok(())
}
