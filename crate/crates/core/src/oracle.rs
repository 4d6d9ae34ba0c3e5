//! Exact join cardinality and frequency norms for desk-scale data.
//!
//! The cardinality is `sum over joint tuples of prod_k F_k(i_k)` restricted to
//! assignments where every joined attribute pair is equal. Two independent
//! evaluations are provided: a nested-loop enumeration (the reference) and a
//! hash-join aggregation along the relation tree.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::graph::JoinGraph;
use crate::sketch::{check_tuple, TupleUpdate};

/// Largest tuple cross product the nested-loop path will enumerate.
pub const NESTED_LOOP_BUDGET: u128 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExactMethod {
    /// Nested loop within budget, hash join otherwise.
    #[default]
    Auto,
    NestedLoop,
    HashJoin,
}

/// Frequency of each distinct joined-attribute tuple; zero totals are dropped.
pub fn frequencies(tuples: &[TupleUpdate]) -> HashMap<Vec<u64>, f64> {
    let mut freq: HashMap<Vec<u64>, f64> = HashMap::new();
    for t in tuples {
        *freq.entry(t.values.clone()).or_insert(0.0) += t.delta;
    }
    freq.retain(|_, f| *f != 0.0);
    freq
}

/// Squared L2 norm of a relation's frequency tensor.
pub fn frequency_norm(tuples: &[TupleUpdate]) -> f64 {
    frequencies(tuples).values().map(|f| f * f).sum()
}

/// [`frequency_norm`] of every relation.
pub fn frequency_norms(relations: &[Vec<TupleUpdate>]) -> Vec<f64> {
    relations.iter().map(|r| frequency_norm(r)).collect()
}

fn check_relations(relations: &[Vec<TupleUpdate>], graph: &JoinGraph) -> Result<()> {
    if relations.len() != graph.num_relations() {
        return Err(Error::Mismatch(format!(
            "query has {} relations but {} were given",
            graph.num_relations(),
            relations.len()
        )));
    }
    for (k, rel) in relations.iter().enumerate() {
        for t in rel {
            if t.relation != k {
                return Err(Error::Tuple(format!(
                    "tuple of relation {} listed under relation {k}",
                    t.relation
                )));
            }
            check_tuple(graph, t)?;
        }
    }
    Ok(())
}

/// Position of each attribute within its relation's tuples.
fn slots(graph: &JoinGraph) -> Vec<usize> {
    let mut slot = vec![0; graph.num_attributes()];
    for k in 0..graph.num_relations() {
        for (i, &u) in graph.omega(k).iter().enumerate() {
            slot[u] = i;
        }
    }
    slot
}

/// Exact cardinality; `relations[k]` holds the stream of relation `k`.
pub fn exact_cardinality(relations: &[Vec<TupleUpdate>], graph: &JoinGraph) -> Result<f64> {
    exact_cardinality_with(relations, graph, ExactMethod::Auto)
}

pub fn exact_cardinality_with(relations: &[Vec<TupleUpdate>], graph: &JoinGraph, method: ExactMethod) -> Result<f64> {
    check_relations(relations, graph)?;
    match method {
        ExactMethod::NestedLoop => nested_loop(relations, graph),
        ExactMethod::HashJoin => Ok(hash_join(relations, graph)),
        ExactMethod::Auto => {
            if cross_product(relations) <= NESTED_LOOP_BUDGET {
                nested_loop(relations, graph)
            } else {
                Ok(hash_join(relations, graph))
            }
        }
    }
}

fn cross_product(relations: &[Vec<TupleUpdate>]) -> u128 {
    relations
        .iter()
        .try_fold(1u128, |acc, r| acc.checked_mul(r.len() as u128))
        .unwrap_or(u128::MAX)
}

fn nested_loop(relations: &[Vec<TupleUpdate>], graph: &JoinGraph) -> Result<f64> {
    let combos = cross_product(relations);
    if combos > NESTED_LOOP_BUDGET {
        return Err(Error::Budget(format!(
            "nested loop over {combos} tuple combinations (limit {NESTED_LOOP_BUDGET})"
        )));
    }
    let slot = slots(graph);
    // an edge is checked at the depth where its later relation gets assigned
    let mut checks: Vec<Vec<(usize, usize)>> = vec![Vec::new(); graph.num_relations()];
    for &[u, v] in graph.edges() {
        let depth = graph.relation_of(u).max(graph.relation_of(v));
        checks[depth].push((u, v));
    }
    let mut chosen: Vec<&TupleUpdate> = Vec::with_capacity(relations.len());
    Ok(descend(relations, graph, &slot, &checks, &mut chosen))
}

fn descend<'a>(
    relations: &'a [Vec<TupleUpdate>],
    graph: &JoinGraph,
    slot: &[usize],
    checks: &[Vec<(usize, usize)>],
    chosen: &mut Vec<&'a TupleUpdate>,
) -> f64 {
    let depth = chosen.len();
    if depth == relations.len() {
        return chosen.iter().map(|t| t.delta).product();
    }
    let mut total = 0.0;
    for t in &relations[depth] {
        chosen.push(t);
        let matches = checks[depth].iter().all(|&(u, v)| {
            let a = chosen[graph.relation_of(u)].values[slot[u]];
            let b = chosen[graph.relation_of(v)].values[slot[v]];
            a == b
        });
        if matches {
            total += descend(relations, graph, slot, checks, chosen);
        }
        chosen.pop();
    }
    total
}

fn hash_join(relations: &[Vec<TupleUpdate>], graph: &JoinGraph) -> f64 {
    let slot = slots(graph);
    let freqs: Vec<HashMap<Vec<u64>, f64>> = relations.iter().map(|r| frequencies(r)).collect();
    weigh_subtree(graph, &slot, &freqs, 0, None)
        .into_iter()
        .map(|(_, w)| w)
        .sum()
}

/// For relation `k` entered through attribute `via` (None at the root),
/// returns (tuple, frequency times the matching weight of every subtree
/// below it). Summed by the value of `via`, this is the message to the parent.
fn weigh_subtree(
    graph: &JoinGraph,
    slot: &[usize],
    freqs: &[HashMap<Vec<u64>, f64>],
    k: usize,
    via: Option<usize>,
) -> Vec<(Vec<u64>, f64)> {
    let mut weighted: Vec<(Vec<u64>, f64)> = freqs[k].iter().map(|(t, &f)| (t.clone(), f)).collect();
    for &u in graph.omega(k) {
        for n in graph.gamma(u) {
            if via == Some(n.attribute) {
                continue;
            }
            let child = graph.relation_of(n.attribute);
            let mut message: HashMap<u64, f64> = HashMap::new();
            for (t, w) in weigh_subtree(graph, slot, freqs, child, Some(u)) {
                *message.entry(t[slot[n.attribute]]).or_insert(0.0) += w;
            }
            for (t, w) in weighted.iter_mut() {
                *w *= message.get(&t[slot[u]]).copied().unwrap_or(0.0);
            }
        }
    }
    weighted
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(relation: usize, values: &[u64]) -> Vec<TupleUpdate> {
        values.iter().map(|&v| TupleUpdate::insert(relation, vec![v])).collect()
    }

    #[test]
    fn single_join_toy() {
        let g = JoinGraph::from_edges(&[1, 1], &[(0, 1)]).unwrap();
        let rels = vec![column(0, &[1, 1, 2]), column(1, &[1, 2, 2])];
        for method in [ExactMethod::NestedLoop, ExactMethod::HashJoin, ExactMethod::Auto] {
            assert_eq!(exact_cardinality_with(&rels, &g, method).unwrap(), 4.0);
        }
    }

    #[test]
    fn empty_relation_gives_zero() {
        let g = JoinGraph::from_edges(&[1, 1], &[(0, 1)]).unwrap();
        let rels = vec![column(0, &[1, 2]), Vec::new()];
        assert_eq!(exact_cardinality(&rels, &g).unwrap(), 0.0);
        assert_eq!(exact_cardinality_with(&rels, &g, ExactMethod::HashJoin).unwrap(), 0.0);
    }

    #[test]
    fn branching_all_ones() {
        let g = JoinGraph::from_edges(&[1, 2, 1, 1], &[(0, 1), (3, 1), (4, 2)]).unwrap();
        let rels = vec![
            column(0, &[1]),
            vec![TupleUpdate::insert(1, vec![1, 1])],
            column(2, &[1]),
            column(3, &[1]),
        ];
        assert_eq!(exact_cardinality_with(&rels, &g, ExactMethod::NestedLoop).unwrap(), 1.0);
        assert_eq!(exact_cardinality_with(&rels, &g, ExactMethod::HashJoin).unwrap(), 1.0);
    }

    #[test]
    fn negative_deltas_cancel() {
        let g = JoinGraph::from_edges(&[1, 1], &[(0, 1)]).unwrap();
        let rels = vec![
            vec![TupleUpdate::new(0, vec![5], 3.0), TupleUpdate::new(0, vec![5], -1.0)],
            column(1, &[5, 5, 6]),
        ];
        assert_eq!(exact_cardinality_with(&rels, &g, ExactMethod::NestedLoop).unwrap(), 4.0);
        assert_eq!(exact_cardinality_with(&rels, &g, ExactMethod::HashJoin).unwrap(), 4.0);
    }

    #[test]
    fn frequency_norm_examples() {
        assert_eq!(frequency_norm(&column(0, &[1, 1, 2])), 5.0);
        assert_eq!(frequency_norm(&column(0, &[1, 2, 3, 4, 5, 6, 7])), 7.0);
        assert_eq!(frequency_norm(&[]), 0.0);
    }

    #[test]
    fn nested_loop_budget() {
        let g = JoinGraph::from_edges(&[1, 1, 1], &[(0, 1), (1, 2)]).unwrap();
        let big: Vec<u64> = (0..1000).collect();
        let rels = vec![
            column(0, &big),
            column(1, &big),
            column(2, &(1..=101).collect::<Vec<_>>()),
        ];
        assert!(matches!(
            exact_cardinality_with(&rels, &g, ExactMethod::NestedLoop),
            Err(Error::Budget(_))
        ));
        // the automatic path falls back to the hash join
        assert_eq!(exact_cardinality(&rels, &g).unwrap(), 101.0);
    }
}
