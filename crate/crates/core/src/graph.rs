//! Query documents, join graphs and traversal plans.
//!
//! A query is a set of relations whose joined attributes are vertices of the
//! join graph; each equi-join predicate is an edge. Attribute ids are assigned
//! in document order (relations first, then their join columns), so the
//! document
//!
//! ```json
//! { "relations": [
//!     { "name": "R0", "source": "r0.csv", "join_columns": ["a0"] },
//!     { "name": "R1", "source": "r1.csv", "join_columns": ["a1", "a2"] },
//!     { "name": "R2", "source": "r2.csv", "join_columns": ["a3"] },
//!     { "name": "R3", "source": "r3.csv", "join_columns": ["a4"] } ],
//!   "joins": [ ["R0.a0", "R1.a1"], ["R2.a3", "R1.a1"], ["R3.a4", "R1.a2"] ] }
//! ```
//!
//! yields attributes `0..5`, edges `{0,1}, {1,3}, {2,4}` and the two graph
//! components `{0,1,3}` and `{2,4}`.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnType {
    Int,
    Str,
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnType::Int => f.write_str("int"),
            ColumnType::Str => f.write_str("string"),
        }
    }
}

/// Column name with its declared type. Written `name` or `name:int` in documents.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnDecl {
    pub name: String,
    pub ty: ColumnType,
}

impl ColumnDecl {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        ColumnDecl { name: name.into(), ty }
    }

    /// Splits an optional `:int` / `:string` suffix. Returns the type only if annotated.
    fn parse_annotated(text: &str) -> (String, Option<ColumnType>) {
        if let Some((name, ty)) = text.rsplit_once(':') {
            match ty.trim() {
                "int" => return (name.trim().to_string(), Some(ColumnType::Int)),
                "string" | "str" => return (name.trim().to_string(), Some(ColumnType::Str)),
                _ => {}
            }
        }
        (text.trim().to_string(), None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn parse(text: &str) -> Option<CmpOp> {
        Some(match text {
            "=" | "==" => CmpOp::Eq,
            "!=" | "<>" => CmpOp::Ne,
            "<" => CmpOp::Lt,
            "<=" => CmpOp::Le,
            ">" => CmpOp::Gt,
            ">=" => CmpOp::Ge,
            _ => return None,
        })
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    pub fn test<T: PartialOrd + ?Sized>(self, lhs: &T, rhs: &T) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scalar {
    Int(i64),
    Str(String),
}

/// Conjunct of a relation's filter: `column op value`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predicate {
    pub column: ColumnDecl,
    pub op: CmpOp,
    pub value: Scalar,
}

impl Predicate {
    /// Builds a predicate, enforcing the typing rules: ordering comparisons
    /// only on int columns, and the literal must have the column's type.
    pub fn new(column: ColumnDecl, op: CmpOp, value: Scalar) -> Result<Self> {
        let p = Predicate { column, op, value };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        match (&self.column.ty, &self.value) {
            (ColumnType::Str, _) if self.op.is_ordering() => Err(Error::Config(format!(
                "ordering comparison on string column `{}`",
                self.column.name
            ))),
            (ColumnType::Int, Scalar::Int(_)) | (ColumnType::Str, Scalar::Str(_)) => Ok(()),
            (ty, value) => Err(Error::Config(format!(
                "literal {value:?} does not match {ty} column `{}`",
                self.column.name
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSpec {
    pub name: String,
    pub source: PathBuf,
    pub join_columns: Vec<ColumnDecl>,
    pub filters: Vec<Predicate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnRef {
    pub relation: String,
    pub column: String,
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.relation, self.column)
    }
}

/// Parsed and validated query document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySpec {
    pub relations: Vec<RelationSpec>,
    pub joins: Vec<(ColumnRef, ColumnRef)>,
}

impl QuerySpec {
    pub fn relation(&self, name: &str) -> Option<&RelationSpec> {
        self.relations.iter().find(|r| r.name == name)
    }

    /// Resolves relative `source` paths against `base` (usually the document's directory).
    pub fn resolve_sources(&mut self, base: &Path) {
        for rel in &mut self.relations {
            if rel.source.is_relative() {
                rel.source = base.join(&rel.source);
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuery {
    relations: Vec<RawRelation>,
    joins: Vec<[String; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRelation {
    name: String,
    source: String,
    join_columns: Vec<String>,
    #[serde(default)]
    filters: Vec<RawFilter>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFilter {
    column: String,
    op: String,
    value: serde_json::Value,
}

/// Separator for the names of fictitious self-join copies, e.g. `R0#copy1`.
pub const COPY_SEPARATOR: &str = "#copy";

/// Parses a query document.
///
/// A join whose two endpoints name the same relation is a self-join; the
/// right-hand endpoint is rebound to a fictitious copy of the relation that
/// reads the same source with the same filters.
pub fn parse_query(text: &str) -> Result<QuerySpec> {
    let raw: RawQuery = serde_json::from_str(text)
        .map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;

    if raw.relations.is_empty() {
        return Err(Error::parse("relations", "query has no relations"));
    }
    if raw.joins.is_empty() {
        return Err(Error::parse("joins", "query has no joins"));
    }

    let mut relations = Vec::with_capacity(raw.relations.len());
    let mut seen = HashSet::new();
    for (ri, r) in raw.relations.into_iter().enumerate() {
        let loc = format!("relations[{ri}]");
        if r.name.is_empty() || r.name.contains(COPY_SEPARATOR) {
            return Err(Error::parse(&loc, format!("invalid relation name `{}`", r.name)));
        }
        if !seen.insert(r.name.clone()) {
            return Err(Error::parse(&loc, format!("duplicate relation `{}`", r.name)));
        }
        let mut join_columns: Vec<ColumnDecl> = Vec::new();
        for (ci, c) in r.join_columns.iter().enumerate() {
            let (name, ty) = ColumnDecl::parse_annotated(c);
            if name.is_empty() || join_columns.iter().any(|d| d.name == name) {
                return Err(Error::parse(
                    format!("{loc}.join_columns[{ci}]"),
                    format!("empty or duplicate column `{c}`"),
                ));
            }
            join_columns.push(ColumnDecl::new(name, ty.unwrap_or(ColumnType::Str)));
        }
        let mut filters = Vec::with_capacity(r.filters.len());
        for (fi, f) in r.filters.iter().enumerate() {
            let floc = format!("{loc}.filters[{fi}]");
            filters.push(parse_filter(f, &join_columns).map_err(|e| match e {
                Error::Config(msg) => Error::parse(&floc, msg),
                other => other,
            })?);
        }
        relations.push(RelationSpec {
            name: r.name,
            source: PathBuf::from(r.source),
            join_columns,
            filters,
        });
    }

    let mut joins = Vec::with_capacity(raw.joins.len());
    for (ji, [lhs, rhs]) in raw.joins.iter().enumerate() {
        let a = resolve_column(&relations, lhs, &format!("joins[{ji}][0]"))?;
        let b = resolve_column(&relations, rhs, &format!("joins[{ji}][1]"))?;
        let ty_a = column_type(&relations, &a);
        let ty_b = column_type(&relations, &b);
        if ty_a != ty_b {
            return Err(Error::parse(
                format!("joins[{ji}]"),
                format!("cannot join {ty_a} column {a} with {ty_b} column {b}"),
            ));
        }
        joins.push((a, b));
    }

    expand_self_joins(&mut relations, &mut joins);
    Ok(QuerySpec { relations, joins })
}

fn parse_filter(f: &RawFilter, join_columns: &[ColumnDecl]) -> Result<Predicate> {
    let (name, annotated) = ColumnDecl::parse_annotated(&f.column);
    if name.is_empty() {
        return Err(Error::Config("empty filter column".into()));
    }
    let ty = annotated
        .or_else(|| join_columns.iter().find(|d| d.name == name).map(|d| d.ty))
        .unwrap_or(ColumnType::Str);
    let op = CmpOp::parse(f.op.trim()).ok_or_else(|| Error::Config(format!("unknown operator `{}`", f.op)))?;
    let value = match &f.value {
        serde_json::Value::String(s) => Scalar::Str(s.clone()),
        serde_json::Value::Number(n) => Scalar::Int(
            n.as_i64()
                .ok_or_else(|| Error::Config(format!("filter literal {n} is not a 64-bit integer")))?,
        ),
        other => return Err(Error::Config(format!("unsupported filter literal {other}"))),
    };
    Predicate::new(ColumnDecl::new(name, ty), op, value)
}

fn resolve_column(relations: &[RelationSpec], text: &str, loc: &str) -> Result<ColumnRef> {
    let text = text.trim();
    for rel in relations {
        if let Some(col) = text
            .strip_prefix(rel.name.as_str())
            .and_then(|rest| rest.strip_prefix('.'))
        {
            if rel.join_columns.iter().any(|c| c.name == col) {
                return Ok(ColumnRef {
                    relation: rel.name.clone(),
                    column: col.to_string(),
                });
            }
        }
    }
    Err(Error::parse(
        loc,
        format!("`{text}` does not name a declared join column"),
    ))
}

fn column_type(relations: &[RelationSpec], c: &ColumnRef) -> ColumnType {
    relations
        .iter()
        .find(|r| r.name == c.relation)
        .and_then(|r| r.join_columns.iter().find(|d| d.name == c.column))
        .map(|d| d.ty)
        .unwrap_or(ColumnType::Str)
}

fn expand_self_joins(relations: &mut Vec<RelationSpec>, joins: &mut [(ColumnRef, ColumnRef)]) {
    let mut copies = 0usize;
    for (lhs, rhs) in joins.iter_mut() {
        if lhs.relation != rhs.relation {
            continue;
        }
        copies += 1;
        let original = relations
            .iter()
            .find(|r| r.name == rhs.relation)
            .expect("join endpoints were resolved")
            .clone();
        let column = original
            .join_columns
            .iter()
            .find(|c| c.name == rhs.column)
            .expect("join endpoints were resolved")
            .clone();
        let copy = RelationSpec {
            name: format!("{}{COPY_SEPARATOR}{copies}", original.name),
            source: original.source.clone(),
            join_columns: vec![column],
            filters: original.filters.clone(),
        };
        rhs.relation = copy.name.clone();
        relations.push(copy);
    }
}

/// Joined attribute (graph vertex).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    pub relation: usize,
    pub column: String,
    pub ty: ColumnType,
}

/// Entry of an attribute's neighbour list: the joined attribute and the edge id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub attribute: usize,
    pub edge: usize,
}

/// Join graph of an acyclic query whose relation-level graph is a tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinGraph {
    relation_names: Vec<String>,
    omega: Vec<Vec<usize>>,
    attributes: Vec<Attribute>,
    edges: Vec<[usize; 2]>,
    gamma: Vec<Vec<Neighbor>>,
    component: Vec<usize>,
    labels: Vec<usize>,
    component_index: Vec<usize>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        // smaller root wins so that roots are component minima
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.0[hi] = lo;
        true
    }
}

impl JoinGraph {
    /// Builds the graph for a parsed query. Declared join columns that take
    /// part in no join are not attributes of the graph.
    pub fn build(spec: &QuerySpec) -> Result<JoinGraph> {
        let joined: HashSet<(&str, &str)> = spec
            .joins
            .iter()
            .flat_map(|(a, b)| [a, b])
            .map(|c| (c.relation.as_str(), c.column.as_str()))
            .collect();
        let mut attributes = Vec::new();
        for (ri, rel) in spec.relations.iter().enumerate() {
            for col in &rel.join_columns {
                if joined.contains(&(rel.name.as_str(), col.name.as_str())) {
                    attributes.push(Attribute {
                        relation: ri,
                        column: col.name.clone(),
                        ty: col.ty,
                    });
                }
            }
        }
        let names: Vec<String> = spec.relations.iter().map(|r| r.name.clone()).collect();
        let find = |c: &ColumnRef| -> Result<usize> {
            attributes
                .iter()
                .position(|a| names[a.relation] == c.relation && a.column == c.column)
                .ok_or_else(|| Error::InvalidQuery(format!("unknown join endpoint {c}")))
        };
        let mut edges = Vec::with_capacity(spec.joins.len());
        for (a, b) in &spec.joins {
            edges.push((find(a)?, find(b)?));
        }
        JoinGraph::new(names, attributes, &edges)
    }

    /// Builds a graph from relation arities: relation `k` owns the next
    /// `arity[k]` attribute ids. Intended for synthetic queries and tests.
    pub fn from_edges(arity: &[usize], edges: &[(usize, usize)]) -> Result<JoinGraph> {
        let names = (0..arity.len()).map(|k| format!("R{k}")).collect();
        let mut attributes = Vec::new();
        for (k, &n) in arity.iter().enumerate() {
            for _ in 0..n {
                let id = attributes.len();
                attributes.push(Attribute {
                    relation: k,
                    column: format!("a{id}"),
                    ty: ColumnType::Int,
                });
            }
        }
        JoinGraph::new(names, attributes, edges)
    }

    fn new(relation_names: Vec<String>, attributes: Vec<Attribute>, edge_list: &[(usize, usize)]) -> Result<JoinGraph> {
        let r = relation_names.len();
        let w = attributes.len();
        if edge_list.is_empty() {
            return Err(Error::InvalidQuery("query has no joins".into()));
        }
        let mut omega = vec![Vec::new(); r];
        for (id, a) in attributes.iter().enumerate() {
            if a.relation >= r {
                return Err(Error::InvalidQuery(format!(
                    "attribute {id} refers to missing relation {}",
                    a.relation
                )));
            }
            omega[a.relation].push(id);
        }

        let mut gamma = vec![Vec::new(); w];
        let mut edges = Vec::with_capacity(edge_list.len());
        let mut rel_uf = UnionFind::new(r);
        for (e, &(u, v)) in edge_list.iter().enumerate() {
            if u >= w || v >= w {
                return Err(Error::InvalidQuery(format!("edge {e} refers to a missing attribute")));
            }
            let (ru, rv) = (attributes[u].relation, attributes[v].relation);
            if ru == rv {
                return Err(Error::UnsupportedQuery(format!(
                    "join {u}-{v} stays inside relation `{}`; self-joins need a fictitious copy",
                    relation_names[ru]
                )));
            }
            if !rel_uf.union(ru, rv) {
                return Err(Error::UnsupportedQuery(format!(
                    "join graph is cyclic: join {}.{} = {}.{} closes a cycle",
                    relation_names[ru], attributes[u].column, relation_names[rv], attributes[v].column
                )));
            }
            gamma[u].push(Neighbor { attribute: v, edge: e });
            gamma[v].push(Neighbor { attribute: u, edge: e });
            edges.push([u, v]);
        }
        let root = rel_uf.find(0);
        if let Some(k) = (0..r).find(|&k| rel_uf.find(k) != root) {
            return Err(Error::UnsupportedQuery(format!(
                "relation `{}` is not connected to the rest of the query",
                relation_names[k]
            )));
        }
        if let Some(u) = (0..w).find(|&u| gamma[u].is_empty()) {
            return Err(Error::InvalidQuery(format!("attribute {u} takes part in no join")));
        }

        let mut attr_uf = UnionFind::new(w);
        for &[u, v] in &edges {
            attr_uf.union(u, v);
        }
        let component: Vec<usize> = (0..w).map(|u| attr_uf.find(u)).collect();
        let labels: Vec<usize> = component.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let component_index = component
            .iter()
            .map(|c| labels.binary_search(c).expect("label present"))
            .collect();

        Ok(JoinGraph {
            relation_names,
            omega,
            attributes,
            edges,
            gamma,
            component,
            labels,
            component_index,
        })
    }

    /// Number of joined attributes (`w`).
    pub fn num_attributes(&self) -> usize {
        self.attributes.len()
    }

    /// Number of relations (`r`).
    pub fn num_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn num_components(&self) -> usize {
        self.labels.len()
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relation_names.iter().position(|n| n == name)
    }

    pub fn attribute(&self, id: usize) -> &Attribute {
        &self.attributes[id]
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    /// Looks up `Rel.col`.
    pub fn attribute_by_name(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| {
            name.strip_prefix(self.relation_names[a.relation].as_str())
                .and_then(|rest| rest.strip_prefix('.'))
                == Some(a.column.as_str())
        })
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Joined attributes of relation `k` (Ω).
    pub fn omega(&self, relation: usize) -> &[usize] {
        &self.omega[relation]
    }

    /// Attributes joined with `u` (Γ), with the edge ids.
    pub fn gamma(&self, attribute: usize) -> &[Neighbor] {
        &self.gamma[attribute]
    }

    /// Component label (Ψ): the smallest attribute id in the component.
    pub fn component(&self, attribute: usize) -> usize {
        self.component[attribute]
    }

    /// Dense index of the component of `attribute` in `0..num_components()`.
    pub fn component_index(&self, attribute: usize) -> usize {
        self.component_index[attribute]
    }

    /// Sorted distinct component labels.
    pub fn component_labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn relation_of(&self, attribute: usize) -> usize {
        self.attributes[attribute].relation
    }
}

/// One relation visited by the combine recursion, entered through `attribute`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanNode {
    pub attribute: usize,
    pub relation: usize,
    /// The relation's other attributes, each with the subtrees hanging off it.
    pub branches: Vec<PlanBranch>,
    /// Subtrees joined directly on `attribute` (away from the root).
    pub joined: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanBranch {
    pub attribute: usize,
    pub children: Vec<usize>,
}

/// Rooted depth-first traversal of the join graph used at inference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanTree {
    root: usize,
    nodes: Vec<PlanNode>,
}

impl PlanTree {
    pub fn root_attribute(&self) -> usize {
        self.root
    }

    /// Nodes in creation order; `nodes()[0]` is the root.
    pub fn nodes(&self) -> &[PlanNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &PlanNode {
        &self.nodes[id]
    }

    /// Attributes of nodes with no branches and no joined subtrees.
    pub fn leaves(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.branches.is_empty() && n.joined.is_empty())
            .map(|n| n.attribute)
            .collect()
    }
}

/// Builds the traversal plan rooted at `root`, or at attribute 0 when `None`.
pub fn traversal_plan(graph: &JoinGraph, root: Option<usize>) -> Result<PlanTree> {
    let root = root.unwrap_or(0);
    if root >= graph.num_attributes() {
        return Err(Error::InvalidQuery(format!("unknown root attribute {root}")));
    }
    let mut visited = vec![false; graph.num_attributes()];
    let mut nodes = Vec::with_capacity(graph.num_relations());
    visit(graph, root, &mut visited, &mut nodes);
    Ok(PlanTree { root, nodes })
}

fn visit(graph: &JoinGraph, u: usize, visited: &mut [bool], nodes: &mut Vec<PlanNode>) -> usize {
    let relation = graph.relation_of(u);
    let id = nodes.len();
    nodes.push(PlanNode {
        attribute: u,
        relation,
        branches: Vec::new(),
        joined: Vec::new(),
    });
    visited[u] = true;

    let mut branches = Vec::new();
    for &other in graph.omega(relation).iter().filter(|&&a| a != u) {
        visited[other] = true;
        let children = graph
            .gamma(other)
            .iter()
            .map(|n| visit(graph, n.attribute, visited, nodes))
            .collect();
        branches.push(PlanBranch {
            attribute: other,
            children,
        });
    }
    let mut joined = Vec::new();
    for n in graph.gamma(u) {
        if !visited[n.attribute] {
            joined.push(visit(graph, n.attribute, visited, nodes));
        }
    }
    nodes[id].branches = branches;
    nodes[id].joined = joined;
    id
}

#[cfg(test)]
mod tests {
    use super::*;

    const BRANCHING: &str = r#"{
      "relations": [
        { "name": "R0", "source": "r0.csv", "join_columns": ["a0:int"] },
        { "name": "R1", "source": "r1.csv", "join_columns": ["a1:int", "a2:int"] },
        { "name": "R2", "source": "r2.csv", "join_columns": ["a3:int"] },
        { "name": "R3", "source": "r3.csv", "join_columns": ["a4:int"] }
      ],
      "joins": [["R0.a0", "R1.a1"], ["R2.a3", "R1.a1"], ["R3.a4", "R1.a2"]]
    }"#;

    fn branching() -> JoinGraph {
        JoinGraph::build(&parse_query(BRANCHING).unwrap()).unwrap()
    }

    #[test]
    fn parses_branching() {
        let q = parse_query(BRANCHING).unwrap();
        assert_eq!(q.relations.len(), 4);
        assert_eq!(q.joins.len(), 3);
        assert_eq!(q.relations[1].join_columns[1], ColumnDecl::new("a2", ColumnType::Int));
        let g = JoinGraph::build(&q).unwrap();
        let mut edges: Vec<[usize; 2]> = g.edges().iter().map(|&[a, b]| [a.min(b), a.max(b)]).collect();
        edges.sort();
        assert_eq!(edges, vec![[0, 1], [1, 3], [2, 4]]);
    }

    #[test]
    fn branching_structure() {
        let g = branching();
        assert_eq!(g.num_attributes(), 5);
        assert_eq!(g.omega(1), &[1, 2]);
        let mut gamma1: Vec<usize> = g.gamma(1).iter().map(|n| n.attribute).collect();
        gamma1.sort();
        assert_eq!(gamma1, vec![0, 3]);
        assert_eq!(g.component_labels(), &[0, 2]);
        for (u, label) in [(0, 0), (1, 0), (3, 0), (2, 2), (4, 2)] {
            assert_eq!(g.component(u), label);
        }
        assert_eq!(g.num_components(), g.num_attributes() - g.edges().len());
    }

    #[test]
    fn rejects_query_without_joins() {
        let err =
            parse_query(r#"{"relations":[{"name":"A","source":"a","join_columns":["x"]}],"joins":[]}"#).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
    }

    #[test]
    fn rejects_unknown_column_with_location() {
        let err = parse_query(
            r#"{"relations":[{"name":"A","source":"a","join_columns":["x"]},
                            {"name":"B","source":"b","join_columns":["y"]}],
               "joins":[["A.x","B.z"]]}"#,
        )
        .unwrap_err();
        match err {
            Error::Parse { location, .. } => assert_eq!(location, "joins[0][1]"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_malformed_predicates() {
        let doc = |filter: &str| {
            format!(
                r#"{{"relations":[{{"name":"A","source":"a","join_columns":["x"],"filters":[{filter}]}},
                                 {{"name":"B","source":"b","join_columns":["x"]}}],
                   "joins":[["A.x","B.x"]]}}"#
            )
        };
        for bad in [
            r#"{"column":"name","op":"<","value":"k"}"#,
            r#"{"column":"year:int","op":"~","value":3}"#,
            r#"{"column":"year:int","op":"=","value":"3"}"#,
            r#"{"column":"year:int","op":"=","value":2.5}"#,
        ] {
            let err = parse_query(&doc(bad)).unwrap_err();
            match err {
                Error::Parse { location, .. } => assert_eq!(location, "relations[0].filters[0]"),
                other => panic!("unexpected {other}"),
            }
        }
        assert!(parse_query(&doc(r#"{"column":"year:int","op":">=","value":1990}"#)).is_ok());
    }

    #[test]
    fn json_syntax_error_reports_line() {
        let err = parse_query("{\n  \"relations\": [,\n}").unwrap_err();
        match err {
            Error::Parse { location, .. } => assert!(location.starts_with("line 2"), "{location}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn self_join_expands_to_copy() {
        let q = parse_query(
            r#"{"relations":[{"name":"R0","source":"r0.csv","join_columns":["id","parent"]}],
               "joins":[["R0.id","R0.parent"]]}"#,
        )
        .unwrap();
        assert_eq!(q.relations.len(), 2);
        assert_eq!(q.relations[1].name, "R0#copy1");
        assert_eq!(q.relations[1].source, q.relations[0].source);
        assert_eq!(q.joins[0].1.relation, "R0#copy1");
        let g = JoinGraph::build(&q).unwrap();
        assert_eq!(g.num_relations(), 2);
        assert_eq!(g.edges().len(), 1);
        // `parent` is only joined through the copy
        assert_eq!(g.omega(0).len(), 1);
        assert_eq!(g.omega(1).len(), 1);
    }

    #[test]
    fn single_edge_graph() {
        let g = JoinGraph::from_edges(&[1, 1], &[(0, 1)]).unwrap();
        assert_eq!(g.num_attributes(), 2);
        assert_eq!(g.num_components(), 1);
        assert_eq!(g.component(0), g.component(1));
    }

    #[test]
    fn rejects_cycles() {
        // triangle R0-R1-R2-R0
        let err = JoinGraph::from_edges(&[2, 2, 2], &[(0, 2), (3, 4), (5, 1)]).unwrap_err();
        assert!(matches!(err, Error::UnsupportedQuery(_)), "{err}");
        // two joins between the same pair of relations
        let err = JoinGraph::from_edges(&[2, 2], &[(0, 2), (1, 3)]).unwrap_err();
        assert!(matches!(err, Error::UnsupportedQuery(_)), "{err}");
    }

    #[test]
    fn rejects_disconnected() {
        let err = JoinGraph::from_edges(&[1, 1, 1, 1], &[(0, 1), (2, 3)]).unwrap_err();
        assert!(matches!(err, Error::UnsupportedQuery(_)), "{err}");
        let err = JoinGraph::from_edges(&[1, 1, 1], &[(0, 1)]).unwrap_err();
        assert!(matches!(err, Error::UnsupportedQuery(_)), "{err}");
    }

    #[test]
    fn rejects_unjoined_attribute() {
        let err = JoinGraph::from_edges(&[2, 1], &[(0, 2)]).unwrap_err();
        assert!(matches!(err, Error::InvalidQuery(_)), "{err}");
    }

    #[test]
    fn plan_rooted_at_4_has_leaves_0_and_3() {
        let g = branching();
        let plan = traversal_plan(&g, Some(4)).unwrap();
        let mut leaves = plan.leaves();
        leaves.sort();
        assert_eq!(leaves, vec![0, 3]);
        assert_eq!(plan.nodes().len(), 4);
    }

    #[test]
    fn plan_auto_uses_attribute_zero() {
        let g = branching();
        let plan = traversal_plan(&g, None).unwrap();
        assert_eq!(plan.root_attribute(), 0);
        // R0 -> R1 (via 1), which branches on 2 -> R3 and joins 3 -> R2
        assert_eq!(plan.node(0).relation, 0);
        let r1 = plan.node(plan.node(0).joined[0]);
        assert_eq!((r1.attribute, r1.relation), (1, 1));
        assert_eq!(r1.branches.len(), 1);
        assert_eq!(r1.branches[0].attribute, 2);
        assert_eq!(plan.node(r1.branches[0].children[0]).attribute, 4);
        assert_eq!(plan.node(r1.joined[0]).attribute, 3);
    }

    #[test]
    fn plan_rejects_unknown_root() {
        assert!(traversal_plan(&branching(), Some(5)).is_err());
    }

    #[test]
    fn attribute_lookup_by_name() {
        let g = branching();
        assert_eq!(g.attribute_by_name("R1.a2"), Some(2));
        assert_eq!(g.attribute_by_name("R1.a9"), None);
    }
}
