//! Labeled undirected simple graphs and the line-oriented graph document
//! format.
//!
//! ```text
//! graph <name>
//! node <id> [<label>]
//! edge <src> <dst> [<edge-label>]
//! ```
//!
//! Blank lines and `#` comments are ignored. Serialization is canonical:
//! nodes ascending by id, edges ascending by `(min, max)` pair.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Label given to nodes declared without one.
pub const UNLABELED: &str = "_";

pub type NodeId = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: edge endpoint {id} references an undeclared node")]
    DanglingEndpoint { line: usize, id: NodeId },
    #[error("line {line}: duplicate node id {id}")]
    DuplicateNode { line: usize, id: NodeId },
    #[error("line {line}: self-loop on node {id}")]
    SelfLoop { line: usize, id: NodeId },
    #[error("line {line}: duplicate edge {a}-{b}")]
    DuplicateEdge { line: usize, a: NodeId, b: NodeId },
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub label: String,
}

/// Undirected edge, stored with `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Edge {
    pub fn key(&self) -> (NodeId, NodeId) {
        (self.a, self.b)
    }
}

/// Canonical unordered pair.
pub fn edge_key(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// An immutable labeled undirected simple graph.
///
/// Node order is the insertion (file) order; equality ignores it and
/// compares canonical forms.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    name: String,
    nodes: Vec<NodeRecord>,
    edges: Vec<Edge>,
    position: HashMap<NodeId, usize>,
    /// Neighbor node ids per node position, ascending.
    adjacency: Vec<Vec<NodeId>>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    name: String,
    nodes: Vec<NodeRecord>,
    edges: Vec<Edge>,
}

impl TryFrom<GraphRepr> for Graph {
    type Error = GraphError;
    fn try_from(r: GraphRepr) -> Result<Self, GraphError> {
        let mut b = GraphBuilder::new(r.name);
        for n in r.nodes {
            b.add_node(n.id, n.label)?;
        }
        for e in r.edges {
            b.add_edge(e.a, e.b, e.label)?;
        }
        Ok(b.build())
    }
}

impl From<Graph> for GraphRepr {
    fn from(g: Graph) -> Self {
        GraphRepr { name: g.name, nodes: g.nodes, edges: g.edges }
    }
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.sorted_nodes() == other.sorted_nodes() && self.sorted_edges() == other.sorted_edges()
    }
}

impl Eq for Graph {}

/// Incremental, validating graph constructor.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    name: String,
    nodes: Vec<NodeRecord>,
    edges: Vec<Edge>,
    position: HashMap<NodeId, usize>,
    edge_set: BTreeSet<(NodeId, NodeId)>,
    line: usize,
}

impl GraphBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            nodes: Vec::new(),
            edges: Vec::new(),
            position: HashMap::new(),
            edge_set: BTreeSet::new(),
            line: 0,
        }
    }

    pub fn add_node(&mut self, id: NodeId, label: impl Into<String>) -> Result<&mut Self, GraphError> {
        if self.position.contains_key(&id) {
            return Err(GraphError::DuplicateNode { line: self.line, id });
        }
        let mut label = label.into();
        if label.trim().is_empty() {
            label = UNLABELED.to_string();
        }
        self.position.insert(id, self.nodes.len());
        self.nodes.push(NodeRecord { id, label });
        Ok(self)
    }

    pub fn add_edge(&mut self, u: NodeId, v: NodeId, label: Option<String>) -> Result<&mut Self, GraphError> {
        let line = self.line;
        for id in [u, v] {
            if !self.position.contains_key(&id) {
                return Err(GraphError::DanglingEndpoint { line, id });
            }
        }
        if u == v {
            return Err(GraphError::SelfLoop { line, id: u });
        }
        let (a, b) = edge_key(u, v);
        if !self.edge_set.insert((a, b)) {
            return Err(GraphError::DuplicateEdge { line, a, b });
        }
        self.edges.push(Edge { a, b, label });
        Ok(self)
    }

    pub fn build(self) -> Graph {
        let mut adjacency = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adjacency[self.position[&e.a]].push(e.b);
            adjacency[self.position[&e.b]].push(e.a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Graph { name: self.name, nodes: self.nodes, edges: self.edges, position: self.position, adjacency }
    }
}

impl Graph {
    pub fn empty(name: impl Into<String>) -> Self {
        GraphBuilder::new(name).build()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.position.contains_key(&id)
    }

    pub fn label(&self, id: NodeId) -> Option<&str> {
        self.position.get(&id).map(|&p| self.nodes[p].label.as_str())
    }

    /// Neighbors of `id`, ascending. Empty for unknown ids.
    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        self.position.get(&id).map(|&p| self.adjacency[p].as_slice()).unwrap_or(&[])
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.neighbors(id).len()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    /// Node ids in ascending order.
    pub fn sorted_ids(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self.node_ids().collect();
        ids.sort_unstable();
        ids
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    fn sorted_nodes(&self) -> Vec<&NodeRecord> {
        let mut v: Vec<&NodeRecord> = self.nodes.iter().collect();
        v.sort_by_key(|n| n.id);
        v
    }

    fn sorted_edges(&self) -> Vec<&Edge> {
        let mut v: Vec<&Edge> = self.edges.iter().collect();
        v.sort();
        v
    }

    /// Hop distances from `source` to every reachable node.
    pub fn bfs_distances(&self, source: NodeId) -> Result<HashMap<NodeId, usize>, GraphError> {
        if !self.contains(source) {
            return Err(GraphError::UnknownNode(source));
        }
        let mut dist = HashMap::from([(source, 0usize)]);
        let mut queue = VecDeque::from([source]);
        while let Some(x) = queue.pop_front() {
            let d = dist[&x];
            for &y in self.neighbors(x) {
                if let std::collections::hash_map::Entry::Vacant(slot) = dist.entry(y) {
                    slot.insert(d + 1);
                    queue.push_back(y);
                }
            }
        }
        Ok(dist)
    }

    /// Induced subgraph on the nodes within `hops` of `u`.
    pub fn khop_subgraph(&self, u: NodeId, hops: usize) -> Result<Graph, GraphError> {
        let dist = self.bfs_distances(u)?;
        let keep = |id: &NodeId| dist.get(id).is_some_and(|&d| d <= hops);
        Ok(self.induced(keep))
    }

    /// Subgraph induced by the nodes accepted by `keep`, in original order.
    pub fn induced(&self, keep: impl Fn(&NodeId) -> bool) -> Graph {
        let mut b = GraphBuilder::new(self.name.clone());
        for n in self.nodes.iter().filter(|n| keep(&n.id)) {
            b.add_node(n.id, n.label.clone()).expect("unique ids");
        }
        for e in self.edges.iter().filter(|e| keep(&e.a) && keep(&e.b)) {
            b.add_edge(e.a, e.b, e.label.clone()).expect("valid edge");
        }
        b.build()
    }
}

/// Parses a graph document.
pub fn parse_graph(text: &str) -> Result<Graph, GraphError> {
    let mut builder: Option<GraphBuilder> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| GraphError::Parse { line: line_no, message };
        let mut tokens = line.split_whitespace();
        let keyword = tokens.next().unwrap_or_default();
        let rest: Vec<&str> = tokens.collect();
        let Some(b) = builder.as_mut() else {
            if keyword != "graph" || rest.len() != 1 {
                return Err(parse_err("expected `graph <name>` header".into()));
            }
            builder = Some(GraphBuilder::new(rest[0]));
            continue;
        };
        b.line = line_no;
        let id = |s: &str| s.parse::<NodeId>().map_err(|_| parse_err(format!("invalid node id `{s}`")));
        match keyword {
            "node" => {
                if rest.is_empty() || rest.len() > 2 {
                    return Err(parse_err("expected `node <id> [<label>]`".into()));
                }
                let label = rest.get(1).copied().unwrap_or(UNLABELED);
                b.add_node(id(rest[0])?, label)?;
            }
            "edge" => {
                if rest.len() < 2 || rest.len() > 3 {
                    return Err(parse_err("expected `edge <src> <dst> [<label>]`".into()));
                }
                b.add_edge(id(rest[0])?, id(rest[1])?, rest.get(2).map(|s| s.to_string()))?;
            }
            "graph" => return Err(parse_err("duplicate graph header".into())),
            other => return Err(parse_err(format!("unknown record `{other}`"))),
        }
    }
    builder
        .map(GraphBuilder::build)
        .ok_or_else(|| GraphError::Parse { line: 1, message: "missing `graph <name>` header".into() })
}

/// Canonical text form.
pub fn serialize_graph(g: &Graph) -> String {
    let mut out = format!("graph {}\n", g.name);
    for n in g.sorted_nodes() {
        let _ = writeln!(out, "node {} {}", n.id, n.label);
    }
    for e in g.sorted_edges() {
        match &e.label {
            Some(l) => {
                let _ = writeln!(out, "edge {} {} {}", e.a, e.b, l);
            }
            None => {
                let _ = writeln!(out, "edge {} {}", e.a, e.b);
            }
        }
    }
    out
}
