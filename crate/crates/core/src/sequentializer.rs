//! Turns a graph into label sequences: length-bounded path covers of the
//! graph itself and of its triangle-motif super-graph.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::exec::{self, Exec};
use crate::graph::{edge_key, Graph, GraphBuilder, GraphError, NodeId};

/// A simple path, `nodes[0]` is the origin.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<NodeId>,
}

impl Path {
    pub fn origin(&self) -> NodeId {
        self.nodes[0]
    }

    /// Number of edges.
    pub fn len(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Traversed edges as canonical unordered pairs.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes.windows(2).map(|w| edge_key(w[0], w[1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathCoverConfig {
    /// Maximum path length in edges, at least 1.
    pub max_len: usize,
    /// Drop paths whose edges are already covered by retained paths of the
    /// same origin.
    pub minimize: bool,
    #[serde(default)]
    pub exec: Exec,
}

impl PathCoverConfig {
    pub fn new(max_len: usize, minimize: bool) -> Self {
        Self { max_len: max_len.max(1), minimize, exec: Exec::default() }
    }
}

impl Default for PathCoverConfig {
    fn default() -> Self {
        Self::new(2, true)
    }
}

/// All simple paths from `u` with 1..=`max_len` edges, in lexicographic
/// order of their node-id sequences.
pub fn enumerate_paths(g: &Graph, u: NodeId, max_len: usize) -> Result<Vec<Path>, GraphError> {
    if !g.contains(u) {
        return Err(GraphError::UnknownNode(u));
    }
    let mut out = Vec::new();
    let mut stack = vec![u];
    // Pre-order DFS over ascending neighbors emits paths in lexicographic
    // order (a prefix sorts before its extensions).
    fn dfs(g: &Graph, stack: &mut Vec<NodeId>, max_len: usize, out: &mut Vec<Path>) {
        if stack.len() > max_len {
            return;
        }
        let tail = *stack.last().unwrap();
        for &next in g.neighbors(tail) {
            if stack.contains(&next) {
                continue;
            }
            stack.push(next);
            out.push(Path { nodes: stack.clone() });
            dfs(g, stack, max_len, out);
            stack.pop();
        }
    }
    dfs(g, &mut stack, max_len, &mut out);
    Ok(out)
}

/// Per-origin path cover. Origins are visited in ascending id order and
/// the result is the concatenation of each origin's paths.
pub fn path_cover(g: &Graph, cfg: &PathCoverConfig) -> Vec<Path> {
    let ids = g.sorted_ids();
    let per_origin = exec::map_slice(cfg.exec, &ids, |&u| {
        let paths = enumerate_paths(g, u, cfg.max_len.max(1)).expect("origin taken from graph");
        if cfg.minimize {
            minimize_cover(paths)
        } else {
            paths
        }
    });
    per_origin.into_iter().flatten().collect()
}

/// Greedy subset elimination: longest paths first, a path is kept only if
/// it traverses an edge no kept path does. Output keeps lexicographic order.
fn minimize_cover(paths: Vec<Path>) -> Vec<Path> {
    let mut order: Vec<usize> = (0..paths.len()).collect();
    order.sort_by(|&i, &j| paths[j].len().cmp(&paths[i].len()).then_with(|| paths[i].cmp(&paths[j])));
    let mut covered = BTreeSet::new();
    let mut keep = vec![false; paths.len()];
    for i in order {
        let mut fresh = false;
        for e in paths[i].edges() {
            fresh |= covered.insert(e);
        }
        keep[i] = fresh;
    }
    paths.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuperNode {
    pub id: NodeId,
    pub members: BTreeSet<NodeId>,
    pub label: String,
}

/// Motif-level condensation of a base graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuperGraph {
    pub base: Graph,
    pub super_nodes: Vec<SuperNode>,
    /// Canonical `(min, max)` pairs of super-node ids, ascending.
    pub super_edges: Vec<(NodeId, NodeId)>,
}

impl SuperGraph {
    /// Super-node id holding `base_node`.
    pub fn owner(&self, base_node: NodeId) -> Option<NodeId> {
        self.super_nodes.iter().find(|s| s.members.contains(&base_node)).map(|s| s.id)
    }

    /// The super-graph as a plain graph labeled by motif labels.
    pub fn to_graph(&self) -> Graph {
        let mut b = GraphBuilder::new(format!("{}.super", self.base.name()));
        for s in &self.super_nodes {
            b.add_node(s.id, s.label.clone()).expect("unique super ids");
        }
        for &(x, y) in &self.super_edges {
            b.add_edge(x, y, None).expect("valid super edge");
        }
        b.build()
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Every triangle `(a, b, c)` with `a < b < c`, ascending.
pub fn triangles(g: &Graph) -> Vec<[NodeId; 3]> {
    let mut out = Vec::new();
    for e in g.edges() {
        let (a, b) = e.key();
        let nb = g.neighbors(b);
        for &c in g.neighbors(a) {
            if c > b && nb.binary_search(&c).is_ok() {
                out.push([a, b, c]);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Merges the nodes of every triangle into one super-node (transitively,
/// through shared nodes); nodes in no triangle become singletons.
/// Super-node ids are assigned in ascending order of smallest member.
pub fn condense_motifs(g: &Graph) -> SuperGraph {
    let ids = g.sorted_ids();
    let pos: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut uf = UnionFind::new(ids.len());
    for [a, b, c] in triangles(g) {
        uf.union(pos[&a], pos[&b]);
        uf.union(pos[&a], pos[&c]);
    }
    let mut groups: BTreeMap<usize, BTreeSet<NodeId>> = BTreeMap::new();
    for (i, &id) in ids.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().insert(id);
    }
    // Roots are the smallest member position, so BTreeMap order is the
    // smallest-member order.
    let mut owner = BTreeMap::new();
    let super_nodes: Vec<SuperNode> = groups
        .into_values()
        .enumerate()
        .map(|(sid, members)| {
            let sid = sid as NodeId;
            for &m in &members {
                owner.insert(m, sid);
            }
            SuperNode { id: sid, label: motif_label(g, &members), members }
        })
        .collect();
    let super_edges: BTreeSet<(NodeId, NodeId)> = g
        .edges()
        .iter()
        .filter_map(|e| {
            let (x, y) = (owner[&e.a], owner[&e.b]);
            (x != y).then(|| edge_key(x, y))
        })
        .collect();
    SuperGraph { base: g.clone(), super_nodes, super_edges: super_edges.into_iter().collect() }
}

/// Sorted member-label multiset, e.g. `{C,C,O}`.
fn motif_label(g: &Graph, members: &BTreeSet<NodeId>) -> String {
    let mut labels: Vec<&str> = members.iter().filter_map(|&m| g.label(m)).collect();
    labels.sort_unstable();
    format!("{{{}}}", labels.join(","))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Base,
    Super,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub level: Level,
    pub path: Path,
}

/// Label sequences at both levels. `base_provenance[i]` is the path that
/// produced `base_sequences[i]`; likewise for the super level.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceBundle {
    pub base_sequences: Vec<Vec<String>>,
    pub super_sequences: Vec<Vec<String>>,
    pub base_provenance: Vec<Provenance>,
    pub super_provenance: Vec<Provenance>,
}

impl SequenceBundle {
    pub fn is_empty(&self) -> bool {
        self.base_sequences.is_empty() && self.super_sequences.is_empty()
    }

    pub fn len(&self) -> usize {
        self.base_sequences.len() + self.super_sequences.len()
    }
}

fn label_sequences(g: &Graph, paths: &[Path], level: Level) -> (Vec<Vec<String>>, Vec<Provenance>) {
    paths
        .iter()
        .map(|p| {
            let seq = p.nodes.iter().map(|&n| g.label(n).unwrap_or_default().to_string()).collect();
            (seq, Provenance { level, path: p.clone() })
        })
        .unzip()
}

pub fn sequentialize(g: &Graph, cfg: &PathCoverConfig) -> SequenceBundle {
    let (base_sequences, base_provenance) = label_sequences(g, &path_cover(g, cfg), Level::Base);
    let sg = condense_motifs(g).to_graph();
    let (super_sequences, super_provenance) = label_sequences(&sg, &path_cover(&sg, cfg), Level::Super);
    SequenceBundle { base_sequences, super_sequences, base_provenance, super_provenance }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_graph;

    fn p(nodes: &[NodeId]) -> Path {
        Path { nodes: nodes.to_vec() }
    }

    fn path3() -> Graph {
        parse_graph("graph p\nnode 0 C\nnode 1 O\nnode 2 N\nedge 0 1\nedge 1 2").unwrap()
    }

    fn triangle() -> Graph {
        parse_graph("graph t\nnode 0 C\nnode 1 C\nnode 2 O\nedge 0 1\nedge 1 2\nedge 0 2").unwrap()
    }

    #[test]
    fn enumerate_on_path() {
        let g = path3();
        assert_eq!(enumerate_paths(&g, 0, 1).unwrap(), vec![p(&[0, 1])]);
        assert_eq!(enumerate_paths(&g, 1, 1).unwrap(), vec![p(&[1, 0]), p(&[1, 2])]);
        assert!(enumerate_paths(&g, 7, 1).is_err());
    }

    #[test]
    fn enumerate_on_triangle() {
        let got = enumerate_paths(&triangle(), 0, 2).unwrap();
        assert_eq!(got, vec![p(&[0, 1]), p(&[0, 1, 2]), p(&[0, 2]), p(&[0, 2, 1])]);
    }

    #[test]
    fn cover_of_path_l1() {
        for minimize in [false, true] {
            let got = path_cover(&path3(), &PathCoverConfig::new(1, minimize));
            assert_eq!(got, vec![p(&[0, 1]), p(&[1, 0]), p(&[1, 2]), p(&[2, 1])]);
        }
    }

    #[test]
    fn minimize_drops_prefixes() {
        let got = path_cover(&path3(), &PathCoverConfig::new(2, true));
        assert_eq!(got, vec![p(&[0, 1, 2]), p(&[1, 0]), p(&[1, 2]), p(&[2, 1, 0])]);
    }

    #[test]
    fn single_node_has_empty_cover() {
        let g = parse_graph("graph s\nnode 0 C").unwrap();
        assert!(path_cover(&g, &PathCoverConfig::new(4, false)).is_empty());
        assert!(path_cover(&Graph::empty("e"), &PathCoverConfig::default()).is_empty());
    }

    #[test]
    fn triangle_condenses_to_one() {
        let sg = condense_motifs(&triangle());
        assert_eq!(sg.super_nodes.len(), 1);
        assert_eq!(sg.super_nodes[0].label, "{C,C,O}");
        assert!(sg.super_edges.is_empty());
    }

    #[test]
    fn path_condenses_to_singletons() {
        let sg = condense_motifs(&path3());
        assert_eq!(sg.super_nodes.len(), 3);
        assert_eq!(sg.super_edges, vec![(0, 1), (1, 2)]);
        assert_eq!(sg.super_nodes[1].label, "{O}");
    }

    #[test]
    fn bowtie_merges_through_shared_node() {
        let g = parse_graph(
            "graph b\nnode 0 C\nnode 1 C\nnode 2 C\nnode 3 C\nnode 4 C\nnode 5 N\n\
             edge 0 1\nedge 1 2\nedge 0 2\nedge 2 3\nedge 3 4\nedge 2 4\nedge 4 5",
        )
        .unwrap();
        let sg = condense_motifs(&g);
        assert_eq!(sg.super_nodes.len(), 2);
        assert_eq!(sg.super_nodes[0].members, BTreeSet::from([0, 1, 2, 3, 4]));
        assert_eq!(sg.super_edges, vec![(0, 1)]);
        assert_eq!(sg.owner(5), Some(1));
    }

    #[test]
    fn sequences_of_labeled_path() {
        let b = sequentialize(&path3(), &PathCoverConfig::new(1, false));
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(b.base_sequences, vec![s(&["C", "O"]), s(&["O", "C"]), s(&["O", "N"]), s(&["N", "O"])]);
        assert_eq!(b.super_sequences[0], s(&["{C}", "{O}"]));
        assert_eq!(b.base_provenance[2].path, p(&[1, 2]));
        assert!(sequentialize(&Graph::empty("e"), &PathCoverConfig::default()).is_empty());
    }
}
