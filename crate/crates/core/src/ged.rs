//! Graph similarity for store search: exact graph edit distance on small
//! graphs, label/edge-overlap Jaccard beyond.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::graph::{Graph, NodeId};

/// Largest node count (on either side) for exact edit distance.
pub const EXACT_GED_LIMIT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMethod {
    Exact,
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    /// In `(0, 1]`, higher is more similar.
    pub score: f64,
    pub method: SimilarityMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edit_distance: Option<f64>,
}

struct GedSearch<'a> {
    g1: &'a Graph,
    g2: &'a Graph,
    rows: Vec<NodeId>,
    cols: Vec<NodeId>,
    map: Vec<Option<usize>>,
    used: Vec<bool>,
    best: f64,
}

impl GedSearch<'_> {
    fn step_cost(&self, i: usize, target: Option<usize>) -> f64 {
        let u = self.rows[i];
        let mut cost = match target {
            Some(j) => (self.g1.label(u) != self.g2.label(self.cols[j])) as u8 as f64,
            None => 1.0,
        };
        for p in 0..i {
            let e1 = self.g1.has_edge(u, self.rows[p]);
            let e2 = match (target, self.map[p]) {
                (Some(j), Some(q)) => self.g2.has_edge(self.cols[j], self.cols[q]),
                _ => false,
            };
            if e1 != e2 {
                cost += 1.0;
            }
        }
        cost
    }

    fn closing_cost(&self) -> f64 {
        let free: Vec<usize> = (0..self.cols.len()).filter(|&j| !self.used[j]).collect();
        let mut cost = free.len() as f64;
        for e in self.g2.edges() {
            let ja = self.cols.binary_search(&e.a).unwrap();
            let jb = self.cols.binary_search(&e.b).unwrap();
            if !self.used[ja] || !self.used[jb] {
                cost += 1.0;
            }
        }
        cost
    }

    fn descend(&mut self, i: usize, acc: f64) {
        let remaining = self.rows.len() - i;
        let free = self.used.iter().filter(|u| !**u).count();
        let bound = acc + free.saturating_sub(remaining) as f64;
        if bound >= self.best {
            return;
        }
        if i == self.rows.len() {
            self.best = self.best.min(acc + self.closing_cost());
            return;
        }
        for j in 0..self.cols.len() {
            if self.used[j] {
                continue;
            }
            let c = self.step_cost(i, Some(j));
            self.used[j] = true;
            self.map[i] = Some(j);
            self.descend(i + 1, acc + c);
            self.map[i] = None;
            self.used[j] = false;
        }
        let c = self.step_cost(i, None);
        self.descend(i + 1, acc + c);
    }
}

/// Exact edit distance with unit node substitution, node insertion/deletion
/// and edge insertion/deletion costs. Exponential; meant for small graphs.
pub fn graph_edit_distance(g1: &Graph, g2: &Graph) -> f64 {
    let rows = g1.sorted_ids();
    let cols = g2.sorted_ids();
    // Upper bound: delete everything, insert everything.
    let best = (g1.node_count() + g1.edge_count() + g2.node_count() + g2.edge_count()) as f64 + 1.0;
    let mut s = GedSearch { g1, g2, map: vec![None; rows.len()], used: vec![false; cols.len()], rows, cols, best };
    s.descend(0, 0.0);
    s.best
}

fn multiset<I: IntoIterator<Item = String>>(items: I) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for x in items {
        *m.entry(x).or_insert(0) += 1;
    }
    m
}

fn jaccard(a: &BTreeMap<String, usize>, b: &BTreeMap<String, usize>) -> f64 {
    let mut inter = 0;
    let mut union = 0;
    for k in a.keys().chain(b.keys().filter(|k| !a.contains_key(*k))) {
        let (x, y) = (a.get(k).copied().unwrap_or(0), b.get(k).copied().unwrap_or(0));
        inter += x.min(y);
        union += x.max(y);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn edge_signatures(g: &Graph) -> BTreeMap<String, usize> {
    multiset(g.edges().iter().map(|e| {
        let (mut x, mut y) = (g.label(e.a).unwrap_or_default(), g.label(e.b).unwrap_or_default());
        if x > y {
            std::mem::swap(&mut x, &mut y);
        }
        format!("{x}|{y}")
    }))
}

/// Mean of node-label and edge-endpoint-label multiset Jaccard indices.
pub fn heuristic_similarity(g1: &Graph, g2: &Graph) -> f64 {
    let labels = |g: &Graph| multiset(g.nodes().iter().map(|n| n.label.clone()));
    0.5 * (jaccard(&labels(g1), &labels(g2)) + jaccard(&edge_signatures(g1), &edge_signatures(g2)))
}

/// `1 / (1 + GED)` when both graphs have at most [`EXACT_GED_LIMIT`] nodes,
/// otherwise the heuristic score.
pub fn similarity(g1: &Graph, g2: &Graph) -> Similarity {
    if g1.node_count().max(g2.node_count()) <= EXACT_GED_LIMIT {
        let d = graph_edit_distance(g1, g2);
        Similarity { score: 1.0 / (1.0 + d), method: SimilarityMethod::Exact, edit_distance: Some(d) }
    } else {
        Similarity { score: heuristic_similarity(g1, g2), method: SimilarityMethod::Heuristic, edit_distance: None }
    }
}
