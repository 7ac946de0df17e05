//! τ-MG proximity graph for approximate nearest-neighbor search.
//!
//! Construction scans, for every node `u`, all other points nearest-first
//! and keeps `v` unless an already-kept neighbor `w` occludes it:
//!
//! ```text
//! δ(u,w) < δ(u,v)  and  δ(v,w) < δ(u,v) − 3τ
//! ```
//!
//! i.e. `w` lies in the open intersection of `ball(u, δ(u,v))` and
//! `ball(v, δ(u,v) − 3τ)`. The medoid is the routing entry point, and nodes
//! not reachable from it get a repair edge from their nearest reachable
//! node. Queries run a best-first beam search from the entry point.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Exec};

pub const DEFAULT_MAX_DEGREE: usize = 32;
pub const DEFAULT_BEAM: usize = 32;
/// τ as a fraction of the mean pairwise distance.
pub const DEFAULT_TAU_FRACTION: f32 = 0.05;
const TAU_SAMPLE: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("vector set is empty")]
    Empty,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("tau must be finite and non-negative, got {0}")]
    InvalidTau(f32),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("index does not match vector set: {0}")]
    Mismatch(String),
}

/// Dense set of equal-length vectors with ids `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorSet {
    dim: usize,
    data: Vec<f32>,
}

impl VectorSet {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f32>]) -> Result<Self, IndexError> {
        let mut set = Self::new(dim);
        for r in rows {
            set.push(r)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, v: &[f32]) -> Result<u32, IndexError> {
        if v.len() != self.dim {
            return Err(IndexError::DimensionMismatch { expected: self.dim, found: v.len() });
        }
        self.data.extend_from_slice(v);
        Ok((self.len() - 1) as u32)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: u32) -> &[f32] {
        let s = id as usize * self.dim;
        &self.data[s..s + self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    /// Parses `<n> <d>` followed by `n` rows of `d` reals.
    pub fn parse(text: &str) -> Result<Self, IndexError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or(IndexError::Parse { line: 1, message: "missing header".into() })?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| IndexError::Parse { line: hl + 1, message: format!("bad header token `{t}`") }))
            .collect::<Result<_, _>>()?;
        let [n, d] = nums[..] else {
            return Err(IndexError::Parse { line: hl + 1, message: "expected `<n> <d>`".into() });
        };
        let mut set = Self::new(d);
        for (ln, line) in lines {
            let row: Vec<f32> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| IndexError::Parse { line: ln + 1, message: format!("bad real `{t}`") }))
                .collect::<Result<_, _>>()?;
            set.push(&row).map_err(|e| IndexError::Parse { line: ln + 1, message: e.to_string() })?;
        }
        if set.len() != n {
            return Err(IndexError::Parse { line: hl + 1, message: format!("header declares {n} vectors, found {}", set.len()) });
        }
        Ok(set)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim);
        for row in self.iter() {
            let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Euclidean distance.
pub fn euclidean(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f32>().sqrt()
}

/// Whether `w` (a kept neighbor of `u`) occludes the edge `u → v`.
pub fn occluded(u: &[f32], v: &[f32], w: &[f32], tau: f32) -> Result<bool, IndexError> {
    for x in [v, w] {
        if x.len() != u.len() {
            return Err(IndexError::DimensionMismatch { expected: u.len(), found: x.len() });
        }
    }
    if !(tau >= 0.0) {
        return Err(IndexError::InvalidTau(tau));
    }
    Ok(occludes(euclidean(u, v), euclidean(u, w), euclidean(v, w), tau))
}

#[inline]
fn occludes(d_uv: f32, d_uw: f32, d_vw: f32, tau: f32) -> bool {
    d_uw < d_uv && d_vw < d_uv - 3.0 * tau
}

/// `(distance, id)` ordering used for every ranking in the index.
#[inline]
fn closer(a: (f32, u32), b: (f32, u32)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexParams {
    pub tau: f32,
    /// Cap on occlusion-built out-degree; `usize::MAX` for none.
    pub max_degree: usize,
    #[serde(default)]
    pub exec: Exec,
}

impl IndexParams {
    pub fn new(tau: f32) -> Self {
        Self { tau, max_degree: DEFAULT_MAX_DEGREE, exec: Exec::default() }
    }

    pub fn with_max_degree(mut self, max_degree: usize) -> Self {
        self.max_degree = max_degree;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }
}

/// `DEFAULT_TAU_FRACTION` × mean pairwise distance over a sample of at most
/// 1000 points.
pub fn default_tau(set: &VectorSet, seed: u64) -> f32 {
    DEFAULT_TAU_FRACTION * mean_pairwise_distance(set, seed)
}

pub fn mean_pairwise_distance(set: &VectorSet, seed: u64) -> f32 {
    let n = set.len();
    if n < 2 {
        return 0.0;
    }
    let ids: Vec<u32> = if n <= TAU_SAMPLE {
        (0..n as u32).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s: Vec<u32> = sample(&mut rng, n, TAU_SAMPLE).into_iter().map(|i| i as u32).collect();
        s.sort_unstable();
        s
    };
    let mut sum = 0.0f64;
    let mut count = 0u64;
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            sum += euclidean(set.get(a), set.get(b)) as f64;
            count += 1;
        }
    }
    (sum / count as f64) as f32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnResult {
    pub id: u32,
    pub distance: f32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    /// Number of expanded nodes.
    pub hops: usize,
    pub distance_evals: usize,
    /// Expanded nodes in expansion order.
    pub trace: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauMgIndex {
    tau: f32,
    dim: usize,
    entry: u32,
    /// Out-neighbors; the first `built[u]` come from occlusion filtering in
    /// scan order, the rest are reachability repairs.
    adjacency: Vec<Vec<u32>>,
    built: Vec<usize>,
}

/// Per-node result of the occlusion scan.
struct NodeScan {
    kept: Vec<u32>,
    distance_sum: f64,
}

fn scan_node(set: &VectorSet, u: u32, tau: f32, max_degree: usize) -> NodeScan {
    let n = set.len();
    let pu = set.get(u);
    let mut cands: Vec<(f32, u32)> = Vec::with_capacity(n.saturating_sub(1));
    let mut distance_sum = 0.0f64;
    for v in 0..n as u32 {
        if v != u {
            let d = euclidean(pu, set.get(v));
            distance_sum += d as f64;
            cands.push((d, v));
        }
    }
    let mut kept: Vec<(f32, u32)> = Vec::new();
    // Sort lazily in growing chunks: most scans stop at `max_degree` long
    // before the candidate list is exhausted.
    let mut sorted_upto = 0;
    let mut chunk = 256usize;
    let mut idx = 0;
    while idx < cands.len() && kept.len() < max_degree {
        if idx == sorted_upto {
            let rest = &mut cands[sorted_upto..];
            let take = chunk.min(rest.len());
            if take < rest.len() {
                rest.select_nth_unstable_by(take - 1, |a, b| closer(*a, *b));
            }
            rest[..take].sort_unstable_by(|a, b| closer(*a, *b));
            sorted_upto += take;
            chunk *= 2;
        }
        let (d_uv, v) = cands[idx];
        idx += 1;
        let pv = set.get(v);
        let blocked = kept.iter().any(|&(d_uw, w)| d_uw < d_uv && occludes(d_uv, d_uw, euclidean(pv, set.get(w)), tau));
        if !blocked {
            kept.push((d_uv, v));
        }
    }
    NodeScan { kept: kept.into_iter().map(|(_, v)| v).collect(), distance_sum }
}

impl TauMgIndex {
    pub fn build(set: &VectorSet, params: &IndexParams) -> Result<Self, IndexError> {
        if set.is_empty() {
            return Err(IndexError::Empty);
        }
        if !(params.tau >= 0.0) || !params.tau.is_finite() {
            return Err(IndexError::InvalidTau(params.tau));
        }
        let n = set.len();
        let scans = exec::map_range(params.exec, n, |u| scan_node(set, u as u32, params.tau, params.max_degree));
        let entry = scans
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.distance_sum.total_cmp(&b.1.distance_sum).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i as u32)
            .unwrap();
        let adjacency: Vec<Vec<u32>> = scans.into_iter().map(|s| s.kept).collect();
        let built = adjacency.iter().map(Vec::len).collect();
        let mut index = Self { tau: params.tau, dim: set.dim(), entry, adjacency, built };
        index.repair_reachability(set);
        Ok(index)
    }

    /// Adds an edge from the nearest reachable node to each unreachable
    /// node (smallest id first) until everything is reachable from the
    /// entry point.
    fn repair_reachability(&mut self, set: &VectorSet) {
        let n = self.adjacency.len();
        let mut reached = vec![false; n];
        self.mark_reachable(self.entry, &mut reached);
        while let Some(x) = reached.iter().position(|r| !r) {
            let px = set.get(x as u32);
            let y = (0..n as u32)
                .filter(|&y| reached[y as usize])
                .map(|y| (euclidean(set.get(y), px), y))
                .min_by(|a, b| closer(*a, *b))
                .map(|(_, y)| y)
                .expect("entry point is reachable");
            self.adjacency[y as usize].push(x as u32);
            self.mark_reachable(x as u32, &mut reached);
        }
    }

    fn mark_reachable(&self, from: u32, reached: &mut [bool]) {
        if reached[from as usize] {
            return;
        }
        reached[from as usize] = true;
        let mut queue = VecDeque::from([from]);
        while let Some(x) = queue.pop_front() {
            for &y in &self.adjacency[x as usize] {
                if !reached[y as usize] {
                    reached[y as usize] = true;
                    queue.push_back(y);
                }
            }
        }
    }

    pub fn tau(&self) -> f32 {
        self.tau
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn entry_point(&self) -> u32 {
        self.entry
    }

    pub fn neighbors(&self, u: u32) -> &[u32] {
        &self.adjacency[u as usize]
    }

    /// Neighbors kept by the occlusion scan, in scan order.
    pub fn built_neighbors(&self, u: u32) -> &[u32] {
        &self.adjacency[u as usize][..self.built[u as usize]]
    }

    pub fn repair_neighbors(&self, u: u32) -> &[u32] {
        &self.adjacency[u as usize][self.built[u as usize]..]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn repair_edge_count(&self) -> usize {
        self.adjacency.iter().zip(&self.built).map(|(a, b)| a.len() - b).sum()
    }

    pub fn is_reachable_from_entry(&self) -> bool {
        let mut reached = vec![false; self.len()];
        self.mark_reachable(self.entry, &mut reached);
        reached.iter().all(|&r| r)
    }

    fn check_query(&self, set: &VectorSet, query: &[f32]) -> Result<(), IndexError> {
        if set.len() != self.len() || set.dim() != self.dim {
            return Err(IndexError::Mismatch(format!(
                "index has {} vectors of dim {}, set has {} of dim {}",
                self.len(),
                self.dim,
                set.len(),
                set.dim()
            )));
        }
        if query.len() != self.dim {
            return Err(IndexError::DimensionMismatch { expected: self.dim, found: query.len() });
        }
        Ok(())
    }

    /// The `k` approximate nearest neighbors of `query`.
    pub fn search(&self, set: &VectorSet, query: &[f32], k: usize, beam: usize) -> Result<Vec<AnnResult>, IndexError> {
        self.search_with_stats(set, query, k, beam).map(|(r, _)| r)
    }

    /// Best-first beam search. The pool holds the `beam` closest nodes seen
    /// so far; the closest unexpanded pool entry is expanded next, and the
    /// search stops once every pool entry has been expanded. `beam` is
    /// raised to `k` if smaller.
    pub fn search_with_stats(
        &self,
        set: &VectorSet,
        query: &[f32],
        k: usize,
        beam: usize,
    ) -> Result<(Vec<AnnResult>, SearchStats), IndexError> {
        self.check_query(set, query)?;
        let k = k.max(1);
        let beam = beam.max(k);
        let mut stats = SearchStats::default();
        let mut visited = vec![false; self.len()];
        let mut pool: Vec<(f32, u32, bool)> = Vec::with_capacity(beam + 1);
        let d0 = euclidean(set.get(self.entry), query);
        stats.distance_evals += 1;
        visited[self.entry as usize] = true;
        pool.push((d0, self.entry, false));
        while let Some(pos) = pool.iter().position(|p| !p.2) {
            pool[pos].2 = true;
            let u = pool[pos].1;
            stats.hops += 1;
            stats.trace.push(u);
            for &v in &self.adjacency[u as usize] {
                if std::mem::replace(&mut visited[v as usize], true) {
                    continue;
                }
                let d = euclidean(set.get(v), query);
                stats.distance_evals += 1;
                if pool.len() == beam && closer((d, v), (pool[beam - 1].0, pool[beam - 1].1)) != Ordering::Less {
                    continue;
                }
                let at = pool.partition_point(|p| closer((p.0, p.1), (d, v)) == Ordering::Less);
                pool.insert(at, (d, v, false));
                pool.truncate(beam);
            }
        }
        let results = pool.iter().take(k).map(|&(distance, id, _)| AnnResult { id, distance }).collect();
        Ok((results, stats))
    }

    /// Checks every occlusion-built edge against the neighbors kept before
    /// it, that kept neighbors are in scan order, and (for nodes below the
    /// degree cap) that every dropped candidate is occluded by a neighbor
    /// closer to `u`.
    pub fn audit(&self, set: &VectorSet, max_degree: usize) -> Result<AuditReport, IndexError> {
        if set.len() != self.len() || set.dim() != self.dim {
            return Err(IndexError::Mismatch("vector set does not match index".into()));
        }
        let per_node = exec::map_range(Exec::default(), self.len(), |u| self.audit_node(set, u as u32, max_degree));
        let mut report = AuditReport::default();
        for r in per_node {
            report.edges_checked += r.edges_checked;
            report.triples_checked += r.triples_checked;
            report.violations.extend(r.violations);
            report.order_violations.extend(r.order_violations);
            report.missing_witnesses.extend(r.missing_witnesses);
        }
        report.reachable = self.is_reachable_from_entry();
        Ok(report)
    }

    fn audit_node(&self, set: &VectorSet, u: u32, max_degree: usize) -> AuditReport {
        let mut report = AuditReport::default();
        let pu = set.get(u);
        let kept = self.built_neighbors(u);
        for (p, &v) in kept.iter().enumerate() {
            report.edges_checked += 1;
            let d_uv = euclidean(pu, set.get(v));
            for &w in &kept[..p] {
                report.triples_checked += 1;
                let d_uw = euclidean(pu, set.get(w));
                if occludes(d_uv, d_uw, euclidean(set.get(v), set.get(w)), self.tau) {
                    report.violations.push((u, v, w));
                }
                if closer((d_uw, w), (d_uv, v)) != Ordering::Less {
                    report.order_violations.push((u, w, v));
                }
            }
        }
        if kept.len() < max_degree {
            for v in 0..self.len() as u32 {
                if v == u || kept.contains(&v) {
                    continue;
                }
                let d_uv = euclidean(pu, set.get(v));
                let witnessed = kept.iter().any(|&w| {
                    let d_uw = euclidean(pu, set.get(w));
                    closer((d_uw, w), (d_uv, v)) == Ordering::Less
                        && occludes(d_uv, d_uw, euclidean(set.get(v), set.get(w)), self.tau)
                });
                if !witnessed {
                    report.missing_witnesses.push((u, v));
                }
            }
        }
        report
    }

    /// Text form: `taumg <n> <d> <tau> <entry>`, then `edges <id> <nbr>*` for
    /// occlusion-built edges and `repair <id> <nbr>*` for repair edges.
    pub fn to_text(&self) -> String {
        let mut out = format!("taumg {} {} {} {}\n", self.len(), self.dim, self.tau, self.entry);
        for (u, adj) in self.adjacency.iter().enumerate() {
            let (b, r) = adj.split_at(self.built[u]);
            let _ = write!(out, "edges {u}");
            for v in b {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
            if !r.is_empty() {
                let _ = write!(out, "repair {u}");
                for v in r {
                    let _ = write!(out, " {v}");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, IndexError> {
        let err = |line: usize, message: String| IndexError::Parse { line, message };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 5 || h[0] != "taumg" {
            return Err(err(hl + 1, "expected `taumg <n> <d> <tau> <entry>`".into()));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| err(hl + 1, format!("bad number `{s}`")));
        let (n, dim) = (num(h[1])?, num(h[2])?);
        let tau: f32 = h[3].parse().map_err(|_| err(hl + 1, format!("bad tau `{}`", h[3])))?;
        let entry = num(h[4])? as u32;
        if n == 0 || entry as usize >= n {
            return Err(err(hl + 1, "entry point out of range".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        let mut repairs = vec![Vec::new(); n];
        for (ln, line) in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            let ids: Vec<u32> = toks[1..]
                .iter()
                .map(|t| match t.parse::<u32>() {
                    Ok(v) if (v as usize) < n => Ok(v),
                    _ => Err(err(ln + 1, format!("bad node id `{t}`"))),
                })
                .collect::<Result<_, _>>()?;
            let Some((&u, nbrs)) = ids.split_first() else {
                return Err(err(ln + 1, "missing node id".into()));
            };
            match toks[0] {
                "edges" => adjacency[u as usize] = nbrs.to_vec(),
                "repair" => repairs[u as usize] = nbrs.to_vec(),
                other => return Err(err(ln + 1, format!("unknown record `{other}`"))),
            }
        }
        let built = adjacency.iter().map(Vec::len).collect();
        for (a, r) in adjacency.iter_mut().zip(repairs) {
            a.extend(r);
        }
        Ok(Self { tau, dim, entry, adjacency, built })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub edges_checked: usize,
    pub triples_checked: usize,
    /// `(u, v, w)`: kept edge `u → v` occluded by earlier-kept `w`.
    pub violations: Vec<(u32, u32, u32)>,
    /// `(u, w, v)`: `w` kept before `v` but not closer to `u`.
    pub order_violations: Vec<(u32, u32, u32)>,
    /// `(u, v)`: dropped candidate with no occluding witness.
    pub missing_witnesses: Vec<(u32, u32)>,
    pub reachable: bool,
}

impl AuditReport {
    pub fn is_sound(&self) -> bool {
        self.violations.is_empty() && self.order_violations.is_empty() && self.missing_witnesses.is_empty() && self.reachable
    }
}

/// Exact `k` nearest neighbors by full scan, sorted by distance then id.
pub fn brute_force(set: &VectorSet, query: &[f32], k: usize) -> Result<Vec<AnnResult>, IndexError> {
    if query.len() != set.dim() {
        return Err(IndexError::DimensionMismatch { expected: set.dim(), found: query.len() });
    }
    let mut all: Vec<(f32, u32)> = (0..set.len() as u32).map(|i| (euclidean(set.get(i), query), i)).collect();
    let k = k.min(all.len());
    if k == 0 {
        return Ok(Vec::new());
    }
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, |a, b| closer(*a, *b));
        all.truncate(k);
    }
    all.sort_unstable_by(|a, b| closer(*a, *b));
    Ok(all.into_iter().map(|(distance, id)| AnnResult { id, distance }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_set(xs: &[f32]) -> VectorSet {
        VectorSet::from_rows(1, &xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn occlusion_examples() {
        assert!(occluded(&[0.0, 0.0], &[4.0, 0.0], &[2.0, 0.0], 0.1).unwrap());
        assert!(!occluded(&[0.0, 0.0], &[4.0, 0.0], &[0.0, 3.0], 0.1).unwrap());
        assert!(occluded(&[0.0, 0.0], &[2.0, 0.0], &[1.0, 0.5], 0.0).unwrap());
        assert!(matches!(occluded(&[0.0], &[1.0, 0.0], &[0.0], 0.0), Err(IndexError::DimensionMismatch { .. })));
        assert!(occluded(&[0.0], &[1.0], &[0.5], -1.0).is_err());
    }

    #[test]
    fn boundary_is_open() {
        // δ(v,w) exactly equals δ(u,v) − 3τ: not occluded.
        assert!(occluded(&[0.0], &[4.0], &[1.0], 0.0).unwrap());
        assert!(!occluded(&[0.0], &[4.0], &[2.0], 2.0 / 3.0).unwrap());
    }

    #[test]
    fn single_point() {
        let set = line_set(&[3.0]);
        let idx = TauMgIndex::build(&set, &IndexParams::new(0.0)).unwrap();
        assert_eq!(idx.entry_point(), 0);
        assert_eq!(idx.edge_count(), 0);
        let r = idx.search(&set, &[10.0], 1, 4).unwrap();
        assert_eq!(r, vec![AnnResult { id: 0, distance: 7.0 }]);
    }

    #[test]
    fn collinear_occlusion() {
        let set = line_set(&[0.0, 1.0, 2.0]);
        let idx = TauMgIndex::build(&set, &IndexParams::new(0.0)).unwrap();
        assert_eq!(idx.built_neighbors(0), &[1]);
        assert_eq!(idx.built_neighbors(1), &[0, 2]);
        assert_eq!(idx.built_neighbors(2), &[1]);
        assert_eq!(idx.entry_point(), 1);
        assert!(idx.audit(&set, usize::MAX).unwrap().is_sound());
    }

    #[test]
    fn empty_and_bad_tau() {
        assert_eq!(TauMgIndex::build(&VectorSet::new(2), &IndexParams::new(0.0)), Err(IndexError::Empty));
        assert!(matches!(TauMgIndex::build(&line_set(&[0.0]), &IndexParams::new(f32::NAN)), Err(IndexError::InvalidTau(_))));
    }

    #[test]
    fn brute_force_orders_by_distance_then_id() {
        let set = line_set(&[0.0, 2.0, -2.0, 5.0]);
        let r = brute_force(&set, &[0.0], 4).unwrap();
        assert_eq!(r.iter().map(|a| a.id).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(r[0].distance, 0.0);
        assert_eq!(brute_force(&set, &[0.0], 10).unwrap().len(), 4);
    }

    #[test]
    fn text_round_trips() {
        let set = line_set(&[0.0, 1.0, 2.0, 10.0, 11.5]);
        let idx = TauMgIndex::build(&set, &IndexParams::new(0.1).with_max_degree(1)).unwrap();
        assert!(idx.repair_edge_count() > 0 || idx.is_reachable_from_entry());
        assert_eq!(TauMgIndex::parse(&idx.to_text()).unwrap(), idx);
        assert_eq!(VectorSet::parse(&set.to_text()).unwrap(), set);
        assert!(VectorSet::parse("2 1\n0.5\n").is_err());
        assert!(TauMgIndex::parse("taumg 1 1 0 3\n").is_err());
    }

    #[test]
    fn degree_cap_still_reachable() {
        let set = line_set(&[0.0, 0.1, 0.2, 5.0, 5.1, 9.0]);
        let idx = TauMgIndex::build(&set, &IndexParams::new(0.0).with_max_degree(1)).unwrap();
        assert!(idx.is_reachable_from_entry());
        for q in [0.0f32, 5.05, 9.0] {
            let got = idx.search(&set, &[q], 1, 6).unwrap();
            assert_eq!(got, brute_force(&set, &[q], 1).unwrap());
        }
    }
}
