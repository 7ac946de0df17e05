//! Node-matching loss between two API chains.
//!
//! For a binary matching `M` between the steps of a generated chain `C` and
//! a reference chain `C'` the loss is `X(M) + α·Y(M)`:
//!
//! * `X` is the edit cost induced by `M`: substitutions on matched pairs,
//!   one unit per unmatched step on either side, and one unit per
//!   consecutive pair (on either side) whose two endpoints are matched but
//!   whose images are not consecutive, in order, on the other side.
//! * `Y = Σ_i (1 − Σ_k M[i][k])² + Σ_k (1 − Σ_i M[i][k])²` pushes `M`
//!   toward a one-to-one matching.
//!
//! [`optimal_matching`] minimizes over hard (one-to-one, possibly partial)
//! matchings: exhaustively up to [`EXACT_LIMIT`] steps per side, otherwise
//! via an assignment solve followed by local improvement.
//! Argument bindings are ignored; only api ids are compared.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::ApiChain;
use crate::exec::{self, Exec};

/// Largest chain length (on either side) solved by exhaustive enumeration.
pub const EXACT_LIMIT: usize = 7;

/// Cost of matching two steps with different api ids.
pub const SUBSTITUTION_COST: f64 = 1.0;
/// Cost of an unmatched step (insertion or deletion).
pub const INDEL_COST: f64 = 1.0;
/// Cost of a consecutive pair whose matched images are not consecutive.
pub const EDGE_COST: f64 = 1.0;

pub const DEFAULT_ALPHA: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("matching is {rows}x{cols} but the chains have {expected_rows} and {expected_cols} steps")]
    DimensionMismatch { rows: usize, cols: usize, expected_rows: usize, expected_cols: usize },
    #[error("alpha must be positive, got {0}")]
    InvalidAlpha(f64),
}

/// Binary `rows × cols` matrix, `M[i][j] = 1` when step `i` of the generated
/// chain is matched to step `j` of the reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchingMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<bool>,
}

impl MatchingMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![false; rows * cols] }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![true; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    /// Builds a one-to-one matrix from a row assignment.
    pub fn from_assignment(assignment: &[Option<usize>], cols: usize) -> Self {
        let mut m = Self::zeros(assignment.len(), cols);
        for (i, j) in assignment.iter().enumerate() {
            if let Some(j) = *j {
                m.set(i, j, true);
            }
        }
        m
    }

    /// Builds a matrix from `(row, col)` pairs.
    pub fn from_pairs(rows: usize, cols: usize, pairs: &[(usize, usize)]) -> Self {
        let mut m = Self::zeros(rows, cols);
        for &(i, j) in pairs {
            m.set(i, j, true);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.entries[i * self.cols + j] = value;
    }

    pub fn row_sum(&self, i: usize) -> usize {
        (0..self.cols).filter(|&j| self.get(i, j)).count()
    }

    pub fn col_sum(&self, j: usize) -> usize {
        (0..self.rows).filter(|&i| self.get(i, j)).count()
    }

    pub fn is_one_to_one(&self) -> bool {
        (0..self.rows).all(|i| self.row_sum(i) <= 1) && (0..self.cols).all(|j| self.col_sum(j) <= 1)
    }

    /// Matched `(row, col)` pairs in row-major order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.rows).flat_map(|i| (0..self.cols).filter(move |&j| self.get(i, j)).map(move |j| (i, j))).collect()
    }

    /// Row assignment, `None` if some row has more than one match.
    pub fn assignment(&self) -> Option<Vec<Option<usize>>> {
        (0..self.rows)
            .map(|i| match self.row_sum(i) {
                0 => Some(None),
                1 => Some((0..self.cols).find(|&j| self.get(i, j))),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub x: f64,
    pub y: f64,
    pub alpha: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(x: f64, y: f64, alpha: f64) -> Self {
        Self { x, y, alpha, total: x + alpha * y }
    }
}

fn check_dims(c: &ApiChain, r: &ApiChain, m: &MatchingMatrix) -> Result<(), MetricError> {
    if m.rows != c.len() || m.cols != r.len() {
        return Err(MetricError::DimensionMismatch {
            rows: m.rows,
            cols: m.cols,
            expected_rows: c.len(),
            expected_cols: r.len(),
        });
    }
    Ok(())
}

/// Matching-induced edit cost `X(M)`.
///
/// Also defined for matrices that are not one-to-one: every `1` entry is a
/// matched pair, and a consecutive pair `(i, i+1)` is preserved when some
/// `j` has `M[i][j] = M[i+1][j+1] = 1`.
pub fn edit_cost(c: &ApiChain, r: &ApiChain, m: &MatchingMatrix) -> Result<f64, MetricError> {
    check_dims(c, r, m)?;
    let mut cost = 0.0;
    for (i, j) in m.pairs() {
        if c.steps[i].api != r.steps[j].api {
            cost += SUBSTITUTION_COST;
        }
    }
    let unmatched = (0..m.rows).filter(|&i| m.row_sum(i) == 0).count() + (0..m.cols).filter(|&j| m.col_sum(j) == 0).count();
    cost += INDEL_COST * unmatched as f64;
    let preserved = |i: usize, j: usize| m.get(i, j) && m.get(i + 1, j + 1);
    for i in 0..m.rows.saturating_sub(1) {
        if m.row_sum(i) > 0 && m.row_sum(i + 1) > 0 && !(0..m.cols.saturating_sub(1)).any(|j| preserved(i, j)) {
            cost += EDGE_COST;
        }
    }
    for j in 0..m.cols.saturating_sub(1) {
        if m.col_sum(j) > 0 && m.col_sum(j + 1) > 0 && !(0..m.rows.saturating_sub(1)).any(|i| preserved(i, j)) {
            cost += EDGE_COST;
        }
    }
    Ok(cost)
}

/// One-to-one regularizer `Y(M)`.
pub fn regularizer(c: &ApiChain, r: &ApiChain, m: &MatchingMatrix) -> Result<f64, MetricError> {
    check_dims(c, r, m)?;
    let sq = |s: usize| {
        let d = 1.0 - s as f64;
        d * d
    };
    let rows: f64 = (0..m.rows).map(|i| sq(m.row_sum(i))).sum();
    let cols: f64 = (0..m.cols).map(|j| sq(m.col_sum(j))).sum();
    Ok(rows + cols)
}

pub fn loss(c: &ApiChain, r: &ApiChain, m: &MatchingMatrix, alpha: f64) -> Result<LossBreakdown, MetricError> {
    if !(alpha > 0.0) {
        return Err(MetricError::InvalidAlpha(alpha));
    }
    Ok(LossBreakdown::new(edit_cost(c, r, m)?, regularizer(c, r, m)?, alpha))
}

/// Which solver produced a matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Exhaustive,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingResult {
    pub matching: MatchingMatrix,
    pub loss: LossBreakdown,
    pub solver: Solver,
}

/// Chains reduced to interned symbols; the working form of the solvers.
struct Problem {
    a: Vec<u32>,
    b: Vec<u32>,
    alpha: f64,
}

impl Problem {
    fn new<'a>(c: &'a ApiChain, r: &'a ApiChain, alpha: f64) -> Self {
        let mut intern: HashMap<&'a str, u32> = HashMap::new();
        let mut sym = |s: &'a str| {
            let next = intern.len() as u32;
            *intern.entry(s).or_insert(next)
        };
        let a: Vec<u32> = c.steps.iter().map(|s| sym(&s.api)).collect();
        let b: Vec<u32> = r.steps.iter().map(|s| sym(&s.api)).collect();
        Self { a, b, alpha }
    }

    /// `(X, Y)` for a one-to-one assignment of rows. `col_of` is the
    /// inverse assignment.
    fn evaluate(&self, row: &[Option<usize>], col_of: &[Option<usize>]) -> (f64, f64) {
        let mut x = 0.0;
        let mut unmatched = 0usize;
        for (i, j) in row.iter().enumerate() {
            match *j {
                Some(j) if self.a[i] != self.b[j] => x += SUBSTITUTION_COST,
                Some(_) => {}
                None => unmatched += 1,
            }
        }
        unmatched += col_of.iter().filter(|c| c.is_none()).count();
        x += INDEL_COST * unmatched as f64;
        for w in row.windows(2) {
            if let (Some(p), Some(q)) = (w[0], w[1]) {
                if q != p + 1 {
                    x += EDGE_COST;
                }
            }
        }
        for w in col_of.windows(2) {
            if let (Some(p), Some(q)) = (w[0], w[1]) {
                if q != p + 1 {
                    x += EDGE_COST;
                }
            }
        }
        // Hard one-to-one: each unmatched step contributes (1 - 0)^2.
        (x, unmatched as f64)
    }

    fn total(&self, row: &[Option<usize>], col_of: &[Option<usize>]) -> f64 {
        let (x, y) = self.evaluate(row, col_of);
        x + self.alpha * y
    }

    fn result(&self, row: Vec<Option<usize>>, solver: Solver) -> MatchingResult {
        let col_of = inverse(&row, self.b.len());
        let (x, y) = self.evaluate(&row, &col_of);
        MatchingResult {
            matching: MatchingMatrix::from_assignment(&row, self.b.len()),
            loss: LossBreakdown::new(x, y, self.alpha),
            solver,
        }
    }
}

fn inverse(row: &[Option<usize>], cols: usize) -> Vec<Option<usize>> {
    let mut col_of = vec![None; cols];
    for (i, j) in row.iter().enumerate() {
        if let Some(j) = *j {
            col_of[j] = Some(i);
        }
    }
    col_of
}

/// Per-row choices in tie-break order. Row-major lexicographic order on
/// binary matrices prefers an all-zero row, then a `1` as far right as
/// possible.
fn row_choices(cols: usize) -> Vec<Option<usize>> {
    std::iter::once(None).chain((0..cols).rev().map(Some)).collect()
}

struct Search<'p> {
    problem: &'p Problem,
    row: Vec<Option<usize>>,
    col_of: Vec<Option<usize>>,
    best: Option<(f64, Vec<Option<usize>>)>,
    choices: Vec<Option<usize>>,
}

impl Search<'_> {
    /// Cost of rows `..=i` that no later choice can change: substitutions,
    /// unmatched rows and the row-side edge term.
    fn row_cost(&self, i: usize) -> f64 {
        let p = self.problem;
        let mut c = match self.row[i] {
            None => INDEL_COST + p.alpha,
            Some(j) if p.a[i] != p.b[j] => SUBSTITUTION_COST,
            Some(_) => 0.0,
        };
        if i > 0 {
            if let (Some(q), Some(j)) = (self.row[i - 1], self.row[i]) {
                if j != q + 1 {
                    c += EDGE_COST;
                }
            }
        }
        c
    }

    /// Branch-and-bound over the remaining rows. Choices are tried in
    /// tie-break order and only strictly better leaves replace the best, so
    /// pruning at `bound >= best` keeps the lexicographic winner.
    fn descend(&mut self, i: usize, acc: f64) {
        let n = self.problem.a.len();
        let free = self.col_of.iter().filter(|c| c.is_none()).count();
        let bound = acc + (INDEL_COST + self.problem.alpha) * free.saturating_sub(n - i) as f64;
        if self.best.as_ref().is_some_and(|(b, _)| bound >= *b) {
            return;
        }
        if i == n {
            let total = self.problem.total(&self.row, &self.col_of);
            if self.best.as_ref().is_none_or(|(b, _)| total < *b) {
                self.best = Some((total, self.row.clone()));
            }
            return;
        }
        for k in 0..self.choices.len() {
            let choice = self.choices[k];
            if let Some(j) = choice {
                if self.col_of[j].is_some() {
                    continue;
                }
                self.col_of[j] = Some(i);
            }
            self.row[i] = choice;
            let c = self.row_cost(i);
            self.descend(i + 1, acc + c);
            self.row[i] = None;
            if let Some(j) = choice {
                self.col_of[j] = None;
            }
        }
    }
}

fn exhaustive(problem: &Problem, exec: Exec) -> Vec<Option<usize>> {
    let (n, m) = (problem.a.len(), problem.b.len());
    if n == 0 {
        return Vec::new();
    }
    let choices = row_choices(m);
    // Branch on the first row; branches are in tie-break order, so the
    // first minimum across branches is the lexicographically smallest.
    let branch_exec = if n.max(m) >= 6 { exec } else { Exec::Sequential };
    let branches = exec::map_slice(branch_exec, &choices, |&first| {
        let mut s = Search {
            problem,
            row: vec![None; n],
            col_of: vec![None; m],
            best: None,
            choices: choices.clone(),
        };
        s.row[0] = first;
        if let Some(j) = first {
            s.col_of[j] = Some(0);
        }
        let c = s.row_cost(0);
        s.descend(1, c);
        s.best
    });
    let mut best: Option<(f64, Vec<Option<usize>>)> = None;
    for (total, row) in branches.into_iter().flatten() {
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((total, row));
        }
    }
    best.expect("at least the empty matching").1
}

/// Minimum-cost perfect assignment on a square matrix (Kuhn–Munkres with
/// potentials). Returns the column assigned to each row.
pub(crate) fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

fn heuristic(problem: &Problem) -> Vec<Option<usize>> {
    let (n, m) = (problem.a.len(), problem.b.len());
    // Node-cost assignment with dummy rows/cols for unmatched steps. An
    // unmatched step costs one indel unit plus α from the regularizer.
    let big = 1e9;
    let unmatched_cost = INDEL_COST + problem.alpha;
    let size = n + m;
    // Breaks node-cost ties toward order-preserving pairs; too small to
    // outweigh one unit of node cost.
    let skew = 0.5 / (size as f64 + 1.0);
    let mut cost = vec![vec![0.0; size]; size];
    for (i, row) in cost.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = match (i < n, j < m) {
                (true, true) => {
                    let sub = if problem.a[i] == problem.b[j] { 0.0 } else { SUBSTITUTION_COST };
                    sub + skew * (i as f64 / n as f64 - j as f64 / m as f64).abs()
                }
                (true, false) => {
                    if j - m == i {
                        unmatched_cost
                    } else {
                        big
                    }
                }
                (false, true) => {
                    if i - n == j {
                        unmatched_cost
                    } else {
                        big
                    }
                }
                (false, false) => 0.0,
            };
        }
    }
    let assigned = hungarian(&cost);
    let mut row: Vec<Option<usize>> = (0..n).map(|i| (assigned[i] < m).then_some(assigned[i])).collect();
    improve_locally(problem, &mut row);
    let mut aligned = alignment(problem);
    improve_locally(problem, &mut aligned);
    let cost_of = |r: &[Option<usize>]| problem.total(r, &inverse(r, m));
    if cost_of(&aligned) < cost_of(&row) {
        aligned
    } else {
        row
    }
}

/// Order-preserving alignment by edit-distance dynamic programming, with
/// unmatched steps priced like in the assignment.
fn alignment(problem: &Problem) -> Vec<Option<usize>> {
    let (n, m) = (problem.a.len(), problem.b.len());
    let gap = INDEL_COST + problem.alpha;
    let mut d = vec![vec![0.0; m + 1]; n + 1];
    for i in 0..=n {
        for j in 0..=m {
            d[i][j] = match (i, j) {
                (0, _) => gap * j as f64,
                (_, 0) => gap * i as f64,
                _ => {
                    let sub = if problem.a[i - 1] == problem.b[j - 1] { 0.0 } else { SUBSTITUTION_COST };
                    (d[i - 1][j - 1] + sub).min(d[i - 1][j] + gap).min(d[i][j - 1] + gap)
                }
            };
        }
    }
    let mut row = vec![None; n];
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        let sub = if problem.a[i - 1] == problem.b[j - 1] { 0.0 } else { SUBSTITUTION_COST };
        if d[i][j] == d[i - 1][j - 1] + sub {
            row[i - 1] = Some(j - 1);
            i -= 1;
            j -= 1;
        } else if d[i][j] == d[i - 1][j] + gap {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    row
}

/// First-improvement local search over reassign, unmatch and pairwise-swap
/// moves on the full objective.
fn improve_locally(problem: &Problem, row: &mut [Option<usize>]) {
    let (n, m) = (problem.a.len(), problem.b.len());
    let mut col_of = inverse(row, m);
    let mut current = problem.total(row, &col_of);
    loop {
        let mut improved = false;
        'moves: for i in 0..n {
            for k in i + 1..n {
                if row[i] == row[k] {
                    continue;
                }
                row.swap(i, k);
                let cand = inverse(row, m);
                let t = problem.total(row, &cand);
                if t < current {
                    current = t;
                    col_of = cand;
                    improved = true;
                    break 'moves;
                }
                row.swap(i, k);
            }
            let original = row[i];
            for target in row_choices(m) {
                if target == original || target.is_some_and(|j| col_of[j].is_some()) {
                    continue;
                }
                row[i] = target;
                let cand = inverse(row, m);
                let t = problem.total(row, &cand);
                if t < current {
                    current = t;
                    col_of = cand;
                    improved = true;
                    break 'moves;
                }
                row[i] = original;
            }
        }
        if !improved {
            return;
        }
    }
}

/// Minimum-loss hard matching between `c` and `r`.
pub fn optimal_matching(c: &ApiChain, r: &ApiChain, alpha: f64) -> MatchingResult {
    optimal_matching_with(c, r, alpha, Exec::default())
}

pub fn optimal_matching_with(c: &ApiChain, r: &ApiChain, alpha: f64, exec: Exec) -> MatchingResult {
    if c.len().max(r.len()) <= EXACT_LIMIT {
        exhaustive_matching(c, r, alpha, exec)
    } else {
        heuristic_matching(c, r, alpha)
    }
}

/// Exhaustive minimum over all partial injective matchings, ties broken
/// toward the lexicographically smallest matrix in row-major order.
pub fn exhaustive_matching(c: &ApiChain, r: &ApiChain, alpha: f64, exec: Exec) -> MatchingResult {
    let p = Problem::new(c, r, alpha);
    let row = exhaustive(&p, exec);
    p.result(row, Solver::Exhaustive)
}

/// Assignment solve on node costs and an order-preserving alignment, each
/// locally improved; the cheaper wins. Not guaranteed optimal.
pub fn heuristic_matching(c: &ApiChain, r: &ApiChain, alpha: f64) -> MatchingResult {
    let p = Problem::new(c, r, alpha);
    let row = heuristic(&p);
    p.result(row, Solver::Heuristic)
}

/// Optimal total loss only.
pub fn chain_distance(c: &ApiChain, r: &ApiChain, alpha: f64) -> f64 {
    optimal_matching_with(c, r, alpha, Exec::Sequential).loss.total
}
